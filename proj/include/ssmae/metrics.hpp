#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssmae {

struct FilterStats {
    int seen = 0;
    int accepted = 0;
    int low_conf_weak = 0;
    int low_conf_strong = 0;
    int inconsistent = 0;
    int correct = 0;  // accepted pseudo-labels matching the hidden label
    std::vector<int> class_hist;

    double accept_rate() const { return seen ? static_cast<double>(accepted) / seen : 0.0; }
};

/// One line of the metrics stream (JSON object per line, stable field names).
struct MetricsRecord {
    std::string stage = "pretrain";
    int epoch = 0;
    int steps = 0;
    std::optional<double> loss_recon;  // absent when reconstruction is disabled
    double loss_sup = 0.0;
    double loss_pseudo = 0.0;
    double loss_total = 0.0;
    bool gate = false;  // gate applied during this epoch
    double lambda_p_eff = 0.0;
    bool gate_next = false;
    int below_count = 0;
    double val_conf_acc = 0.0;
    int val_accepted = 0;
    std::optional<double> val_acc;
    FilterStats filter;
    std::optional<double> test_acc;
    double wall_time_s = 0.0;
};

std::string to_json_line(const MetricsRecord& record);
MetricsRecord from_json_line(const std::string& line);

void append_metrics(const std::filesystem::path& file, const MetricsRecord& record);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& file);

}  // namespace ssmae
