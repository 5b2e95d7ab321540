#include "ssmae/metrics.hpp"

#include "ssmae/tensor.hpp"

#include <json.hpp>

#include <fstream>

namespace ssmae {

using nlohmann::json;

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_get(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
    json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["steps"] = r.steps;
    j["loss_recon"] = opt(r.loss_recon);
    j["loss_sup"] = r.loss_sup;
    j["loss_pseudo"] = r.loss_pseudo;
    j["loss_total"] = r.loss_total;
    j["gate"] = r.gate ? 1 : 0;
    j["lambda_p_eff"] = r.lambda_p_eff;
    j["gate_next"] = r.gate_next ? 1 : 0;
    j["below_count"] = r.below_count;
    j["val_conf_acc"] = r.val_conf_acc;
    j["val_accepted"] = r.val_accepted;
    j["val_acc"] = opt(r.val_acc);
    j["filter"] = {{"seen", r.filter.seen},
                   {"accepted", r.filter.accepted},
                   {"accept_rate", r.filter.accept_rate()},
                   {"low_conf_weak", r.filter.low_conf_weak},
                   {"low_conf_strong", r.filter.low_conf_strong},
                   {"inconsistent", r.filter.inconsistent},
                   {"correct", r.filter.correct},
                   {"class_hist", r.filter.class_hist}};
    j["test_acc"] = opt(r.test_acc);
    j["wall_time_s"] = r.wall_time_s;
    return j.dump();
}

MetricsRecord from_json_line(const std::string& line) {
    MetricsRecord r;
    try {
        const json j = json::parse(line);
        r.stage = j.at("stage").get<std::string>();
        r.epoch = j.at("epoch").get<int>();
        r.steps = j.at("steps").get<int>();
        r.loss_recon = opt_get<double>(j, "loss_recon");
        r.loss_sup = j.at("loss_sup").get<double>();
        r.loss_pseudo = j.at("loss_pseudo").get<double>();
        r.loss_total = j.at("loss_total").get<double>();
        r.gate = j.at("gate").get<int>() != 0;
        r.lambda_p_eff = j.at("lambda_p_eff").get<double>();
        r.gate_next = j.at("gate_next").get<int>() != 0;
        r.below_count = j.at("below_count").get<int>();
        r.val_conf_acc = j.at("val_conf_acc").get<double>();
        r.val_accepted = j.at("val_accepted").get<int>();
        r.val_acc = opt_get<double>(j, "val_acc");
        const json& f = j.at("filter");
        r.filter.seen = f.at("seen").get<int>();
        r.filter.accepted = f.at("accepted").get<int>();
        r.filter.low_conf_weak = f.at("low_conf_weak").get<int>();
        r.filter.low_conf_strong = f.at("low_conf_strong").get<int>();
        r.filter.inconsistent = f.at("inconsistent").get<int>();
        r.filter.correct = f.value("correct", 0);
        r.filter.class_hist = f.at("class_hist").get<std::vector<int>>();
        r.test_acc = opt_get<double>(j, "test_acc");
        r.wall_time_s = j.at("wall_time_s").get<double>();
    } catch (const json::exception& e) {
        throw Error("metrics", std::string("malformed metrics record: ") + e.what());
    }
    return r;
}

void append_metrics(const std::filesystem::path& file, const MetricsRecord& record) {
    std::ofstream out(file, std::ios::app);
    if (!out) throw Error("io", "cannot append to " + file.string());
    out << to_json_line(record) << '\n';
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("io", "cannot open metrics " + file.string());
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(from_json_line(line));
    }
    return out;
}

}  // namespace ssmae
