#pragma once

#include "ssmae/checkpoint.hpp"
#include "ssmae/data_pipeline.hpp"
#include "ssmae/metrics.hpp"
#include "ssmae/run_config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssmae {

/// Loaded data, splits and normalisation for one RunConfig.
class Session {
public:
    explicit Session(RunConfig config);

    const RunConfig& config() const { return config_; }
    const LoadedData& data() const { return data_; }
    const Splits& splits() const { return splits_; }

    /// Raw [0, 1] image -> network input.
    Image network_input(const Image& raw) const { return data_.stats.normalize(raw); }
    Classifier classifier(const NetworkParams& params) const;

    /// Indexed views for evaluation ("train", "test", "labeled", "unlabeled", "val").
    SampleSource samples(const std::string& split_name, std::size_t* count) const;

private:
    RunConfig config_;
    LoadedData data_;
    Splits splits_;
};

struct StageResult {
    std::vector<MetricsRecord> records;
    std::filesystem::path last_checkpoint;
    NetworkParams params;
    std::optional<double> test_acc;
};

struct PretrainOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume;
    /// Stop (after checkpointing) once this many epochs are complete.
    std::optional<int> stop_after_epoch;
    bool verbose = true;
};

/// Dual-objective pretraining with the gated pseudo-label branch.
StageResult pretrain(const Session& session, const PretrainOptions& options);

struct FinetuneOptions {
    std::filesystem::path out_dir;
    /// Starting point; nullopt trains from a random initialisation.
    std::optional<std::filesystem::path> checkpoint;
    bool allow_config_mismatch = false;
    bool verbose = true;
};

/// Labeled-only fine-tuning at zero masking with the decoder frozen.
StageResult finetune(const Session& session, const FinetuneOptions& options);

struct EvalResult {
    double accuracy = 0.0;
    int total = 0;
    std::vector<double> per_class_accuracy;
    std::vector<int> per_class_count;
};

/// Top-1 accuracy; batch_size only controls chunking.
EvalResult evaluate(const Classifier& model, const SampleSource& samples, std::size_t count,
                    int num_classes, std::size_t batch_size = 64);

/// Three-column grid per image: masked input (masked patches zeroed),
/// reconstruction with visible patches pasted from the original, original.
/// Written as PNG.
void export_reconstructions(const NetworkParams& params, const ChannelStats& stats,
                            ReconTarget target, const std::vector<Image>& raw_images,
                            double mask_ratio, std::uint64_t seed,
                            const std::filesystem::path& out_file);

/// Network parameters for a config, initialised from its seed.
NetworkParams initial_params(const RunConfig& config);

}  // namespace ssmae
