#pragma once

#include "ssmae/data_pipeline.hpp"
#include "ssmae/gate_controller.hpp"
#include "ssmae/losses.hpp"
#include "ssmae/network.hpp"
#include "ssmae/optimizer.hpp"
#include "ssmae/pseudo_filter.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ssmae {

enum class ReconTarget { normalized, raw };
enum class LrSchedule { constant, cosine };

/// Ablation switches plus the supervised-only baseline.
struct AblationFlags {
    bool recon_off = false;
    bool consistency_off = false;        // weak-view-only filter
    bool gate_off_from_epoch1 = false;   // pseudo-labeling from the first epoch
    bool gate_no_val_threshold = false;  // warm-up, then permanently open
    bool pseudo_off = false;             // never pseudo-label
};

struct TrainConfig {
    int epochs_pretrain = 200;
    int epochs_finetune = 100;
    double mask_ratio = 0.75;
    double finetune_lr = 1e-4;  // AdamW learning rate of the fine-tuning stage
    int batch_labeled = 16;
    int batch_unlabeled = 32;
    int checkpoint_every = 10;
    int eval_every = 0;  // 0: test accuracy only after the last epoch
    int val_cap = 512;
    std::uint64_t seed = 0;
    bool sup_augment = true;  // weak-augment labeled images
    LrSchedule schedule = LrSchedule::constant;
    ReconTarget recon_target = ReconTarget::normalized;
    ReconReduction recon_reduction = ReconReduction::patch_norm;
};

struct RunConfig {
    std::string profile = "toy";
    NetworkConfig network;
    LossWeights loss;
    GateConfig gate;
    SplitSpec split;
    AdamWConfig optim;
    TrainConfig train;
    AugPolicy weak = AugPolicy::weak();
    AugPolicy strong = AugPolicy::strong();
    AblationFlags ablation;
    DatasetManifest data;

    /// Defaults for `toy` (synthetic shapes, small ViT) or `paper` (ViT-B/16, CIFAR-10).
    static RunConfig for_profile(const std::string& profile);

    /// Sets one key from its text form; unknown keys and malformed values throw.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static std::vector<std::string> keys();

    /// Propagates shared values (classes, geometry, seeds) and validates.
    void finalize();

    /// Sorted `key=value` lines over every key; stable across runs.
    std::string canonical() const;
    std::string hash() const;

    GatePolicy gate_policy() const;
    FilterMode filter_mode() const;
};

/// Parses `key = value` lines (`#` comments). The `profile` key, if present,
/// selects the defaults before the other keys apply.
RunConfig parse_config(const std::string& text,
                       const std::optional<std::string>& profile_override = std::nullopt);
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::optional<std::string>& profile_override,
                      const std::map<std::string, std::string>& overrides = {});

}  // namespace ssmae
