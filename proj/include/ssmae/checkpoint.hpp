#pragma once

#include "ssmae/gate_controller.hpp"
#include "ssmae/network.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssmae {

/// Versioned binary container: parameters, optimizer moments, gate state,
/// trainer RNG state and the canonical config (plus its hash). A SHA-256
/// trailer covers the whole payload.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string config_hash;
    std::string config_text;
    std::string stage;  // "pretrain" | "finetune" | "init"
    int epoch = 0;      // completed epochs in `stage`
    GateState gate;
    double best_val_acc = -1.0;
    std::string rng_state;
    NetworkParams params;
    std::int64_t optimizer_steps = 0;
    std::vector<Matrix> optimizer_m;
    std::vector<Matrix> optimizer_v;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);

/// Loads and verifies version and integrity; when `expected_hash` is given a
/// differing config hash is rejected with Error("config_hash").
Checkpoint load_checkpoint(const std::filesystem::path& file,
                           const std::optional<std::string>& expected_hash = std::nullopt);

}  // namespace ssmae
