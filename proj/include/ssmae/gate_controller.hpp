#pragma once

#include "ssmae/losses.hpp"
#include "ssmae/pseudo_filter.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace ssmae {

struct GateConfig {
    int warmup_epochs = 10;
    double acc_threshold = 0.70;
    int patience = 1;
    double confidence = 0.95;

    void validate() const;
};

/// Pseudo-label gate. `epoch` counts completed epochs; `open` is the gate
/// bit applied to the next epoch.
struct GateState {
    int epoch = 0;
    bool open = false;
    int below_count = 0;
    std::optional<double> last_val_conf_acc;

    friend bool operator==(const GateState&, const GateState&) = default;
};

/// Epoch-boundary transition of the dynamic gate.
GateState gate_step(const GateState& state, const GateConfig& config, double val_conf_acc);

/// How the trainer drives the gate; everything but `dynamic` is an ablation.
enum class GatePolicy {
    dynamic,
    open_from_start,   // pseudo-labeling from the first epoch
    open_after_warmup, // warm-up only, no accuracy threshold
    closed,            // never pseudo-label
};

GateState initial_gate(GatePolicy policy);
GateState advance_gate(const GateState& state, const GateConfig& config, double val_conf_acc,
                       GatePolicy policy);

/// g_t * lambda_p.
double effective_pseudo_weight(const GateState& state, const LossWeights& weights);

struct ConfValResult {
    double accuracy = 0.0;
    int accepted = 0;
    int total = 0;
};

/// A labeled validation sample, fetched lazily by index.
struct LabeledImage {
    Image image;
    int label = 0;
};
using SampleSource = std::function<LabeledImage(std::size_t)>;

/// Confidence-filtered validation accuracy: correct / accepted over samples
/// whose weak and strong views pass `filter_pseudo`; 0 when none pass.
/// View seeds for sample i are derived from (`seed`, i).
ConfValResult conf_val_accuracy(const Classifier& model, const SampleSource& samples,
                                std::size_t count, double tau, std::uint64_t seed,
                                const AugPolicy& weak, const AugPolicy& strong,
                                FilterMode mode = FilterMode::consistency);

}  // namespace ssmae
