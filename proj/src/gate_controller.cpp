#include "ssmae/gate_controller.hpp"

#include "ssmae/seed.hpp"

namespace ssmae {

void GateConfig::validate() const {
    if (warmup_epochs < 0) throw Error("config", "gate warm-up must be non-negative");
    if (!(acc_threshold >= 0.0 && acc_threshold <= 1.0)) {
        throw Error("config", "gate accuracy threshold must lie in [0, 1]");
    }
    if (patience < 1) throw Error("config", "gate patience must be at least 1");
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw Error("config", "confidence threshold must lie in (0, 1)");
    }
}

GateState gate_step(const GateState& state, const GateConfig& config, double val_conf_acc) {
    GateState next = state;
    next.epoch = state.epoch + 1;
    next.last_val_conf_acc = val_conf_acc;
    if (next.epoch <= config.warmup_epochs) {
        next.open = false;
        next.below_count = 0;
        return next;
    }
    if (val_conf_acc >= config.acc_threshold) {
        next.open = true;
        next.below_count = 0;
    } else {
        next.below_count = state.below_count + 1;
        if (next.below_count >= config.patience) next.open = false;
    }
    return next;
}

GateState initial_gate(GatePolicy policy) {
    GateState s;
    s.open = policy == GatePolicy::open_from_start;
    return s;
}

GateState advance_gate(const GateState& state, const GateConfig& config, double val_conf_acc,
                       GatePolicy policy) {
    switch (policy) {
        case GatePolicy::dynamic:
            return gate_step(state, config, val_conf_acc);
        case GatePolicy::open_from_start:
        case GatePolicy::open_after_warmup:
        case GatePolicy::closed: {
            GateState next = state;
            next.epoch = state.epoch + 1;
            next.last_val_conf_acc = val_conf_acc;
            next.below_count = 0;
            next.open = policy == GatePolicy::open_from_start ||
                        (policy == GatePolicy::open_after_warmup &&
                         next.epoch > config.warmup_epochs);
            return next;
        }
    }
    return state;
}

double effective_pseudo_weight(const GateState& state, const LossWeights& weights) {
    return state.open ? weights.lambda_pseudo : 0.0;
}

ConfValResult conf_val_accuracy(const Classifier& model, const SampleSource& samples,
                                std::size_t count, double tau, std::uint64_t seed,
                                const AugPolicy& weak, const AugPolicy& strong, FilterMode mode) {
    if (count == 0) throw Error("config", "validation set is empty");
    ConfValResult result;
    result.total = static_cast<int>(count);
    int correct = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const LabeledImage sample = samples(i);
        const RowVector p_w =
            predict_probs(model, augment(sample.image, weak, derive_seed(seed, {i, 0})));
        const RowVector p_s =
            mode == FilterMode::weak_only
                ? p_w
                : predict_probs(model, augment(sample.image, strong, derive_seed(seed, {i, 1})));
        const FilterDecision d = filter_pseudo(p_w, p_s, tau, mode);
        if (!d.accepted) continue;
        ++result.accepted;
        if (d.pseudo_label == sample.label) ++correct;
    }
    result.accuracy = result.accepted > 0 ? static_cast<double>(correct) / result.accepted : 0.0;
    return result;
}

}  // namespace ssmae
