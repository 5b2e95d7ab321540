#pragma once

#include "ssmae/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string_view>

namespace ssmae {

enum class AugKind { weak, strong };

/// Candidate operations for the strong view; two are drawn per call.
enum class StrongOp { rotate, translate, shear, brightness, contrast, saturation, posterize };
inline constexpr int kNumStrongOps = 7;

/// Augmentation contract on raw [0, 1] pixels.
///   weak   = reflect-pad random crop + horizontal flip
///   strong = weak + `num_strong_ops` distinct ops from StrongOp + random erasing
struct AugPolicy {
    AugKind kind = AugKind::weak;
    int crop_pad = 4;
    double flip_prob = 0.5;
    int num_strong_ops = 2;
    double max_rotate_deg = 15.0;
    double max_translate = 0.10;  // fraction of the image side
    double max_shear_deg = 10.0;
    double max_jitter = 0.4;      // brightness / contrast / saturation
    int min_posterize_bits = 4;
    double erase_prob = 0.25;

    static AugPolicy weak();
    static AugPolicy strong();
};

Image augment(const Image& image, const AugPolicy& policy, std::uint64_t seed);

/// Maps a raw image to class logits (eval-mode forward).
using Classifier = std::function<RowVector(const Image&)>;

RowVector predict_probs(const Classifier& model, const Image& image);

/// Lowest index wins ties.
int argmax(const RowVector& v);

enum class RejectReason { none, low_conf_weak, low_conf_strong, inconsistent };
std::string_view to_string(RejectReason reason);

struct FilterDecision {
    bool accepted = false;
    int pseudo_label = -1;
    double conf_weak = 0.0;
    double conf_strong = 0.0;
    RejectReason reject_reason = RejectReason::none;
};

enum class FilterMode {
    consistency,  // confidence on both views and argmax agreement
    weak_only,    // confidence on the weak view only (consistency ablation)
};

/// Acceptance rule: max(p_w) > tau, max(p_s) > tau, argmax agreement. The
/// first failing check, in that order, is recorded as the reason.
FilterDecision filter_pseudo(const RowVector& p_weak, const RowVector& p_strong, double tau,
                             FilterMode mode = FilterMode::consistency);

/// Pseudo-label loss for one unlabeled sample. The decision comes from the
/// detached eval-mode probabilities; the loss and its gradient depend only on
/// the train-mode logits of the loss view.
struct PseudoTerm {
    FilterDecision decision;
    double loss = 0.0;
    RowVector d_logits;  // empty when rejected
};

PseudoTerm pseudo_label_term(const RowVector& p_weak, const RowVector& p_strong,
                             const RowVector& loss_view_logits, double tau,
                             FilterMode mode = FilterMode::consistency);

}  // namespace ssmae
