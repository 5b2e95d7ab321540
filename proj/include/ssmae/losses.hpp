#pragma once

#include "ssmae/tensor.hpp"

#include <span>

namespace ssmae {

struct LossWeights {
    double lambda_cls = 1.0;
    double lambda_pseudo = 0.75;
};

enum class ReconReduction {
    patch_norm,        // mean over masked patches of the squared L2 norm per patch
    elementwise_mean,  // additionally divided by the patch width
};

/// Masked-patch reconstruction error. When `grad` is given it receives
/// d(loss)/d(prediction); rows of visible patches are exactly zero.
double recon_loss(const Matrix& prediction, const Matrix& target, std::span<const int> masked_idx,
                  Matrix* grad = nullptr,
                  ReconReduction reduction = ReconReduction::patch_norm);

RowVector softmax(const RowVector& logits);

/// -log softmax(logits)[label], max-subtracted. `grad` receives dL/dlogits.
double ce_loss(const RowVector& logits, int label, RowVector* grad = nullptr);

/// mean(sup) + lambda_p_eff * mean(pseudo); an empty list contributes 0.
double cls_loss(std::span<const double> sup_losses, std::span<const double> pseudo_losses,
                double lambda_p_eff);

/// recon + lambda_cls * cls. Throws Error("non_finite") on non-finite input.
double total_loss(double recon, double cls, double lambda_cls);

}  // namespace ssmae
