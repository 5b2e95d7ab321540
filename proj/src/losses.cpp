#include "ssmae/losses.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ssmae {

double recon_loss(const Matrix& prediction, const Matrix& target, std::span<const int> masked_idx,
                  Matrix* grad, ReconReduction reduction) {
    if (masked_idx.empty()) throw Error("recon_loss", "reconstruction loss needs masked patches");
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        std::ostringstream msg;
        msg << "reconstruction " << prediction.rows() << "x" << prediction.cols() << " vs target "
            << target.rows() << "x" << target.cols();
        throw Error("shape", msg.str());
    }
    double denom = static_cast<double>(masked_idx.size());
    if (reduction == ReconReduction::elementwise_mean) denom *= static_cast<double>(target.cols());

    if (grad) *grad = Matrix::Zero(prediction.rows(), prediction.cols());
    double sum = 0.0;
    for (int i : masked_idx) {
        if (i < 0 || i >= prediction.rows()) throw Error("shape", "masked index out of range");
        const RowVector diff = prediction.row(i) - target.row(i);
        sum += diff.squaredNorm();
        if (grad) grad->row(i) = diff * (2.0 / denom);
    }
    return sum / denom;
}

RowVector softmax(const RowVector& logits) {
    RowVector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    return p / p.sum();
}

double ce_loss(const RowVector& logits, int label, RowVector* grad) {
    if (label < 0 || label >= logits.cols()) {
        std::ostringstream msg;
        msg << "label " << label << " outside [0, " << logits.cols() << ")";
        throw Error("label", msg.str());
    }
    const Real max = logits.maxCoeff();
    const RowVector shifted = logits.array() - max;
    const Real log_z = std::log(shifted.array().exp().sum());
    if (grad) {
        *grad = (shifted.array() - log_z).exp().matrix();
        (*grad)(label) -= 1.0;
    }
    return log_z - shifted(label);
}

double cls_loss(std::span<const double> sup_losses, std::span<const double> pseudo_losses,
                double lambda_p_eff) {
    auto mean = [](std::span<const double> xs) {
        return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    };
    return mean(sup_losses) + lambda_p_eff * mean(pseudo_losses);
}

double total_loss(double recon, double cls, double lambda_cls) {
    if (!std::isfinite(recon) || !std::isfinite(cls) || !std::isfinite(lambda_cls)) {
        std::ostringstream msg;
        msg << "non-finite loss term (recon=" << recon << ", cls=" << cls << ")";
        throw Error("non_finite", msg.str());
    }
    return recon + lambda_cls * cls;
}

}  // namespace ssmae
