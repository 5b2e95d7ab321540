#pragma once

// Finite-difference check of the analytic gradients of the full training
// objective: recon + lambda * (sup CE + lambda_p * pseudo CE).

#include "ssmae/losses.hpp"
#include "ssmae/network.hpp"
#include "ssmae/patch_pipeline.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gradcheck {

using namespace ssmae;

struct Problem {
    PatchGrid recon_view;
    MaskPlan plan;
    PatchGrid sup_view;
    int sup_label = 0;
    PatchGrid pseudo_view;
    int pseudo_label = 0;
    double lambda = 1.0;
    double lambda_p = 0.75;
};

inline Problem make_problem(const NetworkConfig& cfg, double mask_ratio, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> n(0.0, 1.0);
    auto grid = [&] {
        Image img(cfg.image_size, cfg.image_size, cfg.channels);
        for (Real& v : img.data) v = n(rng);
        return patchify(img, cfg.patch_size);
    };
    Problem p;
    p.recon_view = grid();
    p.plan = make_mask_plan(cfg.num_patches(), mask_ratio, rng());
    p.sup_view = grid();
    p.sup_label = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes));
    p.pseudo_view = grid();
    p.pseudo_label = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes));
    return p;
}

inline double objective(const Problem& p, const NetworkParams& params, NetworkParams* grads) {
    const ReconPass rp = forward_recon(p.recon_view, p.plan, params);
    Matrix d_recon;
    const double recon = recon_loss(rp.reconstruction, p.recon_view.rows, p.plan.masked_idx(),
                                    grads ? &d_recon : nullptr);
    const ClsPass sp = forward_cls(p.sup_view, params);
    RowVector d_sup;
    const double sup = ce_loss(sp.logits, p.sup_label, grads ? &d_sup : nullptr);
    const ClsPass pp = forward_cls(p.pseudo_view, params);
    RowVector d_pseudo;
    const double pseudo = ce_loss(pp.logits, p.pseudo_label, grads ? &d_pseudo : nullptr);
    const double sup_arr[] = {sup};
    const double pseudo_arr[] = {pseudo};
    const double total = total_loss(recon, cls_loss(sup_arr, pseudo_arr, p.lambda_p), p.lambda);
    if (grads) {
        backward_recon(rp, d_recon, params, *grads);
        backward_cls(sp, d_sup * p.lambda, params, *grads);
        backward_cls(pp, d_pseudo * (p.lambda * p.lambda_p), params, *grads);
    }
    return total;
}

struct Sample {
    std::string name;
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool ok = false;
};

/// `per_tensor` random entries from each named tensor (all tensors when
/// `names` is empty). Tolerance: relative 1e-3 with an absolute floor of 1e-6.
inline std::vector<Sample> check(const Problem& problem, NetworkParams params,
                                 const std::vector<std::string>& names, int per_tensor,
                                 std::uint64_t seed, double h = 1e-5) {
    NetworkParams grads = params.zeros_like();
    objective(problem, params, &grads);
    std::vector<Matrix*> g_tensors;
    grads.visit([&](const std::string&, ParamGroup, Matrix& m) { g_tensors.push_back(&m); });
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    std::size_t k = 0;
    params.visit([&](const std::string& name, ParamGroup, Matrix& m) {
        Matrix& g = *g_tensors[k++];
        if (!names.empty() && std::find(names.begin(), names.end(), name) == names.end()) return;
        for (int t = 0; t < per_tensor; ++t) {
            Sample s;
            s.name = name;
            s.row = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.rows()));
            s.col = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.cols()));
            const double orig = m(s.row, s.col);
            m(s.row, s.col) = orig + h;
            const double fp = objective(problem, params, nullptr);
            m(s.row, s.col) = orig - h;
            const double fm = objective(problem, params, nullptr);
            m(s.row, s.col) = orig;
            s.numeric = (fp - fm) / (2 * h);
            s.analytic = g(s.row, s.col);
            const double diff = std::abs(s.analytic - s.numeric);
            const double scale = std::max(std::abs(s.analytic), std::abs(s.numeric));
            s.ok = diff <= 1e-6 || diff <= 1e-3 * scale;
            out.push_back(s);
        }
    });
    return out;
}

/// Tensors spanning embedding, encoder, decoder, head, mask token, CLS and
/// positional tables.
inline std::vector<std::string> coverage_names() {
    return {"patch_w",     "patch_b",     "cls_token",   "pos_embed",  "enc0.qkv_w", "enc0.qkv_b",
            "enc0.proj_w", "enc0.ln1_g",  "enc0.fc1_w",  "enc0.fc2_b", "enc_norm_g", "dec_embed_w",
            "mask_token",  "dec_pos",     "dec0.qkv_w",  "dec0.fc1_b", "dec0.ln2_g", "dec_norm_b",
            "out_w",       "out_b",       "head_w",      "head_b"};
}

}  // namespace gradcheck
