#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They deliberately avoid the library's own helpers: plain loops,
// long double, no Eigen.

#include "ssmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace oracle {

using Vec = std::vector<long double>;

// --- patch bookkeeping ----------------------------------------------------

/// Exact floor(N * (1 - r)) for r = num / den.
inline int visible_count_rational(int n, int num, int den) { return (n * (den - num)) / den; }

inline std::vector<std::vector<double>> gather(const std::vector<std::vector<double>>& rows,
                                               const std::vector<int>& perm, int num_visible) {
    std::vector<std::vector<double>> out;
    for (int j = 0; j < num_visible; ++j) out.push_back(rows[static_cast<std::size_t>(perm[j])]);
    return out;
}

inline std::vector<std::vector<double>> scatter(const std::vector<std::vector<double>>& visible,
                                                const std::vector<double>& fill,
                                                const std::vector<int>& perm, int num_visible) {
    std::vector<std::vector<double>> out(perm.size(), fill);
    for (int j = 0; j < num_visible; ++j) out[static_cast<std::size_t>(perm[j])] = visible[j];
    return out;
}

// --- losses -----------------------------------------------------------------

/// Cross-entropy via log-sum-exp in long double.
inline long double cross_entropy(const std::vector<double>& logits, int label) {
    long double m = logits[0];
    for (double v : logits) m = std::max<long double>(m, v);
    long double s = 0;
    for (double v : logits) s += std::exp(static_cast<long double>(v) - m);
    return -(static_cast<long double>(logits[static_cast<std::size_t>(label)]) - m - std::log(s));
}

// --- pseudo-label filter ----------------------------------------------------

enum class Verdict { accept, low_conf_weak, low_conf_strong, inconsistent };

struct FilterOut {
    Verdict verdict;
    int label;
};

inline int first_max(const std::vector<double>& p) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(p.size()); ++k)
        if (p[static_cast<std::size_t>(k)] > p[static_cast<std::size_t>(best)]) best = k;
    return best;
}

inline FilterOut filter(const std::vector<double>& pw, const std::vector<double>& ps, double tau,
                        bool weak_only = false) {
    const int yw = first_max(pw);
    const int ys = first_max(ps);
    if (!(pw[static_cast<std::size_t>(yw)] > tau)) return {Verdict::low_conf_weak, -1};
    if (weak_only) return {Verdict::accept, yw};
    if (!(ps[static_cast<std::size_t>(ys)] > tau)) return {Verdict::low_conf_strong, -1};
    if (yw != ys) return {Verdict::inconsistent, -1};
    return {Verdict::accept, yw};
}

// --- gate -------------------------------------------------------------------

/// Direct simulation of the gate rules, returning g_t for t = 1..trace length.
inline std::vector<int> gate_trace(const std::vector<double>& vals, int warmup, double tau_acc,
                                   int patience) {
    std::vector<int> g;
    int gate = 0;
    int below = 0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        if (t <= warmup) {
            gate = 0;
            below = 0;
        } else if (vals[i] >= tau_acc) {
            gate = 1;
            below = 0;
        } else {
            below += 1;
            if (below >= patience) gate = 0;
        }
        g.push_back(gate);
    }
    return g;
}

// --- single-token transformer ----------------------------------------------

inline Vec layer_norm(const Vec& x, const Vec& g, const Vec& b, long double eps = 1e-6L) {
    long double mean = 0;
    for (auto v : x) mean += v;
    mean /= x.size();
    long double var = 0;
    for (auto v : x) var += (v - mean) * (v - mean);
    var /= x.size();
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
    return y;
}

/// y = x W + b with W stored row-major as rows x cols.
inline Vec affine(const Vec& x, const ssmae::Matrix& w, const ssmae::Matrix& b,
                  Eigen::Index col0 = 0, std::optional<Eigen::Index> cols = std::nullopt) {
    const Eigen::Index n = cols.value_or(w.cols());
    Vec y(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        long double s = b(0, col0 + j);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * static_cast<long double>(w(static_cast<Eigen::Index>(i), col0 + j));
        y[static_cast<std::size_t>(j)] = s;
    }
    return y;
}

inline Vec row(const ssmae::Matrix& m) {
    Vec v(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(0, j);
    return v;
}

}  // namespace oracle
