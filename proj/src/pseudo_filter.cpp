#include "ssmae/pseudo_filter.hpp"

#include "ssmae/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace ssmae {

namespace {

int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

Real sample_bilinear(const Image& img, Real sx, Real sy, int c) {
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const Real fx = sx - x0;
    const Real fy = sy - y0;
    auto px = [&](int y, int x) {
        return img.at(std::clamp(y, 0, img.height - 1), std::clamp(x, 0, img.width - 1), c);
    };
    const Real top = px(y0, x0) * (1 - fx) + (fx != 0 ? px(y0, x0 + 1) * fx : 0.0);
    if (fy == 0) return top;
    const Real bottom = px(y0 + 1, x0) * (1 - fx) + (fx != 0 ? px(y0 + 1, x0 + 1) * fx : 0.0);
    return top * (1 - fy) + bottom * fy;
}

// Output pixel (x, y) reads the source at A * (p - centre) + centre + t.
Image affine_warp(const Image& img, Real a, Real b, Real c, Real d, Real tx, Real ty) {
    Image out(img.height, img.width, img.channels);
    const Real cx = (img.width - 1) / 2.0;
    const Real cy = (img.height - 1) / 2.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Real sx = a * (x - cx) + b * (y - cy) + cx + tx;
            const Real sy = c * (x - cx) + d * (y - cy) + cy + ty;
            for (int ch = 0; ch < img.channels; ++ch) out.at(y, x, ch) = sample_bilinear(img, sx, sy, ch);
        }
    }
    return out;
}

Image crop_and_flip(const Image& img, int pad, double flip_prob, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> offset(-pad, pad);
    const int oy = pad > 0 ? offset(rng) : 0;
    const int ox = pad > 0 ? offset(rng) : 0;
    const bool flip = std::bernoulli_distribution(flip_prob)(rng);
    if (oy == 0 && ox == 0 && !flip) return img;
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        const int sy = reflect(y + oy, img.height);
        for (int x = 0; x < img.width; ++x) {
            int sx = reflect(x + ox, img.width);
            if (flip) sx = img.width - 1 - sx;
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

void clamp_unit(Image& img) {
    for (Real& v : img.data) v = std::clamp(v, Real{0}, Real{1});
}

Real gray(const Image& img, int y, int x) {
    if (img.channels != 3) return img.at(y, x, 0);
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

void apply_strong_op(Image& img, StrongOp op, const AugPolicy& p, std::mt19937_64& rng) {
    auto symmetric = [&](double max) {
        return max > 0 ? std::uniform_real_distribution<double>(-max, max)(rng) : 0.0;
    };
    switch (op) {
        case StrongOp::rotate: {
            const double angle = symmetric(p.max_rotate_deg) * std::numbers::pi / 180.0;
            if (angle == 0) return;
            const Real cs = std::cos(angle), sn = std::sin(angle);
            img = affine_warp(img, cs, sn, -sn, cs, 0, 0);
            return;
        }
        case StrongOp::translate: {
            const double tx = symmetric(p.max_translate) * img.width;
            const double ty = symmetric(p.max_translate) * img.height;
            if (tx == 0 && ty == 0) return;
            img = affine_warp(img, 1, 0, 0, 1, tx, ty);
            return;
        }
        case StrongOp::shear: {
            const double shear = std::tan(symmetric(p.max_shear_deg) * std::numbers::pi / 180.0);
            if (shear == 0) return;
            img = affine_warp(img, 1, shear, 0, 1, 0, 0);
            return;
        }
        case StrongOp::brightness: {
            const double f = 1.0 + symmetric(p.max_jitter);
            if (f == 1.0) return;
            for (Real& v : img.data) v *= f;
            clamp_unit(img);
            return;
        }
        case StrongOp::contrast: {
            const double f = 1.0 + symmetric(p.max_jitter);
            if (f == 1.0) return;
            Real mean = 0;
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) mean += gray(img, y, x);
            mean /= static_cast<Real>(img.height) * img.width;
            for (Real& v : img.data) v = f * v + (1 - f) * mean;
            clamp_unit(img);
            return;
        }
        case StrongOp::saturation: {
            const double f = 1.0 + symmetric(p.max_jitter);
            if (f == 1.0 || img.channels != 3) return;
            for (int y = 0; y < img.height; ++y) {
                for (int x = 0; x < img.width; ++x) {
                    const Real g = gray(img, y, x);
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = f * img.at(y, x, c) + (1 - f) * g;
                }
            }
            clamp_unit(img);
            return;
        }
        case StrongOp::posterize: {
            const int lo = std::clamp(p.min_posterize_bits, 1, 8);
            const int bits = std::uniform_int_distribution<int>(lo, 8)(rng);
            if (bits == 8) return;
            const int shift = 8 - bits;
            for (Real& v : img.data) {
                const int q = static_cast<int>(std::floor(std::clamp(v, Real{0}, Real{1}) * 255.0));
                v = static_cast<Real>((q >> shift) << shift) / 255.0;
            }
            return;
        }
    }
}

void random_erase(Image& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> area_frac(0.02, 0.33);
    std::uniform_real_distribution<double> log_aspect(std::log(0.3), std::log(3.3));
    const double area = area_frac(rng) * img.height * img.width;
    const double aspect = std::exp(log_aspect(rng));
    const int h = std::clamp(static_cast<int>(std::round(std::sqrt(area * aspect))), 1, img.height);
    const int w = std::clamp(static_cast<int>(std::round(std::sqrt(area / aspect))), 1, img.width);
    const int y0 = std::uniform_int_distribution<int>(0, img.height - h)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, img.width - w)(rng);
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
            for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = 0.5;
}

void check_simplex(const RowVector& p, const char* which) {
    const bool ok = p.size() > 0 && p.allFinite() && p.minCoeff() >= -1e-12 &&
                    std::abs(p.sum() - 1.0) <= 1e-6;
    if (!ok) {
        std::ostringstream msg;
        msg << which << " is not a probability vector";
        throw Error("simplex", msg.str());
    }
}

}  // namespace

AugPolicy AugPolicy::weak() { return AugPolicy{}; }

AugPolicy AugPolicy::strong() {
    AugPolicy p;
    p.kind = AugKind::strong;
    return p;
}

Image augment(const Image& image, const AugPolicy& policy, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Image out = crop_and_flip(image, policy.crop_pad, policy.flip_prob, rng);
    if (policy.kind == AugKind::weak) return out;

    std::array<int, kNumStrongOps> ops{};
    std::iota(ops.begin(), ops.end(), 0);
    std::shuffle(ops.begin(), ops.end(), rng);
    const int count = std::clamp(policy.num_strong_ops, 0, kNumStrongOps);
    for (int i = 0; i < count; ++i) apply_strong_op(out, static_cast<StrongOp>(ops[i]), policy, rng);
    if (std::bernoulli_distribution(policy.erase_prob)(rng)) random_erase(out, rng);
    return out;
}

RowVector predict_probs(const Classifier& model, const Image& image) {
    return softmax(model(image));
}

int argmax(const RowVector& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

std::string_view to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::none: return "none";
        case RejectReason::low_conf_weak: return "low_conf_weak";
        case RejectReason::low_conf_strong: return "low_conf_strong";
        case RejectReason::inconsistent: return "inconsistent";
    }
    return "unknown";
}

FilterDecision filter_pseudo(const RowVector& p_weak, const RowVector& p_strong, double tau,
                             FilterMode mode) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error("config", "confidence threshold must lie in (0, 1)");
    check_simplex(p_weak, "weak-view prediction");
    check_simplex(p_strong, "strong-view prediction");
    if (p_weak.size() != p_strong.size()) throw Error("shape", "weak/strong class counts differ");

    FilterDecision d;
    const int weak_label = argmax(p_weak);
    const int strong_label = argmax(p_strong);
    d.conf_weak = p_weak(weak_label);
    d.conf_strong = p_strong(strong_label);
    if (!(d.conf_weak > tau)) {
        d.reject_reason = RejectReason::low_conf_weak;
    } else if (mode == FilterMode::consistency && !(d.conf_strong > tau)) {
        d.reject_reason = RejectReason::low_conf_strong;
    } else if (mode == FilterMode::consistency && weak_label != strong_label) {
        d.reject_reason = RejectReason::inconsistent;
    } else {
        d.accepted = true;
        d.pseudo_label = weak_label;
    }
    return d;
}

PseudoTerm pseudo_label_term(const RowVector& p_weak, const RowVector& p_strong,
                             const RowVector& loss_view_logits, double tau, FilterMode mode) {
    PseudoTerm term;
    term.decision = filter_pseudo(p_weak, p_strong, tau, mode);
    if (term.decision.accepted) {
        term.loss = ce_loss(loss_view_logits, term.decision.pseudo_label, &term.d_logits);
    }
    return term;
}

}  // namespace ssmae
