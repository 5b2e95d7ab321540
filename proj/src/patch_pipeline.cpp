#include "ssmae/patch_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace ssmae {

PatchGrid patchify(const Image& image, int patch_size) {
    const int P = patch_size;
    if (P <= 0 || image.height % P != 0 || image.width % P != 0 || image.height == 0 ||
        image.width == 0) {
        std::ostringstream msg;
        msg << "image of size H=" << image.height << ", W=" << image.width
            << " is not divisible into patches of size P=" << P;
        throw Error("shape", msg.str());
    }
    const int C = image.channels;
    const int grid_w = image.width / P;
    const int n = (image.height / P) * grid_w;

    PatchGrid grid;
    grid.patch_size = P;
    grid.rows.resize(n, P * P * C);
    for (int i = 0; i < n; ++i) {
        const int y0 = (i / grid_w) * P;
        const int x0 = (i % grid_w) * P;
        int col = 0;
        for (int dy = 0; dy < P; ++dy) {
            // one patch row is contiguous in HWC storage
            const Real* src = &image.data[image.index(y0 + dy, x0, 0)];
            for (int k = 0; k < P * C; ++k) grid.rows(i, col++) = src[k];
        }
    }
    return grid;
}

Image unpatchify(const PatchGrid& grid, int height, int width, int channels, int patch_size) {
    const int P = patch_size;
    if (P <= 0 || height % P != 0 || width % P != 0 ||
        grid.rows.rows() != static_cast<Eigen::Index>(height / P) * (width / P) ||
        grid.rows.cols() != static_cast<Eigen::Index>(P) * P * channels) {
        std::ostringstream msg;
        msg << "patch grid " << grid.rows.rows() << "x" << grid.rows.cols()
            << " is inconsistent with H=" << height << ", W=" << width << ", C=" << channels
            << ", P=" << P;
        throw Error("shape", msg.str());
    }
    Image image(height, width, channels);
    const int grid_w = width / P;
    for (int i = 0; i < grid.num_patches(); ++i) {
        const int y0 = (i / grid_w) * P;
        const int x0 = (i % grid_w) * P;
        int col = 0;
        for (int dy = 0; dy < P; ++dy) {
            Real* dst = &image.data[image.index(y0 + dy, x0, 0)];
            for (int k = 0; k < P * channels; ++k) dst[k] = grid.rows(i, col++);
        }
    }
    return image;
}

int visible_count(int num_patches, double ratio) {
    return static_cast<int>(std::floor(num_patches * (1.0 - ratio) + 1e-9));
}

MaskPlan make_mask_plan(int num_patches, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        std::ostringstream msg;
        msg << "masking ratio " << ratio << " outside [0, 1)";
        throw Error("mask_ratio", msg.str());
    }
    if (num_patches < 1) throw Error("mask_ratio", "mask plan needs at least one patch");
    const int keep = visible_count(num_patches, ratio);
    if (keep < 1) {
        std::ostringstream msg;
        msg << "masking ratio " << ratio << " leaves no visible patch out of " << num_patches;
        throw Error("mask_ratio", msg.str());
    }
    MaskPlan plan;
    plan.permutation.resize(static_cast<std::size_t>(num_patches));
    std::iota(plan.permutation.begin(), plan.permutation.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(plan.permutation.begin(), plan.permutation.end(), rng);
    plan.num_visible = keep;
    plan.seed = seed;
    return plan;
}

MaskPlan mask_plan_from_permutation(std::vector<int> permutation, int num_visible) {
    std::vector<int> sorted = permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != static_cast<int>(i)) throw Error("mask_plan", "not a permutation");
    }
    if (num_visible < 1 || num_visible > static_cast<int>(permutation.size())) {
        throw Error("mask_plan", "visible count out of range");
    }
    MaskPlan plan;
    plan.permutation = std::move(permutation);
    plan.num_visible = num_visible;
    return plan;
}

Matrix gather_visible(const Matrix& tokens, const MaskPlan& plan) {
    if (tokens.rows() != plan.num_patches()) {
        std::ostringstream msg;
        msg << "gather_visible: " << tokens.rows() << " tokens for a plan over "
            << plan.num_patches() << " patches";
        throw Error("shape", msg.str());
    }
    const auto visible = plan.visible_idx();
    Matrix out(static_cast<Eigen::Index>(visible.size()), tokens.cols());
    for (std::size_t j = 0; j < visible.size(); ++j) out.row(j) = tokens.row(visible[j]);
    return out;
}

Matrix unshuffle_tokens(const Matrix& visible, const RowVector& mask_fill, const MaskPlan& plan) {
    if (visible.rows() != plan.num_visible || visible.cols() != mask_fill.cols()) {
        std::ostringstream msg;
        msg << "unshuffle_tokens: " << visible.rows() << "x" << visible.cols()
            << " visible block for a plan keeping " << plan.num_visible
            << " tokens with fill width " << mask_fill.cols();
        throw Error("shape", msg.str());
    }
    Matrix out(plan.num_patches(), visible.cols());
    const auto vis = plan.visible_idx();
    for (std::size_t j = 0; j < vis.size(); ++j) out.row(vis[j]) = visible.row(j);
    for (int i : plan.masked_idx()) out.row(i) = mask_fill;
    return out;
}

}  // namespace ssmae
