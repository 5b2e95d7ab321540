#pragma once

#include "ssmae/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ssmae {

/// Flattened non-overlapping patches, one per row, in raster patch order.
/// Each row is the row-major (y, x, channel) flattening of its patch.
struct PatchGrid {
    Matrix rows;
    int patch_size = 0;

    int num_patches() const { return static_cast<int>(rows.rows()); }
    int patch_dim() const { return static_cast<int>(rows.cols()); }
};

PatchGrid patchify(const Image& image, int patch_size);
Image unpatchify(const PatchGrid& grid, int height, int width, int channels, int patch_size);

/// Random masking bookkeeping for one sample. The first `num_visible`
/// entries of `permutation` are the kept patches; the rest are masked.
struct MaskPlan {
    std::vector<int> permutation;
    int num_visible = 0;
    std::uint64_t seed = 0;

    int num_patches() const { return static_cast<int>(permutation.size()); }
    int num_masked() const { return num_patches() - num_visible; }
    std::span<const int> visible_idx() const {
        return std::span<const int>(permutation).first(static_cast<std::size_t>(num_visible));
    }
    std::span<const int> masked_idx() const {
        return std::span<const int>(permutation).subspan(static_cast<std::size_t>(num_visible));
    }

    friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

/// floor(N * (1 - ratio)), tolerant of binary representation error in `ratio`.
int visible_count(int num_patches, double ratio);

MaskPlan make_mask_plan(int num_patches, double ratio, std::uint64_t seed);

/// Plan built from an explicit permutation (tests, exhaustive checks).
MaskPlan mask_plan_from_permutation(std::vector<int> permutation, int num_visible);

Matrix gather_visible(const Matrix& tokens, const MaskPlan& plan);

/// Scatters `visible` back to spatial order, filling masked slots with `mask_fill`.
Matrix unshuffle_tokens(const Matrix& visible, const RowVector& mask_fill, const MaskPlan& plan);

}  // namespace ssmae
