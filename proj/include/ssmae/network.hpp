#pragma once

#include "ssmae/patch_pipeline.hpp"
#include "ssmae/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace ssmae {

enum class DecoderPos { learned, sinusoidal };

struct NetworkConfig {
    int embed_dim = 64;
    int depth = 2;
    int num_heads = 4;
    int decoder_embed_dim = 32;
    int decoder_depth = 1;
    int decoder_num_heads = 4;
    int patch_size = 4;
    int num_classes = 4;
    int image_size = 16;
    int channels = 3;
    int mlp_ratio = 4;
    double dropout = 0.0;
    DecoderPos decoder_pos = DecoderPos::learned;

    /// ViT-B/16 encoder with the 512-wide, 8-layer decoder at 224 x 224.
    static NetworkConfig paper();
    static NetworkConfig toy();

    int num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    void validate() const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class ParamGroup { embedding, encoder, decoder, head, fixed };

struct BlockParams {
    Matrix ln1_g, ln1_b;
    Matrix qkv_w, qkv_b;
    Matrix proj_w, proj_b;
    Matrix ln2_g, ln2_b;
    Matrix fc1_w, fc1_b;
    Matrix fc2_w, fc2_b;

    template <class F>
    void visit(const std::string& prefix, ParamGroup group, F&& f) {
        f(prefix + "ln1_g", group, ln1_g);
        f(prefix + "ln1_b", group, ln1_b);
        f(prefix + "qkv_w", group, qkv_w);
        f(prefix + "qkv_b", group, qkv_b);
        f(prefix + "proj_w", group, proj_w);
        f(prefix + "proj_b", group, proj_b);
        f(prefix + "ln2_g", group, ln2_g);
        f(prefix + "ln2_b", group, ln2_b);
        f(prefix + "fc1_w", group, fc1_w);
        f(prefix + "fc1_b", group, fc1_b);
        f(prefix + "fc2_w", group, fc2_w);
        f(prefix + "fc2_b", group, fc2_b);
    }
};

/// All learnable state of the encoder, decoder and classification head.
/// Row vectors (biases, tokens, norm gains) are stored as 1 x n matrices so
/// that every tensor can be visited uniformly.
struct NetworkParams {
    NetworkConfig config;

    Matrix patch_w, patch_b;   // (P^2 C) x d, 1 x d
    Matrix cls_token;          // 1 x d
    Matrix pos_embed;          // (N + 1) x d, row 0 belongs to CLS
    std::vector<BlockParams> encoder;
    Matrix enc_norm_g, enc_norm_b;

    Matrix dec_embed_w, dec_embed_b;  // d x d_dec
    Matrix mask_token;                // 1 x d_dec
    Matrix dec_pos;                   // N x d_dec
    std::vector<BlockParams> decoder;
    Matrix dec_norm_g, dec_norm_b;
    Matrix out_w, out_b;              // d_dec x (P^2 C)

    Matrix head_w, head_b;            // d x K

    static NetworkParams init(const NetworkConfig& config, std::uint64_t seed);
    NetworkParams zeros_like() const;

    /// Calls f(name, group, tensor) for every tensor in a fixed order.
    template <class F>
    void visit(F&& f) {
        f("patch_w", ParamGroup::embedding, patch_w);
        f("patch_b", ParamGroup::embedding, patch_b);
        f("cls_token", ParamGroup::embedding, cls_token);
        f("pos_embed", ParamGroup::embedding, pos_embed);
        for (std::size_t l = 0; l < encoder.size(); ++l) {
            encoder[l].visit("enc" + std::to_string(l) + ".", ParamGroup::encoder, f);
        }
        f("enc_norm_g", ParamGroup::encoder, enc_norm_g);
        f("enc_norm_b", ParamGroup::encoder, enc_norm_b);
        f("dec_embed_w", ParamGroup::decoder, dec_embed_w);
        f("dec_embed_b", ParamGroup::decoder, dec_embed_b);
        f("mask_token", ParamGroup::decoder, mask_token);
        f("dec_pos",
          config.decoder_pos == DecoderPos::learned ? ParamGroup::decoder : ParamGroup::fixed,
          dec_pos);
        for (std::size_t l = 0; l < decoder.size(); ++l) {
            decoder[l].visit("dec" + std::to_string(l) + ".", ParamGroup::decoder, f);
        }
        f("dec_norm_g", ParamGroup::decoder, dec_norm_g);
        f("dec_norm_b", ParamGroup::decoder, dec_norm_b);
        f("out_w", ParamGroup::decoder, out_w);
        f("out_b", ParamGroup::decoder, out_b);
        f("head_w", ParamGroup::head, head_w);
        f("head_b", ParamGroup::head, head_b);
    }
    template <class F>
    void visit(F&& f) const {
        const_cast<NetworkParams*>(this)->visit(
            [&](const std::string& name, ParamGroup g, Matrix& m) {
                f(name, g, static_cast<const Matrix&>(m));
            });
    }

    std::size_t num_scalars() const;
    bool all_finite() const;
};

enum class Mode { train, eval };

/// Optional randomness for train-mode dropout; unused when dropout is 0.
struct ForwardContext {
    Mode mode = Mode::eval;
    std::mt19937_64* rng = nullptr;
};

struct LayerNormCache {
    Matrix xhat;
    ColVector rstd;
};

struct BlockCache {
    LayerNormCache ln1;
    Matrix ln1_out;
    Matrix qkv;
    std::vector<Matrix> attn;  // per-head softmax weights
    Matrix attn_concat;
    Matrix drop1;              // empty when dropout is inactive
    LayerNormCache ln2;
    Matrix ln2_out;
    Matrix fc1_pre;
    Matrix fc1_act;
    Matrix drop2;
};

struct StackCache {
    std::vector<BlockCache> blocks;
    bool has_norm = false;
    LayerNormCache norm;
};

/// embed_tokens output: (N + 1) x d with the CLS token in row 0.
Matrix embed_tokens(const PatchGrid& grid, const NetworkParams& params);

/// Runs the encoder (pre-LN blocks plus a final LayerNorm when depth > 0).
Matrix encode(const Matrix& tokens, const NetworkParams& params,
              const ForwardContext& ctx = {}, StackCache* cache = nullptr);

struct ReconPass {
    MaskPlan plan;
    Matrix encoder_input;   // CLS + visible tokens, in plan order
    Matrix encoder_output;
    Matrix decoder_input;   // after unshuffle and positional embedding
    Matrix decoder_output;  // after the final decoder norm
    Matrix reconstruction;  // N x (P^2 C)
    PatchGrid patches;
    StackCache enc_cache;
    StackCache dec_cache;
};

ReconPass forward_recon(const PatchGrid& grid, const MaskPlan& plan, const NetworkParams& params,
                        const ForwardContext& ctx = {});

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(reconstruction).
void backward_recon(const ReconPass& pass, const Matrix& d_reconstruction,
                    const NetworkParams& params, NetworkParams& grads);

struct ClsPass {
    PatchGrid patches;
    Matrix encoder_output;
    RowVector logits;
    StackCache enc_cache;
};

ClsPass forward_cls(const PatchGrid& grid, const NetworkParams& params,
                    const ForwardContext& ctx = {});
void backward_cls(const ClsPass& pass, const RowVector& d_logits, const NetworkParams& params,
                  NetworkParams& grads);

/// Convenience wrapper: image -> logits, eval mode.
RowVector classify(const Image& normalized, const NetworkParams& params);

}  // namespace ssmae
