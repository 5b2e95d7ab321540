#include "ssmae/network.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace ssmae {

namespace {

constexpr Real kLayerNormEps = 1e-6;

Matrix trunc_normal(int rows, int cols, Real std, std::mt19937_64& rng) {
    std::normal_distribution<Real> dist(0.0, std);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        Real v;
        do {
            v = dist(rng);
        } while (std::abs(v) > 2 * std);
        m.data()[i] = v;
    }
    return m;
}

Matrix xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
    const Real bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<Real> dist(-bound, bound);
    Matrix m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

BlockParams init_block(int dim, int hidden, std::mt19937_64& rng) {
    BlockParams b;
    b.ln1_g = Matrix::Ones(1, dim);
    b.ln1_b = Matrix::Zero(1, dim);
    b.qkv_w = xavier_uniform(dim, 3 * dim, rng);
    b.qkv_b = Matrix::Zero(1, 3 * dim);
    b.proj_w = xavier_uniform(dim, dim, rng);
    b.proj_b = Matrix::Zero(1, dim);
    b.ln2_g = Matrix::Ones(1, dim);
    b.ln2_b = Matrix::Zero(1, dim);
    b.fc1_w = xavier_uniform(dim, hidden, rng);
    b.fc1_b = Matrix::Zero(1, hidden);
    b.fc2_w = xavier_uniform(hidden, dim, rng);
    b.fc2_b = Matrix::Zero(1, dim);
    return b;
}

// 2-D sine-cosine table over the patch grid, half the width per axis.
Matrix sincos_2d(int grid, int dim) {
    Matrix table = Matrix::Zero(grid * grid, dim);
    const int quarter = dim / 4;
    for (int i = 0; i < grid * grid; ++i) {
        const Real coords[2] = {static_cast<Real>(i % grid), static_cast<Real>(i / grid)};
        for (int axis = 0; axis < 2; ++axis) {
            for (int k = 0; k < quarter; ++k) {
                const Real omega = 1.0 / std::pow(10000.0, static_cast<Real>(k) / quarter);
                table(i, axis * 2 * quarter + k) = std::sin(coords[axis] * omega);
                table(i, axis * 2 * quarter + quarter + k) = std::cos(coords[axis] * omega);
            }
        }
    }
    return table;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache* cache) {
    const Eigen::Index n = x.cols();
    ColVector mean = x.rowwise().mean();
    Matrix centered = x.colwise() - mean;
    ColVector var = centered.array().square().rowwise().sum() / static_cast<Real>(n);
    ColVector rstd = (var.array() + kLayerNormEps).rsqrt();
    Matrix xhat = centered.array().colwise() * rstd.array();
    Matrix y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias) {
    d_gain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    d_bias.row(0) += dy.colwise().sum();
    Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
    const Real inv_n = 1.0 / static_cast<Real>(dy.cols());
    ColVector mean_d = dxhat.rowwise().sum() * inv_n;
    ColVector mean_dx = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() * inv_n;
    Matrix dx = dxhat.colwise() - mean_d;
    dx -= (cache.xhat.array().colwise() * mean_dx.array()).matrix();
    return dx.array().colwise() * cache.rstd.array();
}

Real gelu(Real x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2)); }

Real gelu_grad(Real x) {
    const Real cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2));
    const Real pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

void softmax_rows(Matrix& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto row = s.row(i);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, const ForwardContext& ctx) {
    if (ctx.mode != Mode::train || p <= 0.0) return {};
    if (!ctx.rng) throw Error("config", "train-mode dropout requires an RNG");
    std::bernoulli_distribution keep(1.0 - p);
    Matrix mask(rows, cols);
    const Real scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*ctx.rng) ? scale : 0.0;
    return mask;
}

Matrix block_forward(const Matrix& x, const BlockParams& p, int heads, double dropout,
                     const ForwardContext& ctx, BlockCache& c) {
    const Eigen::Index m = x.rows();
    const Eigen::Index d = x.cols();
    const Eigen::Index dh = d / heads;
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));

    c.ln1_out = layer_norm(x, p.ln1_g, p.ln1_b, &c.ln1);
    c.qkv.noalias() = c.ln1_out * p.qkv_w;
    c.qkv.rowwise() += p.qkv_b.row(0);
    c.attn.resize(static_cast<std::size_t>(heads));
    c.attn_concat.resize(m, d);
    for (int h = 0; h < heads; ++h) {
        auto q = c.qkv.middleCols(h * dh, dh);
        auto k = c.qkv.middleCols(d + h * dh, dh);
        auto v = c.qkv.middleCols(2 * d + h * dh, dh);
        Matrix& a = c.attn[static_cast<std::size_t>(h)];
        a.noalias() = (q * k.transpose()) * scale;
        softmax_rows(a);
        c.attn_concat.middleCols(h * dh, dh).noalias() = a * v;
    }
    Matrix attn_out = c.attn_concat * p.proj_w;
    attn_out.rowwise() += p.proj_b.row(0);
    c.drop1 = dropout_mask(m, d, dropout, ctx);
    if (c.drop1.size()) attn_out.array() *= c.drop1.array();
    Matrix x1 = x + attn_out;

    c.ln2_out = layer_norm(x1, p.ln2_g, p.ln2_b, &c.ln2);
    c.fc1_pre.noalias() = c.ln2_out * p.fc1_w;
    c.fc1_pre.rowwise() += p.fc1_b.row(0);
    c.fc1_act = c.fc1_pre.unaryExpr([](Real v) { return gelu(v); });
    Matrix ffn = c.fc1_act * p.fc2_w;
    ffn.rowwise() += p.fc2_b.row(0);
    c.drop2 = dropout_mask(m, d, dropout, ctx);
    if (c.drop2.size()) ffn.array() *= c.drop2.array();
    x1 += ffn;
    return x1;
}

Matrix block_backward(const Matrix& dy, const BlockParams& p, int heads, const BlockCache& c,
                      BlockParams& g) {
    const Eigen::Index d = dy.cols();
    const Eigen::Index dh = d / heads;
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));

    // feed-forward branch
    Matrix df = dy;
    if (c.drop2.size()) df.array() *= c.drop2.array();
    g.fc2_w.noalias() += c.fc1_act.transpose() * df;
    g.fc2_b.row(0) += df.colwise().sum();
    Matrix dpre = df * p.fc2_w.transpose();
    dpre.array() *= c.fc1_pre.unaryExpr([](Real v) { return gelu_grad(v); }).array();
    g.fc1_w.noalias() += c.ln2_out.transpose() * dpre;
    g.fc1_b.row(0) += dpre.colwise().sum();
    Matrix dln2 = dpre * p.fc1_w.transpose();
    Matrix dx1 = dy + layer_norm_backward(dln2, c.ln2, p.ln2_g, g.ln2_g, g.ln2_b);

    // attention branch
    Matrix da = dx1;
    if (c.drop1.size()) da.array() *= c.drop1.array();
    g.proj_w.noalias() += c.attn_concat.transpose() * da;
    g.proj_b.row(0) += da.colwise().sum();
    Matrix dconcat = da * p.proj_w.transpose();
    Matrix dqkv(dy.rows(), 3 * d);
    for (int h = 0; h < heads; ++h) {
        auto q = c.qkv.middleCols(h * dh, dh);
        auto k = c.qkv.middleCols(d + h * dh, dh);
        auto v = c.qkv.middleCols(2 * d + h * dh, dh);
        const Matrix& a = c.attn[static_cast<std::size_t>(h)];
        auto d_out = dconcat.middleCols(h * dh, dh);
        Matrix d_attn = d_out * v.transpose();
        dqkv.middleCols(2 * d + h * dh, dh).noalias() = a.transpose() * d_out;
        ColVector row_dot = (d_attn.array() * a.array()).rowwise().sum();
        Matrix ds = (a.array() * (d_attn.colwise() - row_dot).array()) * scale;
        dqkv.middleCols(h * dh, dh).noalias() = ds * k;
        dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    g.qkv_w.noalias() += c.ln1_out.transpose() * dqkv;
    g.qkv_b.row(0) += dqkv.colwise().sum();
    Matrix dln1 = dqkv * p.qkv_w.transpose();
    return dx1 + layer_norm_backward(dln1, c.ln1, p.ln1_g, g.ln1_g, g.ln1_b);
}

Matrix stack_forward(const Matrix& x, const std::vector<BlockParams>& blocks, const Matrix& norm_g,
                     const Matrix& norm_b, int heads, double dropout, const ForwardContext& ctx,
                     StackCache& cache) {
    cache.blocks.resize(blocks.size());
    Matrix h = x;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        h = block_forward(h, blocks[l], heads, dropout, ctx, cache.blocks[l]);
    }
    cache.has_norm = !blocks.empty();
    if (cache.has_norm) h = layer_norm(h, norm_g, norm_b, &cache.norm);
    return h;
}

Matrix stack_backward(const Matrix& dy, const std::vector<BlockParams>& blocks,
                      const Matrix& norm_g, int heads, const StackCache& cache,
                      std::vector<BlockParams>& g_blocks, Matrix& g_norm_g, Matrix& g_norm_b) {
    Matrix d = dy;
    if (cache.has_norm) d = layer_norm_backward(d, cache.norm, norm_g, g_norm_g, g_norm_b);
    for (std::size_t l = blocks.size(); l-- > 0;) {
        d = block_backward(d, blocks[l], heads, cache.blocks[l], g_blocks[l]);
    }
    return d;
}

void check_grid(const PatchGrid& grid, const NetworkParams& params) {
    if (grid.rows.cols() != params.patch_w.rows() ||
        grid.rows.rows() + 1 != params.pos_embed.rows()) {
        std::ostringstream msg;
        msg << "patch grid " << grid.rows.rows() << "x" << grid.rows.cols()
            << " does not match the network (" << params.pos_embed.rows() - 1 << " patches of width "
            << params.patch_w.rows() << ")";
        throw Error("shape", msg.str());
    }
}

// Scatters d(encoder input) for the CLS row and the given patch rows into the
// embedding gradients.
void embedding_backward(const Matrix& d_tokens, const PatchGrid& grid,
                        std::span<const int> patch_rows, NetworkParams& g) {
    g.cls_token.row(0) += d_tokens.row(0);
    g.pos_embed.row(0) += d_tokens.row(0);
    const auto count = static_cast<Eigen::Index>(patch_rows.size());
    Matrix patches(count, grid.rows.cols());
    for (Eigen::Index j = 0; j < count; ++j) {
        const int p = patch_rows[static_cast<std::size_t>(j)];
        g.pos_embed.row(p + 1) += d_tokens.row(j + 1);
        patches.row(j) = grid.rows.row(p);
    }
    auto d_patch_tokens = d_tokens.bottomRows(count);
    g.patch_w.noalias() += patches.transpose() * d_patch_tokens;
    g.patch_b.row(0) += d_patch_tokens.colwise().sum();
}

}  // namespace

NetworkConfig NetworkConfig::paper() {
    NetworkConfig c;
    c.embed_dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.decoder_embed_dim = 512;
    c.decoder_depth = 8;
    c.decoder_num_heads = 16;
    c.patch_size = 16;
    c.image_size = 224;
    c.num_classes = 10;
    return c;
}

NetworkConfig NetworkConfig::toy() { return NetworkConfig{}; }

void NetworkConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error("config", "network config: " + what); };
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
        fail("embed_dim must be a positive multiple of num_heads");
    }
    if (decoder_embed_dim <= 0 || decoder_num_heads <= 0 ||
        decoder_embed_dim % decoder_num_heads != 0) {
        fail("decoder_embed_dim must be a positive multiple of decoder_num_heads");
    }
    if (depth < 0 || decoder_depth < 0) fail("depths must be non-negative");
    if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
        fail("image_size must be a positive multiple of patch_size");
    }
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (channels <= 0 || mlp_ratio <= 0) fail("channels and mlp_ratio must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (decoder_pos == DecoderPos::sinusoidal && decoder_embed_dim % 4 != 0) {
        fail("sinusoidal decoder embeddings need decoder_embed_dim divisible by 4");
    }
}

NetworkParams NetworkParams::init(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const int d = config.embed_dim;
    const int dd = config.decoder_embed_dim;
    const int n = config.num_patches();
    const int pd = config.patch_dim();

    NetworkParams p;
    p.config = config;
    p.patch_w = xavier_uniform(pd, d, rng);
    p.patch_b = Matrix::Zero(1, d);
    p.cls_token = trunc_normal(1, d, 0.02, rng);
    p.pos_embed = trunc_normal(n + 1, d, 0.02, rng);
    for (int l = 0; l < config.depth; ++l) {
        p.encoder.push_back(init_block(d, d * config.mlp_ratio, rng));
    }
    p.enc_norm_g = Matrix::Ones(1, d);
    p.enc_norm_b = Matrix::Zero(1, d);
    p.dec_embed_w = xavier_uniform(d, dd, rng);
    p.dec_embed_b = Matrix::Zero(1, dd);
    p.mask_token = trunc_normal(1, dd, 0.02, rng);
    p.dec_pos = config.decoder_pos == DecoderPos::learned
                    ? trunc_normal(n, dd, 0.02, rng)
                    : sincos_2d(config.image_size / config.patch_size, dd);
    for (int l = 0; l < config.decoder_depth; ++l) {
        p.decoder.push_back(init_block(dd, dd * config.mlp_ratio, rng));
    }
    p.dec_norm_g = Matrix::Ones(1, dd);
    p.dec_norm_b = Matrix::Zero(1, dd);
    p.out_w = xavier_uniform(dd, pd, rng);
    p.out_b = Matrix::Zero(1, pd);
    p.head_w = xavier_uniform(d, config.num_classes, rng);
    p.head_b = Matrix::Zero(1, config.num_classes);
    return p;
}

NetworkParams NetworkParams::zeros_like() const {
    NetworkParams z = *this;
    z.visit([](const std::string&, ParamGroup, Matrix& m) { m.setZero(); });
    return z;
}

std::size_t NetworkParams::num_scalars() const {
    std::size_t total = 0;
    visit([&](const std::string&, ParamGroup, const Matrix& m) {
        total += static_cast<std::size_t>(m.size());
    });
    return total;
}

bool NetworkParams::all_finite() const {
    bool ok = true;
    visit([&](const std::string&, ParamGroup, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
}

Matrix embed_tokens(const PatchGrid& grid, const NetworkParams& params) {
    check_grid(grid, params);
    const Eigen::Index n = grid.rows.rows();
    Matrix tokens(n + 1, params.patch_w.cols());
    tokens.row(0) = params.cls_token.row(0) + params.pos_embed.row(0);
    tokens.bottomRows(n).noalias() = grid.rows * params.patch_w;
    tokens.bottomRows(n).rowwise() += params.patch_b.row(0);
    tokens.bottomRows(n) += params.pos_embed.bottomRows(n);
    return tokens;
}

Matrix encode(const Matrix& tokens, const NetworkParams& params, const ForwardContext& ctx,
              StackCache* cache) {
    if (tokens.rows() < 1 || tokens.cols() != params.config.embed_dim) {
        std::ostringstream msg;
        msg << "encode: token block " << tokens.rows() << "x" << tokens.cols()
            << " for embed_dim " << params.config.embed_dim;
        throw Error("shape", msg.str());
    }
    StackCache local;
    return stack_forward(tokens, params.encoder, params.enc_norm_g, params.enc_norm_b,
                         params.config.num_heads, params.config.dropout, ctx,
                         cache ? *cache : local);
}

ReconPass forward_recon(const PatchGrid& grid, const MaskPlan& plan, const NetworkParams& params,
                        const ForwardContext& ctx) {
    if (plan.num_patches() != grid.num_patches()) {
        std::ostringstream msg;
        msg << "mask plan over " << plan.num_patches() << " patches for a grid of "
            << grid.num_patches();
        throw Error("shape", msg.str());
    }
    const NetworkConfig& cfg = params.config;
    ReconPass pass;
    pass.plan = plan;
    pass.patches = grid;

    const Matrix tokens = embed_tokens(grid, params);
    const Matrix visible = gather_visible(tokens.bottomRows(grid.num_patches()), plan);
    pass.encoder_input.resize(visible.rows() + 1, tokens.cols());
    pass.encoder_input.row(0) = tokens.row(0);
    pass.encoder_input.bottomRows(visible.rows()) = visible;
    pass.encoder_output = encode(pass.encoder_input, params, ctx, &pass.enc_cache);

    Matrix latent = pass.encoder_output.bottomRows(visible.rows()) * params.dec_embed_w;
    latent.rowwise() += params.dec_embed_b.row(0);
    pass.decoder_input = unshuffle_tokens(latent, params.mask_token.row(0), plan) + params.dec_pos;
    pass.decoder_output =
        stack_forward(pass.decoder_input, params.decoder, params.dec_norm_g, params.dec_norm_b,
                      cfg.decoder_num_heads, cfg.dropout, ctx, pass.dec_cache);
    pass.reconstruction.noalias() = pass.decoder_output * params.out_w;
    pass.reconstruction.rowwise() += params.out_b.row(0);
    return pass;
}

void backward_recon(const ReconPass& pass, const Matrix& d_reconstruction,
                    const NetworkParams& params, NetworkParams& grads) {
    const NetworkConfig& cfg = params.config;
    const MaskPlan& plan = pass.plan;
    const Eigen::Index visible = plan.num_visible;

    grads.out_w.noalias() += pass.decoder_output.transpose() * d_reconstruction;
    grads.out_b.row(0) += d_reconstruction.colwise().sum();
    const Matrix d_dec_out = d_reconstruction * params.out_w.transpose();
    const Matrix dz = stack_backward(d_dec_out, params.decoder, params.dec_norm_g,
                                     cfg.decoder_num_heads, pass.dec_cache, grads.decoder,
                                     grads.dec_norm_g, grads.dec_norm_b);
    grads.dec_pos += dz;
    for (int i : plan.masked_idx()) grads.mask_token.row(0) += dz.row(i);
    const Matrix d_latent = gather_visible(dz, plan);

    const auto h = pass.encoder_output.bottomRows(visible);
    grads.dec_embed_w.noalias() += h.transpose() * d_latent;
    grads.dec_embed_b.row(0) += d_latent.colwise().sum();
    Matrix d_enc_out = Matrix::Zero(visible + 1, cfg.embed_dim);
    d_enc_out.bottomRows(visible).noalias() = d_latent * params.dec_embed_w.transpose();

    const Matrix d_enc_in = stack_backward(d_enc_out, params.encoder, params.enc_norm_g,
                                           cfg.num_heads, pass.enc_cache, grads.encoder,
                                           grads.enc_norm_g, grads.enc_norm_b);
    embedding_backward(d_enc_in, pass.patches, plan.visible_idx(), grads);
}

ClsPass forward_cls(const PatchGrid& grid, const NetworkParams& params, const ForwardContext& ctx) {
    ClsPass pass;
    pass.patches = grid;
    pass.encoder_output = encode(embed_tokens(grid, params), params, ctx, &pass.enc_cache);
    pass.logits = pass.encoder_output.row(0) * params.head_w + params.head_b.row(0);
    return pass;
}

void backward_cls(const ClsPass& pass, const RowVector& d_logits, const NetworkParams& params,
                  NetworkParams& grads) {
    const NetworkConfig& cfg = params.config;
    grads.head_w.noalias() += pass.encoder_output.row(0).transpose() * d_logits;
    grads.head_b.row(0) += d_logits;
    Matrix d_enc_out = Matrix::Zero(pass.encoder_output.rows(), pass.encoder_output.cols());
    d_enc_out.row(0) = d_logits * params.head_w.transpose();
    const Matrix d_tokens = stack_backward(d_enc_out, params.encoder, params.enc_norm_g,
                                           cfg.num_heads, pass.enc_cache, grads.encoder,
                                           grads.enc_norm_g, grads.enc_norm_b);
    std::vector<int> all(static_cast<std::size_t>(pass.patches.num_patches()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    embedding_backward(d_tokens, pass.patches, all, grads);
}

RowVector classify(const Image& normalized, const NetworkParams& params) {
    return forward_cls(patchify(normalized, params.config.patch_size), params).logits;
}

}  // namespace ssmae
