#pragma once

// Model assembly: patchify/unpatchify, timestep embedding with the
// clean-token zero-timestep policy, transformer blocks (self-attention ->
// decoupled cross-attention on the target span -> shared FFN, each residual
// with rmsnorm), and the velocity head over target tokens.

#include <optional>
#include <vector>

#include "effectlab/attention.hpp"
#include "effectlab/layers.hpp"
#include "effectlab/layout.hpp"

namespace effectlab {

namespace detail {
// Flat index maps between [C,F,H,W] latents and frame-major token rows with
// (c, dt, dh, dw) ordering inside each token.
inline std::vector<std::size_t> patchify_index(const Shape& latent, int pt, int ph, int pw) {
    const int C = latent[0], F = latent[1], H = latent[2], W = latent[3];
    const GridShape g = token_grid(latent, pt, ph, pw);
    std::vector<std::size_t> idx;
    idx.reserve(numel_of(latent));
    for (int tf = 0; tf < g.frames; ++tf)
        for (int tr = 0; tr < g.rows; ++tr)
            for (int tc = 0; tc < g.cols; ++tc)
                for (int c = 0; c < C; ++c)
                    for (int dt = 0; dt < pt; ++dt)
                        for (int dh = 0; dh < ph; ++dh)
                            for (int dw = 0; dw < pw; ++dw) {
                                const std::size_t f = std::size_t(tf * pt + dt);
                                const std::size_t h = std::size_t(tr * ph + dh);
                                const std::size_t w = std::size_t(tc * pw + dw);
                                idx.push_back(((std::size_t(c) * F + f) * H + h) * W + w);
                            }
    return idx;
}
}  // namespace detail

// [C,F,H,W] -> [tokens x C*pt*ph*pw], tokens frame-major then row then col.
inline Tensor patchify(const Tensor& latent, int pt, int ph, int pw) {
    if (latent.rank() != 4) throw ShapeError("patchify: latent must be [C,F,H,W]");
    const GridShape g = detail::token_grid(latent.shape, pt, ph, pw);
    const int dim = latent.shape[0] * pt * ph * pw;
    return permute_elements(latent, detail::patchify_index(latent.shape, pt, ph, pw), {g.tokens(), dim});
}

inline Tensor unpatchify(const Tensor& tokens, const Shape& latent_shape, int pt, int ph, int pw) {
    if (tokens.rank() != 2) throw ShapeError("unpatchify: tokens must be 2D");
    const auto fwd = detail::patchify_index(latent_shape, pt, ph, pw);
    if (fwd.size() != tokens.numel()) throw ShapeError("unpatchify: element count mismatch");
    std::vector<std::size_t> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
    return permute_elements(tokens, inv, latent_shape);
}

// Sinusoid over pos = t * time_scale: first half sin, second half cos,
// frequency base^(-i/half). Channel 0 is sin(pos).
inline std::vector<float> timestep_sinusoid(float t, float time_scale, int width, float base = 10000.0f) {
    const int half = width / 2;
    std::vector<float> out(static_cast<std::size_t>(width));
    const double pos = double(t) * double(time_scale);
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(double(base), -double(i) / double(half));
        out[std::size_t(i)] = float(std::sin(pos * freq));
        out[std::size_t(half + i)] = float(std::cos(pos * freq));
    }
    return out;
}

struct TimestepEmbed {
    LinearLayer fc1, fc2;
    float time_scale = 1000.0f;

    static TimestepEmbed init(int width, float time_scale, Rng& rng) {
        TimestepEmbed e;
        e.fc1 = LinearLayer::init(width, width, rng);
        e.fc2 = LinearLayer::init(width, width, rng);
        e.time_scale = time_scale;
        return e;
    }

    // Clean tokens always receive the zero-timestep embedding, noisy target
    // tokens the embedding of t, whatever the step's t.
    Tensor forward(const TokenLayout& layout, float t) const {
        if (!std::isfinite(t)) throw NumericError("timestep embedding: t is not finite");
        const int width = fc1.w.shape[0];
        auto zero_row = timestep_sinusoid(0.0f, time_scale, width);
        auto t_row = timestep_sinusoid(t, time_scale, width);
        std::vector<float> both = zero_row;
        both.insert(both.end(), t_row.begin(), t_row.end());
        Tensor table = fc2.forward(silu(fc1.forward(Tensor::from({2, width}, std::move(both)))));
        std::vector<int> ids(std::size_t(layout.total()));
        for (int i = 0; i < layout.total(); ++i) ids[std::size_t(i)] = layout.at(i).clean ? 0 : 1;
        return embedding(table, ids);
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        fc1.register_params(prefix + ".fc1", out);
        fc2.register_params(prefix + ".fc2", out);
    }
};

struct DiTBlock {
    AttentionMode mode = AttentionMode::dual;
    RmsNormLayer norm_sa, norm_ca, norm_ffn;
    std::optional<DualStreamWeights> sa_dual;
    std::optional<StreamProj> sa_single;
    DecoupledCAWeights ca;
    FeedForward ffn;

    static DiTBlock init(const ModelConfig& cfg, AttentionMode mode, Rng& rng) {
        DiTBlock b;
        b.mode = mode;
        b.norm_sa = RmsNormLayer::init(cfg.width, cfg.norm_eps);
        b.norm_ca = RmsNormLayer::init(cfg.width, cfg.norm_eps);
        b.norm_ffn = RmsNormLayer::init(cfg.width, cfg.norm_eps);
        if (mode == AttentionMode::dual)
            b.sa_dual = DualStreamWeights::init(cfg.width, rng);
        else
            b.sa_single = StreamProj::init(cfg.width, rng);
        b.ca = DecoupledCAWeights::init(cfg.width, cfg.resolved_cond_width(), rng);
        b.ffn = FeedForward::init(cfg.width, cfg.ffn_mult, rng);
        return b;
    }

    Tensor forward(const Tensor& x_in, const TokenLayout& layout, const SemanticCondition& cond,
                   const std::optional<RopeTable>& rope, const AttentionDims& dims) const {
        Tensor h = norm_sa.forward(x_in);
        Tensor attn = mode == AttentionMode::dual
                          ? dual_stream_self_attention(h, layout, *sa_dual, dims, rope)
                          : single_stream_self_attention(h, layout, *sa_single, dims, rope);
        Tensor x = add(x_in, attn);

        Tensor ref_span = slice(x, 0, 0, layout.n_ref);
        Tensor tgt_span = slice(x, 0, layout.n_ref, layout.total());
        Tensor ca_out = decoupled_cross_attention(norm_ca.forward(tgt_span), cond, ca, dims);
        x = concat({ref_span, add(tgt_span, ca_out)}, 0);

        return add(x, ffn.forward(norm_ffn.forward(x)));
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        norm_sa.register_params(prefix + ".norm_sa", out);
        if (sa_dual) sa_dual->register_params(prefix + ".sa", out);
        if (sa_single) sa_single->register_params(prefix + ".sa", out);
        norm_ca.register_params(prefix + ".norm_ca", out);
        ca.register_params(prefix + ".ca", out);
        norm_ffn.register_params(prefix + ".norm_ffn", out);
        ffn.register_params(prefix + ".ffn", out);
    }
};

struct DiTModel {
    ModelConfig cfg;
    AttentionMode attn_mode = AttentionMode::dual;
    LinearLayer in_proj;
    TimestepEmbed t_embed;
    std::vector<DiTBlock> blocks;
    RmsNormLayer final_norm;
    LinearLayer head;  // zero-init: the freshly assembled model predicts zero velocity

    int patch_dim() const { return cfg.latent_channels * cfg.patch_t * cfg.patch_h * cfg.patch_w; }

    static DiTModel init(const ModelConfig& cfg, AttentionMode mode, uint64_t seed) {
        cfg.validate();
        Rng rng(mix_seed(seed, 0x0d17ULL));
        DiTModel m;
        m.cfg = cfg;
        m.attn_mode = mode;
        m.in_proj = LinearLayer::init(m.patch_dim(), cfg.width, rng);
        m.t_embed = TimestepEmbed::init(cfg.width, cfg.time_scale, rng);
        m.blocks.reserve(std::size_t(cfg.depth));
        for (int i = 0; i < cfg.depth; ++i) m.blocks.push_back(DiTBlock::init(cfg, mode, rng));
        m.final_norm = RmsNormLayer::init(cfg.width, cfg.norm_eps);
        m.head = LinearLayer::init(cfg.width, m.patch_dim(), rng, /*zero_init=*/true);
        return m;
    }

    TokenLayout layout_for(const Shape& ref_shape, const Shape& tgt_shape) const {
        return build_layout(ref_shape, tgt_shape, cfg);
    }

    // Velocity prediction over the target latent; reference-stream outputs
    // run through every block but are discarded at the head.
    Tensor forward(const Tensor& ref_latent, const Tensor& tgt_latent, const SemanticCondition& cond,
                   float t) const {
        if (ref_latent.rank() != 4 || tgt_latent.rank() != 4)
            throw ShapeError("forward: latents must be [C,F,H,W]");
        if (ref_latent.shape[0] != cfg.latent_channels || tgt_latent.shape[0] != cfg.latent_channels)
            throw ShapeError("forward: latent channel count does not match config");
        const TokenLayout layout = layout_for(ref_latent.shape, tgt_latent.shape);
        const AttentionDims dims{cfg.width, cfg.heads, cfg.head_dim};

        Tensor ref_tok = in_proj.forward(patchify(ref_latent, cfg.patch_t, cfg.patch_h, cfg.patch_w));
        Tensor tgt_tok = in_proj.forward(patchify(tgt_latent, cfg.patch_t, cfg.patch_h, cfg.patch_w));
        Tensor x = concat({ref_tok, tgt_tok}, 0);
        x = add(x, t_embed.forward(layout, t));

        std::optional<RopeTable> rope;
        if (cfg.rope_enabled) rope = RopeTable::make(cfg, layout);

        for (const auto& b : blocks) x = b.forward(x, layout, cond, rope, dims);

        Tensor tgt_out = slice(final_norm.forward(x), 0, layout.n_ref, layout.total());
        return unpatchify(head.forward(tgt_out), tgt_latent.shape, cfg.patch_t, cfg.patch_h, cfg.patch_w);
    }

    void register_params(ParamMap& out) {
        in_proj.register_params("in_proj", out);
        t_embed.register_params("t_embed", out);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].register_params("blocks." + std::to_string(i), out);
        final_norm.register_params("final_norm", out);
        head.register_params("head", out);
    }
};

}  // namespace effectlab
