#pragma once

// The two attention mechanisms: dual-stream self-attention over the
// concatenated reference+target sequence (separate projections per stream,
// keys/values concatenated, bi-directional attention across both), and
// decoupled cross-attention from target tokens onto the two semantic
// condition streams (shared query, per-stream key/value, outputs added).

#include <optional>

#include "effectlab/rope.hpp"
#include "effectlab/semantic_condition.hpp"

namespace effectlab {

struct AttentionDims {
    int width, heads, head_dim;
};

// One stream's projection set. No biases: a zero token then contributes an
// exactly zero value through k/v, which is what dropped condition streams
// rely on.
struct StreamProj {
    Tensor wq, wk, wv, wo;  // each [width x width]

    static StreamProj init(int width, Rng& rng) {
        const float s = 1.0f / std::sqrt(float(width));
        StreamProj p;
        p.wq = Tensor::randn({width, width}, rng, s, true);
        p.wk = Tensor::randn({width, width}, rng, s, true);
        p.wv = Tensor::randn({width, width}, rng, s, true);
        p.wo = Tensor::randn({width, width}, rng, s, true);
        return p;
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        out.push_back({prefix + ".wq", wq});
        out.push_back({prefix + ".wk", wk});
        out.push_back({prefix + ".wv", wv});
        out.push_back({prefix + ".wo", wo});
    }
};

struct DualStreamWeights {
    StreamProj ref, tgt;

    static DualStreamWeights init(int width, Rng& rng) {
        DualStreamWeights w;
        w.ref = StreamProj::init(width, rng);
        w.tgt = StreamProj::init(width, rng);
        return w;
    }

    // Both streams sharing one projection set; reduces to single-stream.
    static DualStreamWeights tied(const StreamProj& shared) {
        DualStreamWeights w;
        w.ref = shared;
        w.tgt = shared;
        return w;
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        ref.register_params(prefix + ".ref", out);
        tgt.register_params(prefix + ".tgt", out);
    }
};

struct DecoupledCAWeights {
    Tensor wq;               // shared query projection
    Tensor wk_txt, wv_txt;   // reasoning (text) branch
    Tensor wk_und, wv_und;   // understanding branch
    Tensor wo;

    static DecoupledCAWeights init(int width, int d_cond, Rng& rng) {
        const float sw = 1.0f / std::sqrt(float(width));
        const float sc = 1.0f / std::sqrt(float(d_cond));
        DecoupledCAWeights w;
        w.wq = Tensor::randn({width, width}, rng, sw, true);
        w.wk_txt = Tensor::randn({d_cond, width}, rng, sc, true);
        w.wv_txt = Tensor::randn({d_cond, width}, rng, sc, true);
        w.wk_und = Tensor::randn({d_cond, width}, rng, sc, true);
        w.wv_und = Tensor::randn({d_cond, width}, rng, sc, true);
        w.wo = Tensor::randn({width, width}, rng, sw, true);
        return w;
    }

    void register_params(const std::string& prefix, ParamMap& out) {
        out.push_back({prefix + ".wq", wq});
        out.push_back({prefix + ".wk_txt", wk_txt});
        out.push_back({prefix + ".wv_txt", wv_txt});
        out.push_back({prefix + ".wk_und", wk_und});
        out.push_back({prefix + ".wv_und", wv_und});
        out.push_back({prefix + ".wo", wo});
    }
};

// softmax(q k^T / sqrt(head_dim)) v per head; q [n x width], k,v [m x width].
inline Tensor multihead_attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                                       int head_dim) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("attention: expects 2D q/k/v");
    if (q.shape[1] != heads * head_dim || k.shape[1] != q.shape[1] || v.shape[1] != q.shape[1])
        throw ShapeError("attention: width must equal heads*head_dim for q/k/v");
    if (k.shape[0] != v.shape[0]) throw ShapeError("attention: k/v token counts differ");
    const float inv_scale = 1.0f / std::sqrt(float(head_dim));
    std::vector<Tensor> ctx;
    ctx.reserve(std::size_t(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice(q, 1, h * head_dim, (h + 1) * head_dim);
        Tensor kh = slice(k, 1, h * head_dim, (h + 1) * head_dim);
        Tensor vh = slice(v, 1, h * head_dim, (h + 1) * head_dim);
        Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_scale);
        Tensor probs = softmax(scores, 1);
        ctx.push_back(matmul(probs, vh));
    }
    return concat(ctx, 1);
}

namespace detail {
inline void check_attention_inputs(const Tensor& tokens, const TokenLayout& layout, const AttentionDims& d) {
    if (tokens.rank() != 2 || tokens.shape[1] != d.width)
        throw ShapeError("self-attention: tokens must be [n x width]");
    if (tokens.shape[0] != layout.total()) throw ShapeError("self-attention: token count does not match layout");
    if (d.width != d.heads * d.head_dim) throw ShapeError("self-attention: width != heads*head_dim");
    if (layout.n_ref == 0 || layout.n_tgt == 0) throw ShapeError("self-attention: empty stream");
}
}  // namespace detail

// Eq-style dual-stream attention: per-stream q/k/v projections, RoPE on q
// and k at effective positions, keys/values concatenated across streams,
// each stream's queries attending over the full concatenation, per-stream
// output projection, sequence order preserved.
inline Tensor dual_stream_self_attention(const Tensor& tokens, const TokenLayout& layout,
                                         const DualStreamWeights& w, const AttentionDims& dims,
                                         const std::optional<RopeTable>& rope) {
    detail::check_attention_inputs(tokens, layout, dims);
    Tensor ref_tok = slice(tokens, 0, 0, layout.n_ref);
    Tensor tgt_tok = slice(tokens, 0, layout.n_ref, layout.total());

    Tensor q_r = matmul(ref_tok, w.ref.wq);
    Tensor k_r = matmul(ref_tok, w.ref.wk);
    Tensor v_r = matmul(ref_tok, w.ref.wv);
    Tensor q_t = matmul(tgt_tok, w.tgt.wq);
    Tensor k_t = matmul(tgt_tok, w.tgt.wk);
    Tensor v_t = matmul(tgt_tok, w.tgt.wv);

    Tensor q = concat({q_r, q_t}, 0);
    Tensor k = concat({k_r, k_t}, 0);
    if (rope) {
        q = apply_rope(q, layout, *rope);
        k = apply_rope(k, layout, *rope);
    }
    Tensor v = concat({v_r, v_t}, 0);

    Tensor o = multihead_attention_core(q, k, v, dims.heads, dims.head_dim);
    Tensor o_r = matmul(slice(o, 0, 0, layout.n_ref), w.ref.wo);
    Tensor o_t = matmul(slice(o, 0, layout.n_ref, layout.total()), w.tgt.wo);
    return concat({o_r, o_t}, 0);
}

// Ablation variant: one shared projection set over the whole sequence.
// With tied dual weights this matches dual_stream_self_attention bit for bit
// because every op there is row-wise.
inline Tensor single_stream_self_attention(const Tensor& tokens, const TokenLayout& layout,
                                           const StreamProj& w, const AttentionDims& dims,
                                           const std::optional<RopeTable>& rope) {
    detail::check_attention_inputs(tokens, layout, dims);
    Tensor q = matmul(tokens, w.wq);
    Tensor k = matmul(tokens, w.wk);
    Tensor v = matmul(tokens, w.wv);
    if (rope) {
        q = apply_rope(q, layout, *rope);
        k = apply_rope(k, layout, *rope);
    }
    Tensor o = multihead_attention_core(q, k, v, dims.heads, dims.head_dim);
    return matmul(o, w.wo);
}

// Plain multi-head self-attention without layout/RoPE; used by the toy
// understanding encoder.
inline Tensor plain_self_attention(const Tensor& tokens, const StreamProj& w, const AttentionDims& dims) {
    Tensor q = matmul(tokens, w.wq);
    Tensor k = matmul(tokens, w.wk);
    Tensor v = matmul(tokens, w.wv);
    Tensor o = multihead_attention_core(q, k, v, dims.heads, dims.head_dim);
    return matmul(o, w.wo);
}

// Decoupled cross-attention: one shared query over the target tokens, a
// key/value branch per condition stream, outputs fused by addition, then the
// output projection. Reference tokens never enter here; a dropped stream
// contributes exactly zero.
inline Tensor decoupled_cross_attention(const Tensor& target_tokens, const SemanticCondition& cond,
                                        const DecoupledCAWeights& w, const AttentionDims& dims) {
    if (target_tokens.rank() != 2 || target_tokens.shape[1] != dims.width)
        throw ShapeError("cross-attention: target tokens must be [n x width]");
    const int d_cond = w.wk_txt.shape[0];
    if (!cond.drop_reasoning && cond.reasoning.shape[1] != d_cond)
        throw ShapeError("cross-attention: reasoning width mismatch");
    if (!cond.drop_understanding && cond.understanding.shape[1] != d_cond)
        throw ShapeError("cross-attention: understanding width mismatch");

    Tensor q = matmul(target_tokens, w.wq);
    Tensor fused;
    if (!cond.drop_reasoning) {
        Tensor k = matmul(cond.reasoning, w.wk_txt);
        Tensor v = matmul(cond.reasoning, w.wv_txt);
        fused = multihead_attention_core(q, k, v, dims.heads, dims.head_dim);
    }
    if (!cond.drop_understanding) {
        Tensor k = matmul(cond.understanding, w.wk_und);
        Tensor v = matmul(cond.understanding, w.wv_und);
        Tensor o = multihead_attention_core(q, k, v, dims.heads, dims.head_dim);
        fused = fused.defined() ? add(fused, o) : o;
    }
    if (!fused.defined()) fused = Tensor::zeros({target_tokens.shape[0], dims.width});
    return matmul(fused, w.wo);
}

}  // namespace effectlab
