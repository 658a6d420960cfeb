#pragma once

// 3D rotary position embedding over (frame, row, col) with a constant
// temporal offset for reference-stream tokens. The head_dim is partitioned
// into three even sub-bands (temporal, height, width); each sub-band rotates
// adjacent pairs by pos * theta^(-2i/d_band). Reference spatial indices are
// snapped onto the target grid so the two streams share one spatial frame.

#include <optional>
#include <vector>

#include "effectlab/layout.hpp"

namespace effectlab {

struct RopeTable {
    int head_dim;
    int dim_t, dim_h, dim_w;
    float theta;
    int temporal_bias;

    static RopeTable make(const ModelConfig& cfg, const TokenLayout& layout) {
        RopeTable t;
        t.head_dim = cfg.head_dim;
        t.dim_t = cfg.rope_t();
        t.dim_h = cfg.rope_h();
        t.dim_w = cfg.rope_w();
        t.theta = cfg.rope_theta;
        t.temporal_bias = cfg.rope_bias >= 0 ? cfg.rope_bias : 2 * layout.tgt_grid.frames;
        if (t.dim_t + t.dim_h + t.dim_w != t.head_dim) throw ShapeError("rope partition must sum to head_dim");
        if (t.dim_t % 2 || t.dim_h % 2 || t.dim_w % 2) throw ShapeError("rope sub-bands must be even");
        return t;
    }
};

struct EffectivePosition {
    int frame, row, col;
};

inline int nearest_scaled_index(int idx, int from_extent, int to_extent) {
    if (from_extent == to_extent) return idx;
    return int(std::lround(double(idx) * double(to_extent) / double(from_extent)));
}

// Reference tokens: frame + bias, spatial indices mapped onto the target grid.
// Target tokens pass through unchanged.
inline EffectivePosition effective_position(const TokenInfo& tok, const TokenLayout& layout, int bias) {
    if (tok.stream == Stream::target) return {tok.frame, tok.row, tok.col};
    return {tok.frame + bias,
            nearest_scaled_index(tok.row, layout.ref_grid.rows, layout.tgt_grid.rows),
            nearest_scaled_index(tok.col, layout.ref_grid.cols, layout.tgt_grid.cols)};
}

namespace detail {

// cos/sin per (token, band element pair), laid out per token as
// [dim_t/2 | dim_h/2 | dim_w/2] pair angles.
struct RopeAngles {
    int pairs_per_head;
    std::vector<float> cosv, sinv;  // [n_tokens * pairs_per_head]
};

inline RopeAngles rope_angles(const TokenLayout& layout, const RopeTable& table) {
    RopeAngles a;
    a.pairs_per_head = table.head_dim / 2;
    const int n = layout.total();
    a.cosv.resize(std::size_t(n) * a.pairs_per_head);
    a.sinv.resize(std::size_t(n) * a.pairs_per_head);
    const int bands[3] = {table.dim_t, table.dim_h, table.dim_w};
    for (int i = 0; i < n; ++i) {
        const EffectivePosition pos = effective_position(layout.at(i), layout, table.temporal_bias);
        const int coords[3] = {pos.frame, pos.row, pos.col};
        std::size_t off = std::size_t(i) * a.pairs_per_head;
        for (int b = 0; b < 3; ++b) {
            const int half = bands[b] / 2;
            for (int p = 0; p < half; ++p) {
                const double freq = std::pow(double(table.theta), -2.0 * p / double(bands[b]));
                const double ang = double(coords[b]) * freq;
                a.cosv[off] = float(std::cos(ang));
                a.sinv[off] = float(std::sin(ang));
                ++off;
            }
        }
    }
    return a;
}

}  // namespace detail

// Rotates q or k features, shape [tokens x heads*head_dim]; every head gets
// the same rotation. Linear and norm-preserving; backward applies the
// inverse rotation to the incoming gradient.
inline Tensor apply_rope(const Tensor& x, const TokenLayout& layout, const RopeTable& table) {
    if (x.rank() != 2) throw ShapeError("apply_rope: expects [tokens x heads*head_dim]");
    const int n = x.shape[0];
    const int width = x.shape[1];
    if (n != layout.total()) throw ShapeError("apply_rope: token count does not match layout");
    if (width % table.head_dim != 0) throw ShapeError("apply_rope: width not a multiple of head_dim");
    const int heads = width / table.head_dim;
    const int pairs = table.head_dim / 2;
    auto angles = std::make_shared<detail::RopeAngles>(detail::rope_angles(layout, table));

    auto rotate = [n, heads, pairs, angles](const float* src, float* dst, bool inverse) {
        for (int i = 0; i < n; ++i) {
            const float* c = angles->cosv.data() + std::size_t(i) * pairs;
            const float* s = angles->sinv.data() + std::size_t(i) * pairs;
            for (int h = 0; h < heads; ++h) {
                const std::size_t base = (std::size_t(i) * heads + h) * std::size_t(2 * pairs);
                for (int p = 0; p < pairs; ++p) {
                    const float u = src[base + 2 * p];
                    const float v = src[base + 2 * p + 1];
                    const float sp = inverse ? -s[p] : s[p];
                    dst[base + 2 * p] = u * c[p] - v * sp;
                    dst[base + 2 * p + 1] = u * sp + v * c[p];
                }
            }
        }
    };

    Tensor out = detail::make_result(x.shape, {x}, [rotate](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        std::vector<float> tmp(o.numel());
        rotate(o.grad->data(), tmp.data(), true);
        for (std::size_t i = 0; i < tmp.size(); ++i) (*px.grad)[i] += tmp[i];
    });
    rotate(x.ptr(), out.mut_ptr(), false);
    return out;
}

}  // namespace effectlab
