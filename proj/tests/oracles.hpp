#pragma once

// Test-only scalar oracles, written as plain double-precision loops and kept
// independent of the library's op implementations.

#include <cmath>
#include <optional>
#include <vector>

#include "effectlab/layout.hpp"
#include "effectlab/rope.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const effectlab::Tensor& t) {
    Mat m(std::size_t(t.shape[0]), std::vector<double>(std::size_t(t.shape[1])));
    for (int i = 0; i < t.shape[0]; ++i)
        for (int j = 0; j < t.shape[1]; ++j)
            m[std::size_t(i)][std::size_t(j)] = double((*t.data)[std::size_t(i) * t.shape[1] + j]);
    return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

// Standard per-band pair rotation at the token's effective position.
inline void rope_rotate_row(std::vector<double>& row, const effectlab::EffectivePosition& pos, int heads,
                            int dim_t, int dim_h, int dim_w, double theta) {
    const int head_dim = dim_t + dim_h + dim_w;
    const int bands[3] = {dim_t, dim_h, dim_w};
    const int coords[3] = {pos.frame, pos.row, pos.col};
    for (int h = 0; h < heads; ++h) {
        int off = h * head_dim;
        for (int b = 0; b < 3; ++b)
            for (int p = 0; p < bands[b] / 2; ++p) {
                const double ang = coords[b] * std::pow(theta, -2.0 * p / bands[b]);
                const double c = std::cos(ang), s = std::sin(ang);
                const double u = row[std::size_t(off)], v = row[std::size_t(off) + 1];
                row[std::size_t(off)] = u * c - v * s;
                row[std::size_t(off) + 1] = u * s + v * c;
                off += 2;
            }
    }
}

// Brute-force dual-stream attention: per-stream projections, optional RoPE
// on q/k, every query attends over the concatenated keys/values, per-stream
// output projection.
inline Mat dual_stream_attention(const Mat& tokens, const effectlab::TokenLayout& layout, const Mat& wq_r,
                                 const Mat& wk_r, const Mat& wv_r, const Mat& wo_r, const Mat& wq_t,
                                 const Mat& wk_t, const Mat& wv_t, const Mat& wo_t, int heads,
                                 const std::optional<effectlab::RopeTable>& rope) {
    const int n = int(tokens.size());
    const int width = int(tokens[0].size());
    const int head_dim = width / heads;
    Mat q(static_cast<std::size_t>(n)), k(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool is_ref = i < layout.n_ref;
        Mat row{tokens[std::size_t(i)]};
        q[std::size_t(i)] = matmul(row, is_ref ? wq_r : wq_t)[0];
        k[std::size_t(i)] = matmul(row, is_ref ? wk_r : wk_t)[0];
        v[std::size_t(i)] = matmul(row, is_ref ? wv_r : wv_t)[0];
        if (rope) {
            const auto pos = effective_position(layout.at(i), layout, rope->temporal_bias);
            rope_rotate_row(q[std::size_t(i)], pos, heads, rope->dim_t, rope->dim_h, rope->dim_w, rope->theta);
            rope_rotate_row(k[std::size_t(i)], pos, heads, rope->dim_t, rope->dim_h, rope->dim_w, rope->theta);
        }
    }
    Mat ctx(std::size_t(n), std::vector<double>(std::size_t(width), 0.0));
    const double scale = 1.0 / std::sqrt(double(head_dim));
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < heads; ++h) {
            std::vector<double> logits(static_cast<std::size_t>(n));
            double mx = -1e300;
            for (int j = 0; j < n; ++j) {
                double dot = 0.0;
                for (int d = 0; d < head_dim; ++d)
                    dot += q[std::size_t(i)][std::size_t(h * head_dim + d)] *
                           k[std::size_t(j)][std::size_t(h * head_dim + d)];
                logits[std::size_t(j)] = dot * scale;
                mx = std::max(mx, logits[std::size_t(j)]);
            }
            double denom = 0.0;
            for (int j = 0; j < n; ++j) denom += std::exp(logits[std::size_t(j)] - mx);
            for (int j = 0; j < n; ++j) {
                const double p = std::exp(logits[std::size_t(j)] - mx) / denom;
                for (int d = 0; d < head_dim; ++d)
                    ctx[std::size_t(i)][std::size_t(h * head_dim + d)] +=
                        p * v[std::size_t(j)][std::size_t(h * head_dim + d)];
            }
        }
    Mat out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Mat row{ctx[std::size_t(i)]};
        out[std::size_t(i)] = matmul(row, i < layout.n_ref ? wo_r : wo_t)[0];
    }
    return out;
}

// Brute-force decoupled cross-attention: shared query, two k/v branches,
// branch outputs summed, then the output projection.
inline Mat cross_attention(const Mat& tgt, const Mat& reasoning, const Mat& understanding, const Mat& wq,
                           const Mat& wk_txt, const Mat& wv_txt, const Mat& wk_und, const Mat& wv_und,
                           const Mat& wo, int heads, bool drop_txt, bool drop_und) {
    const int n = int(tgt.size());
    const int width = int(wq[0].size());
    const int head_dim = width / heads;
    Mat q = matmul(tgt, wq);
    Mat fused(std::size_t(n), std::vector<double>(std::size_t(width), 0.0));
    const double scale = 1.0 / std::sqrt(double(head_dim));
    auto branch = [&](const Mat& cond, const Mat& wk, const Mat& wv) {
        Mat k = matmul(cond, wk);
        Mat v = matmul(cond, wv);
        for (int i = 0; i < n; ++i)
            for (int h = 0; h < heads; ++h) {
                const int m = int(cond.size());
                std::vector<double> logits(static_cast<std::size_t>(m));
                double mx = -1e300;
                for (int j = 0; j < m; ++j) {
                    double dot = 0.0;
                    for (int d = 0; d < head_dim; ++d)
                        dot += q[std::size_t(i)][std::size_t(h * head_dim + d)] *
                               k[std::size_t(j)][std::size_t(h * head_dim + d)];
                    logits[std::size_t(j)] = dot * scale;
                    mx = std::max(mx, logits[std::size_t(j)]);
                }
                double denom = 0.0;
                for (int j = 0; j < m; ++j) denom += std::exp(logits[std::size_t(j)] - mx);
                for (int j = 0; j < m; ++j) {
                    const double p = std::exp(logits[std::size_t(j)] - mx) / denom;
                    for (int d = 0; d < head_dim; ++d)
                        fused[std::size_t(i)][std::size_t(h * head_dim + d)] +=
                            p * v[std::size_t(j)][std::size_t(h * head_dim + d)];
                }
            }
    };
    if (!drop_txt) branch(reasoning, wk_txt, wv_txt);
    if (!drop_und) branch(understanding, wk_und, wv_und);
    return matmul(fused, wo);
}

}  // namespace oracle
