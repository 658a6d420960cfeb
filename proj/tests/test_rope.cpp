#include <gtest/gtest.h>

#include "effectlab/rope.hpp"

using namespace effectlab;

namespace {

TokenLayout single_token_layout(Stream stream, int frame, int row, int col, GridShape ref_g, GridShape tgt_g) {
    TokenLayout lay;
    lay.ref_grid = ref_g;
    lay.tgt_grid = tgt_g;
    if (stream == Stream::reference) {
        lay.tokens = {TokenInfo{Stream::reference, true, frame, row, col}};
        lay.n_ref = 1;
        lay.n_tgt = 0;
    } else {
        lay.tokens = {TokenInfo{Stream::target, false, frame, row, col}};
        lay.n_ref = 0;
        lay.n_tgt = 1;
    }
    return lay;
}

RopeTable table_for(int head_dim, int dim_t, int dim_h, int dim_w, int bias) {
    RopeTable t;
    t.head_dim = head_dim;
    t.dim_t = dim_t;
    t.dim_h = dim_h;
    t.dim_w = dim_w;
    t.theta = 10000.0f;
    t.temporal_bias = bias;
    return t;
}

// Independent scalar 3D RoPE: per sub-band, adjacent pairs rotated by
// pos * theta^(-2i/d_band), computed in double.
std::vector<double> scalar_rope(const std::vector<double>& x, int frame, int row, int col, int dim_t, int dim_h,
                                int dim_w, double theta) {
    std::vector<double> out(x.size());
    const int bands[3] = {dim_t, dim_h, dim_w};
    const int coords[3] = {frame, row, col};
    int off = 0;
    for (int b = 0; b < 3; ++b) {
        for (int p = 0; p < bands[b] / 2; ++p) {
            const double ang = coords[b] * std::pow(theta, -2.0 * p / bands[b]);
            const double c = std::cos(ang), s = std::sin(ang);
            out[std::size_t(off)] = x[std::size_t(off)] * c - x[std::size_t(off) + 1] * s;
            out[std::size_t(off) + 1] = x[std::size_t(off)] * s + x[std::size_t(off) + 1] * c;
            off += 2;
        }
    }
    return out;
}

double rope_dot(int head_dim, const RopeTable& table, const std::vector<float>& qv, const std::vector<float>& kv,
                int qf, int qr, int qc, int kf, int kr, int kc) {
    GridShape g{64, 64, 64};
    TokenLayout lq = single_token_layout(Stream::target, qf, qr, qc, g, g);
    TokenLayout lk = single_token_layout(Stream::target, kf, kr, kc, g, g);
    Tensor q = apply_rope(Tensor::from({1, head_dim}, qv), lq, table);
    Tensor k = apply_rope(Tensor::from({1, head_dim}, kv), lk, table);
    double dot = 0.0;
    for (int i = 0; i < head_dim; ++i) dot += double((*q.data)[std::size_t(i)]) * double((*k.data)[std::size_t(i)]);
    return dot;
}

}  // namespace

TEST(Rope, ZeroPositionIsIdentity) {
    const RopeTable t = table_for(8, 4, 2, 2, 0);
    TokenLayout lay = single_token_layout(Stream::reference, 0, 0, 0, {4, 4, 4}, {4, 4, 4});
    Rng rng(1);
    Tensor x = Tensor::randn({1, 8}, rng);
    Tensor y = apply_rope(x, lay, t);
    for (int i = 0; i < 8; ++i) EXPECT_FLOAT_EQ((*y.data)[std::size_t(i)], (*x.data)[std::size_t(i)]);
}

TEST(Rope, PreservesNorm) {
    const RopeTable t = table_for(16, 8, 4, 4, 10);
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int f = int(rng.below(40)), r = int(rng.below(32)), c = int(rng.below(32));
        const Stream s = trial % 2 ? Stream::reference : Stream::target;
        TokenLayout lay = single_token_layout(s, f, r, c, {8, 8, 8}, {16, 16, 16});
        Tensor x = Tensor::randn({1, 32}, rng);  // 2 heads
        Tensor y = apply_rope(x, lay, t);
        double nx = 0.0, ny = 0.0;
        for (std::size_t i = 0; i < 32; ++i) {
            nx += double((*x.data)[i]) * double((*x.data)[i]);
            ny += double((*y.data)[i]) * double((*y.data)[i]);
        }
        EXPECT_NEAR(std::sqrt(nx), std::sqrt(ny), 1e-5);
    }
}

TEST(Rope, RelativePositionProperty) {
    const RopeTable t = table_for(12, 4, 4, 4, 0);
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<float> qv(12), kv(12);
        for (auto& v : qv) v = rng.normal_f();
        for (auto& v : kv) v = rng.normal_f();
        // per-axis shifts: same delta must give the same dot product
        const int p[3] = {int(rng.below(20)), int(rng.below(20)), int(rng.below(20))};
        const int d[3] = {int(rng.below(6)), int(rng.below(6)), int(rng.below(6))};
        const double shifted = rope_dot(12, t, qv, kv, p[0], p[1], p[2], p[0] + d[0], p[1] + d[1], p[2] + d[2]);
        const double origin = rope_dot(12, t, qv, kv, 0, 0, 0, d[0], d[1], d[2]);
        EXPECT_NEAR(shifted, origin, 1e-4);
    }
}

TEST(Rope, MatchesScalarOracle) {
    // B=0, single stream: standard 3D RoPE.
    const RopeTable t = table_for(12, 6, 4, 2, 0);
    Rng rng(4);
    for (int trial = 0; trial < 25; ++trial) {
        const int f = int(rng.below(30)), r = int(rng.below(30)), c = int(rng.below(30));
        TokenLayout lay = single_token_layout(Stream::target, f, r, c, {8, 8, 8}, {8, 8, 8});
        std::vector<float> xv(12);
        for (auto& v : xv) v = rng.normal_f();
        Tensor y = apply_rope(Tensor::from({1, 12}, xv), lay, t);
        std::vector<double> xd(xv.begin(), xv.end());
        const auto expect = scalar_rope(xd, f, r, c, 6, 4, 2, 10000.0);
        for (int i = 0; i < 12; ++i) EXPECT_NEAR((*y.data)[std::size_t(i)], expect[std::size_t(i)], 1e-5);
    }
}

TEST(Rope, EveryHeadGetsSameRotation) {
    const RopeTable t = table_for(8, 4, 2, 2, 3);
    TokenLayout lay = single_token_layout(Stream::target, 5, 2, 7, {4, 4, 4}, {8, 8, 8});
    Rng rng(5);
    std::vector<float> head(8);
    for (auto& v : head) v = rng.normal_f();
    std::vector<float> two_heads = head;
    two_heads.insert(two_heads.end(), head.begin(), head.end());
    Tensor y = apply_rope(Tensor::from({1, 16}, two_heads), lay, t);
    for (int i = 0; i < 8; ++i) EXPECT_FLOAT_EQ((*y.data)[std::size_t(i)], (*y.data)[std::size_t(8 + i)]);
}

TEST(EffectivePosition, TargetPassesThrough) {
    TokenLayout lay = single_token_layout(Stream::target, 3, 1, 2, {4, 4, 4}, {8, 8, 8});
    const auto p = effective_position(lay.at(0), lay, 1000);
    EXPECT_EQ(p.frame, 3);
    EXPECT_EQ(p.row, 1);
    EXPECT_EQ(p.col, 2);
}

TEST(EffectivePosition, ReferenceGetsTemporalBias) {
    TokenLayout lay = single_token_layout(Stream::reference, 0, 0, 0, {4, 4, 4}, {4, 4, 4});
    const auto p = effective_position(lay.at(0), lay, 32);
    EXPECT_EQ(p.frame, 32);
    EXPECT_EQ(p.row, 0);
    EXPECT_EQ(p.col, 0);
}

TEST(EffectivePosition, SpatialAlignmentScalesToTargetGrid) {
    TokenLayout lay = single_token_layout(Stream::reference, 0, 2, 3, {4, 4, 4}, {4, 8, 8});
    const auto p = effective_position(lay.at(0), lay, 0);
    EXPECT_EQ(p.col, 6);  // ref col 3 on a 4-wide grid -> col 6 on an 8-wide grid
    EXPECT_EQ(p.row, 4);
}

TEST(EffectivePosition, NoTemporalCollisionWithSafeBias) {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.heads = 1;
    cfg.head_dim = 8;
    cfg.latent_channels = 1;
    for (auto [rf, tf] : {std::pair{2, 4}, {3, 5}, {1, 8}}) {
        TokenLayout lay = build_layout({1, rf, 4, 4}, {1, tf, 8, 8}, cfg);
        const int bias = tf + rf;
        for (int i = 0; i < lay.n_ref; ++i) {
            const auto rp = effective_position(lay.at(i), lay, bias);
            for (int j = lay.n_ref; j < lay.total(); ++j)
                EXPECT_NE(rp.frame, effective_position(lay.at(j), lay, bias).frame);
        }
    }
}

TEST(Rope, AutoBiasIsTwiceTargetFrames) {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.heads = 1;
    cfg.head_dim = 8;
    cfg.latent_channels = 1;
    TokenLayout lay = build_layout({1, 3, 4, 4}, {1, 5, 8, 8}, cfg);
    EXPECT_EQ(RopeTable::make(cfg, lay).temporal_bias, 10);
}

TEST(Rope, BadPartitionThrows) {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.heads = 1;
    cfg.head_dim = 8;
    cfg.rope_dim_t = 3;  // odd
    cfg.rope_dim_h = 3;
    cfg.rope_dim_w = 2;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.rope_dim_t = 4;
    cfg.rope_dim_h = 2;
    cfg.rope_dim_w = 4;  // sums to 10 != 8
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Rope, LinearInInput) {
    const RopeTable t = table_for(8, 4, 2, 2, 7);
    TokenLayout lay = single_token_layout(Stream::reference, 1, 2, 3, {4, 4, 4}, {8, 8, 8});
    Rng rng(6);
    Tensor a = Tensor::randn({1, 8}, rng);
    Tensor b = Tensor::randn({1, 8}, rng);
    Tensor lhs = apply_rope(add(a, scale(b, 2.5f)), lay, t);
    Tensor rhs = add(apply_rope(a, lay, t), scale(apply_rope(b, lay, t), 2.5f));
    for (int i = 0; i < 8; ++i) EXPECT_NEAR((*lhs.data)[std::size_t(i)], (*rhs.data)[std::size_t(i)], 1e-6);
}
