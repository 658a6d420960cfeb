#include <gtest/gtest.h>

#include "effectlab/attention.hpp"
#include "effectlab/gradcheck.hpp"
#include "oracles.hpp"

using namespace effectlab;

namespace {

TokenLayout two_stream_layout(int n_ref_frames, int n_tgt_frames, int rows, int cols) {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.heads = 1;
    cfg.head_dim = 8;
    cfg.latent_channels = 1;
    cfg.patch_h = 1;
    cfg.patch_w = 1;
    return build_layout({1, n_ref_frames, rows, cols}, {1, n_tgt_frames, rows, cols}, cfg);
}

Tensor identity_matrix(int n) {
    Tensor t = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) (*t.data)[std::size_t(i) * n + i] = 1.0f;
    return t;
}

StreamProj identity_proj(int width) {
    StreamProj p;
    p.wq = identity_matrix(width);
    p.wk = identity_matrix(width);
    p.wv = identity_matrix(width);
    p.wo = identity_matrix(width);
    return p;
}

}  // namespace

TEST(DualStream, EqualTokensAverageToThemselves) {
    // 1 ref + 1 tgt token with identity projections and equal values: softmax
    // over equal logits averages equal values back to the input.
    const int width = 8;
    TokenLayout lay = two_stream_layout(1, 1, 1, 1);
    Rng rng(1);
    Tensor v = Tensor::randn({1, width}, rng);
    Tensor tokens = concat({v, v}, 0);
    DualStreamWeights w = DualStreamWeights::tied(identity_proj(width));
    Tensor out = dual_stream_self_attention(tokens, lay, w, {width, 1, width}, std::nullopt);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < width; ++j)
            EXPECT_NEAR((*out.data)[std::size_t(i) * width + j], (*v.data)[std::size_t(j)], 1e-6);
}

TEST(DualStream, TiedWeightsBitMatchSingleStream) {
    const int width = 16, heads = 2;
    TokenLayout lay = two_stream_layout(1, 2, 2, 2);
    Rng rng(2);
    StreamProj shared = StreamProj::init(width, rng);
    DualStreamWeights tied = DualStreamWeights::tied(shared);
    Tensor tokens = Tensor::randn({lay.total(), width}, rng);

    ModelConfig rc;
    rc.width = width;
    rc.heads = heads;
    rc.head_dim = width / heads;
    RopeTable rope = RopeTable::make(rc, lay);

    Tensor dual = dual_stream_self_attention(tokens, lay, tied, {width, heads, width / heads}, rope);
    Tensor single = single_stream_self_attention(tokens, lay, shared, {width, heads, width / heads}, rope);
    EXPECT_EQ(*dual.data, *single.data);  // bit-level
}

TEST(DualStream, MatchesScalarOracle) {
    const int width = 16, heads = 2;
    TokenLayout lay = two_stream_layout(3, 4, 1, 1);  // 3 ref + 4 tgt tokens
    ASSERT_EQ(lay.n_ref, 3);
    ASSERT_EQ(lay.n_tgt, 4);
    ModelConfig rc;
    rc.width = width;
    rc.heads = heads;
    rc.head_dim = width / heads;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(77, seed));
        DualStreamWeights w = DualStreamWeights::init(width, rng);
        Tensor tokens = Tensor::randn({lay.total(), width}, rng);
        RopeTable rope = RopeTable::make(rc, lay);
        Tensor out = dual_stream_self_attention(tokens, lay, w, {width, heads, width / heads}, rope);
        const auto expect = oracle::dual_stream_attention(
            oracle::to_mat(tokens), lay, oracle::to_mat(w.ref.wq), oracle::to_mat(w.ref.wk),
            oracle::to_mat(w.ref.wv), oracle::to_mat(w.ref.wo), oracle::to_mat(w.tgt.wq),
            oracle::to_mat(w.tgt.wk), oracle::to_mat(w.tgt.wv), oracle::to_mat(w.tgt.wo), heads, rope);
        for (int i = 0; i < lay.total(); ++i)
            for (int j = 0; j < width; ++j)
                EXPECT_NEAR((*out.data)[std::size_t(i) * width + j], expect[std::size_t(i)][std::size_t(j)], 1e-5)
                    << "seed " << seed << " token " << i << " dim " << j;
    }
}

TEST(DualStream, EmptyStreamThrows) {
    const int width = 8;
    TokenLayout lay = two_stream_layout(1, 1, 1, 1);
    lay.n_tgt = 0;
    lay.tokens.pop_back();
    Tensor tokens = Tensor::zeros({1, width});
    DualStreamWeights w = DualStreamWeights::tied(identity_proj(width));
    EXPECT_THROW(dual_stream_self_attention(tokens, lay, w, {width, 1, width}, std::nullopt), ShapeError);
}

TEST(SingleStream, HeadPermutationPermutesOutputBlocks) {
    const int width = 8, heads = 2, hd = 4;
    TokenLayout lay = two_stream_layout(1, 3, 1, 1);
    Rng rng(3);
    StreamProj w = StreamProj::init(width, rng);
    w.wo = identity_matrix(width);
    // swap the two head column blocks of wq/wk/wv
    StreamProj ws = w;
    for (Tensor* m : {&ws.wq, &ws.wk, &ws.wv}) {
        Tensor swapped = Tensor::zeros({width, width});
        for (int r = 0; r < width; ++r)
            for (int c = 0; c < width; ++c)
                (*swapped.data)[std::size_t(r) * width + ((c + hd) % width)] = (*m->data)[std::size_t(r) * width + c];
        *m = swapped;
    }
    Tensor tokens = Tensor::randn({lay.total(), width}, rng);
    Tensor base = single_stream_self_attention(tokens, lay, w, {width, heads, hd}, std::nullopt);
    Tensor perm = single_stream_self_attention(tokens, lay, ws, {width, heads, hd}, std::nullopt);
    for (int i = 0; i < lay.total(); ++i)
        for (int j = 0; j < width; ++j)
            EXPECT_EQ((*perm.data)[std::size_t(i) * width + ((j + hd) % width)],
                      (*base.data)[std::size_t(i) * width + j]);
}

TEST(SingleStream, GradientMatchesFiniteDifferences) {
    const int width = 8;
    TokenLayout lay = two_stream_layout(1, 3, 1, 1);  // 4 tokens
    Rng rng(4);
    Tensor tokens = Tensor::zeros({lay.total(), width}, true);
    for (auto& v : *tokens.data) v = float(rng.uniform(-1.0, 1.0));
    StreamProj w = StreamProj::init(width, rng);
    std::vector<Tensor> leaves{tokens, w.wq, w.wk, w.wv, w.wo};
    const double err = gradcheck_max_rel_err(
        leaves, [&]() { return single_stream_self_attention(leaves[0], lay, w, {width, 2, 4}, std::nullopt); },
        99, 1e-2);
    EXPECT_LT(err, 1e-3);
}

TEST(DecoupledCA, DroppedUnderstandingEqualsTextOnly) {
    const int width = 8;
    Rng rng(5);
    DecoupledCAWeights w = DecoupledCAWeights::init(width, width, rng);
    Tensor tgt = Tensor::randn({5, width}, rng);
    SemanticCondition cond;
    cond.reasoning = Tensor::randn({3, width}, rng);
    cond.understanding = Tensor::zeros({1, width});
    cond.drop_understanding = true;

    Tensor out = decoupled_cross_attention(tgt, cond, w, {width, 2, 4});
    const auto expect = oracle::cross_attention(
        oracle::to_mat(tgt), oracle::to_mat(cond.reasoning), {}, oracle::to_mat(w.wq), oracle::to_mat(w.wk_txt),
        oracle::to_mat(w.wv_txt), {}, {}, oracle::to_mat(w.wo), 2, false, true);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < width; ++j)
            EXPECT_NEAR((*out.data)[std::size_t(i) * width + j], expect[std::size_t(i)][std::size_t(j)], 1e-5);
}

TEST(DecoupledCA, SingleTokenIdentityGivesSummedValues) {
    // One condition token per stream with identity projections: softmax over
    // one key is 1, so the output is value_txt + value_und.
    const int width = 4;
    DecoupledCAWeights w;
    w.wq = identity_matrix(width);
    w.wk_txt = identity_matrix(width);
    w.wv_txt = identity_matrix(width);
    w.wk_und = identity_matrix(width);
    w.wv_und = identity_matrix(width);
    w.wo = identity_matrix(width);
    Rng rng(6);
    Tensor tgt = Tensor::randn({3, width}, rng);
    SemanticCondition cond;
    cond.reasoning = Tensor::randn({1, width}, rng);
    cond.understanding = Tensor::randn({1, width}, rng);
    Tensor out = decoupled_cross_attention(tgt, cond, w, {width, 1, width});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < width; ++j)
            EXPECT_NEAR((*out.data)[std::size_t(i) * width + j],
                        (*cond.reasoning.data)[std::size_t(j)] + (*cond.understanding.data)[std::size_t(j)], 1e-6);
}

TEST(DecoupledCA, MatchesScalarOracle) {
    const int width = 16, heads = 2;
    Rng rng(7);
    DecoupledCAWeights w = DecoupledCAWeights::init(width, width, rng);
    Tensor tgt = Tensor::randn({5, width}, rng);
    SemanticCondition cond;
    cond.reasoning = Tensor::randn({3, width}, rng);
    cond.understanding = Tensor::randn({2, width}, rng);
    Tensor out = decoupled_cross_attention(tgt, cond, w, {width, heads, width / heads});
    const auto expect = oracle::cross_attention(
        oracle::to_mat(tgt), oracle::to_mat(cond.reasoning), oracle::to_mat(cond.understanding),
        oracle::to_mat(w.wq), oracle::to_mat(w.wk_txt), oracle::to_mat(w.wv_txt), oracle::to_mat(w.wk_und),
        oracle::to_mat(w.wv_und), oracle::to_mat(w.wo), heads, false, false);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < width; ++j)
            EXPECT_NEAR((*out.data)[std::size_t(i) * width + j], expect[std::size_t(i)][std::size_t(j)], 1e-5);
}

TEST(DecoupledCA, ReferenceTokensNeverParticipate) {
    // Cross-attention consumes only the target span: perturbing the
    // reference span of the sequence cannot change its output.
    const int width = 8;
    TokenLayout lay = two_stream_layout(2, 2, 1, 1);
    Rng rng(8);
    DecoupledCAWeights w = DecoupledCAWeights::init(width, width, rng);
    SemanticCondition cond;
    cond.reasoning = Tensor::randn({2, width}, rng);
    cond.understanding = Tensor::randn({2, width}, rng);
    Tensor x = Tensor::randn({lay.total(), width}, rng);
    Tensor x_perturbed = x.clone();
    for (int i = 0; i < lay.n_ref * width; ++i) (*x_perturbed.data)[std::size_t(i)] += 3.0f;

    auto ca_on_target = [&](const Tensor& seq) {
        return decoupled_cross_attention(slice(seq, 0, lay.n_ref, lay.total()), cond, w, {width, 2, 4});
    };
    Tensor a = ca_on_target(x);
    Tensor b = ca_on_target(x_perturbed);
    EXPECT_EQ(*a.data, *b.data);
}

TEST(DecoupledCA, BranchOrderCommutes) {
    // Swapping the two branch weight sets along with their streams changes
    // nothing: the fusion is plain addition.
    const int width = 8;
    Rng rng(9);
    DecoupledCAWeights w = DecoupledCAWeights::init(width, width, rng);
    DecoupledCAWeights swapped = w;
    std::swap(swapped.wk_txt, swapped.wk_und);
    std::swap(swapped.wv_txt, swapped.wv_und);
    Tensor tgt = Tensor::randn({4, width}, rng);
    SemanticCondition cond;
    cond.reasoning = Tensor::randn({3, width}, rng);
    cond.understanding = Tensor::randn({2, width}, rng);
    SemanticCondition flipped;
    flipped.reasoning = cond.understanding;
    flipped.understanding = cond.reasoning;
    Tensor a = decoupled_cross_attention(tgt, cond, w, {width, 2, 4});
    Tensor b = decoupled_cross_attention(tgt, flipped, swapped, {width, 2, 4});
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR((*a.data)[i], (*b.data)[i], 1e-6);
}

TEST(Attention, ConvexCombinationWithIdentityValues) {
    // With identity value/output projections each output coordinate lies in
    // the convex hull of the value vectors.
    const int width = 8;
    TokenLayout lay = two_stream_layout(2, 3, 1, 1);
    Rng rng(10);
    StreamProj w = StreamProj::init(width, rng);
    w.wv = identity_matrix(width);
    w.wo = identity_matrix(width);
    Tensor tokens = Tensor::randn({lay.total(), width}, rng);
    Tensor out = single_stream_self_attention(tokens, lay, w, {width, 2, 4}, std::nullopt);
    for (int j = 0; j < width; ++j) {
        float lo = 1e30f, hi = -1e30f;
        for (int i = 0; i < lay.total(); ++i) {
            lo = std::min(lo, (*tokens.data)[std::size_t(i) * width + j]);
            hi = std::max(hi, (*tokens.data)[std::size_t(i) * width + j]);
        }
        for (int i = 0; i < lay.total(); ++i) {
            EXPECT_GE((*out.data)[std::size_t(i) * width + j], lo - 1e-5f);
            EXPECT_LE((*out.data)[std::size_t(i) * width + j], hi + 1e-5f);
        }
    }
}
