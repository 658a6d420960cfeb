#include <gtest/gtest.h>

#include <filesystem>

#include "effectlab/gradcheck.hpp"
#include "effectlab/tensor.hpp"

using namespace effectlab;

TEST(Matmul, IdentityCase) {
    Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(id, a);
    EXPECT_EQ(out.shape, (Shape{2, 2}));
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ((*out.data)[i], (*a.data)[i]);
}

TEST(Matmul, HandArithmetic) {
    Tensor a = Tensor::from({1, 2}, {1, 2});
    Tensor b = Tensor::from({2, 1}, {3, 4});
    EXPECT_FLOAT_EQ(matmul(a, b).item(), 11.0f);
}

TEST(Matmul, ShapeMismatchThrows) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Softmax, UniformRows) {
    Tensor x = Tensor::zeros({3});
    Tensor y = softmax(x, 0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR((*y.data)[i], 1.0f / 3.0f, 1e-7f);
}

TEST(Softmax, NoOverflow) {
    Tensor x = Tensor::from({2}, {1000.0f, 0.0f});
    Tensor y = softmax(x, 0);
    EXPECT_NEAR((*y.data)[0], 1.0, 1e-9);
    EXPECT_NEAR((*y.data)[1], 0.0, 1e-9);
    EXPECT_TRUE(y.all_finite());
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(7);
    Tensor x = Tensor::randn({5, 9}, rng, 3.0f);
    Tensor y = softmax(x, 1);
    for (int r = 0; r < 5; ++r) {
        float s = 0.0f;
        for (int c = 0; c < 9; ++c) s += (*y.data)[std::size_t(r) * 9 + c];
        EXPECT_NEAR(s, 1.0f, 1e-5f);
    }
}

TEST(Rmsnorm, OnesFixedPoint) {
    Tensor x = Tensor::full({4}, 1.0f);
    Tensor w = Tensor::full({4}, 1.0f);
    Tensor y = rmsnorm(x, w, 0.0f);
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ((*y.data)[i], 1.0f);
}

TEST(Rmsnorm, ZeroVector) {
    Tensor x = Tensor::zeros({4});
    Tensor w = Tensor::full({4}, 1.0f);
    Tensor y = rmsnorm(x, w, 1e-6f);
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ((*y.data)[i], 0.0f);
}

TEST(ConcatSlice, ShapeLaw) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({1, 3});
    EXPECT_EQ(concat({a, b}, 0).shape, (Shape{3, 3}));
}

TEST(ConcatSlice, RoundTripBitExact) {
    Rng rng(3);
    Tensor a = Tensor::randn({2, 5}, rng);
    Tensor b = Tensor::randn({4, 5}, rng);
    Tensor c = concat({a, b}, 0);
    Tensor a2 = slice(c, 0, 0, 2);
    Tensor b2 = slice(c, 0, 2, 6);
    EXPECT_EQ(*a.data, *a2.data);
    EXPECT_EQ(*b.data, *b2.data);

    Tensor c1 = concat({a, a}, 1);
    Tensor left = slice(c1, 1, 0, 5);
    EXPECT_EQ(*left.data, *a.data);
}

TEST(Silu, ZeroMapsToZero) {
    EXPECT_FLOAT_EQ(silu(Tensor::zeros({1})).item(), 0.0f);
}

TEST(Ops, Determinism) {
    Rng r1(99), r2(99);
    Tensor a1 = Tensor::randn({7, 7}, r1);
    Tensor a2 = Tensor::randn({7, 7}, r2);
    EXPECT_EQ(*a1.data, *a2.data);
    Tensor m1 = matmul(a1, a1);
    Tensor m2 = matmul(a2, a2);
    EXPECT_EQ(*m1.data, *m2.data);
}

TEST(Autograd, BackwardTwiceThrows) {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    EXPECT_THROW(backward(loss), Error);
}

TEST(Autograd, AccumulatesUntilZeroGrad) {
    Tensor x = Tensor::from({1}, {3.0f}, true);
    {
        Tensor loss = sum(x);
        backward(loss);
    }
    EXPECT_FLOAT_EQ((*x.grad)[0], 1.0f);
    {
        Tensor loss = sum(x);
        backward(loss);
    }
    EXPECT_FLOAT_EQ((*x.grad)[0], 2.0f);
    x.zero_grad();
    EXPECT_FLOAT_EQ((*x.grad)[0], 0.0f);
}

TEST(Autograd, NoGradModeBuildsNoGraph) {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    NoGradGuard ng;
    Tensor y = mul(x, x);
    EXPECT_FALSE(y.requires_grad);
    EXPECT_EQ(y.node, nullptr);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Tensor p = Tensor::from({3}, {0.5f, -1.0f, 2.0f}, true);
    AdamState st;
    std::vector<float> g(3, 0.0f);
    adam_step(p, g, st, 1, 2e-5f, 0.9f, 0.999f, 1e-8f);
    EXPECT_FLOAT_EQ((*p.data)[0], 0.5f);
    EXPECT_FLOAT_EQ((*p.data)[1], -1.0f);
    EXPECT_FLOAT_EQ((*p.data)[2], 2.0f);
}

TEST(Adam, ConstantGradientMovesAgainstSign) {
    Tensor p = Tensor::from({1}, {0.0f}, true);
    AdamState st;
    std::vector<float> g{1.0f};
    float prev = 0.0f;
    for (long s = 1; s <= 100; ++s) {
        adam_step(p, g, st, s, 1e-3f, 0.9f, 0.999f, 1e-8f);
        EXPECT_LT((*p.data)[0], prev);
        prev = (*p.data)[0];
    }
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    // From m=v=0, bias correction makes step 1 equal -lr * sign(g).
    for (float g0 : {0.7f, -0.3f}) {
        Tensor p = Tensor::from({1}, {0.0f}, true);
        AdamState st;
        std::vector<float> g{g0};
        adam_step(p, g, st, 1, 2e-5f, 0.9f, 0.999f, 1e-8f);
        const float expected = g0 > 0 ? -2e-5f : 2e-5f;
        EXPECT_NEAR((*p.data)[0], expected, 1e-9f);
    }
}

TEST(Eftx, RoundTrip) {
    Rng rng(11);
    Tensor t = Tensor::randn({3, 4, 2}, rng);
    const std::string path = std::filesystem::temp_directory_path() / "eftx_roundtrip.eftx";
    write_eftx(path, t);
    Tensor back = read_eftx(path);
    EXPECT_EQ(back.shape, t.shape);
    EXPECT_EQ(*back.data, *t.data);
}

TEST(Eftx, BadMagicThrows) {
    const std::string path = std::filesystem::temp_directory_path() / "eftx_bad.eftx";
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234";
    os.close();
    EXPECT_THROW(read_eftx(path), IoError);
}

TEST(PermuteElements, BijectionRoundTrip) {
    Rng rng(5);
    Tensor t = Tensor::randn({2, 3}, rng);
    std::vector<std::size_t> rev{5, 4, 3, 2, 1, 0};
    Tensor p = permute_elements(t, rev, {6});
    Tensor back = permute_elements(p, rev, {2, 3});
    EXPECT_EQ(*back.data, *t.data);
}

TEST(GradSuite, AllOpsPassFiniteDifferences) {
    const auto entries = run_gradcheck_suite(1234, 5);
    for (const auto& e : entries) {
        EXPECT_TRUE(e.pass) << e.name << " max rel err " << e.max_rel_err << " vs tol " << e.tolerance;
    }
}
