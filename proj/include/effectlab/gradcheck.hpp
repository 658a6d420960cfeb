#pragma once

// Central-difference gradient checking. The probe loss is a fixed random
// weighted sum of the op output; differences and the weighted reduction run
// in double precision, the ops themselves stay float32. Relative error uses
// a 0.1 denominator floor so near-zero gradients are judged by absolute
// error ~1e-4 at the 1e-3 tolerance.

#include "effectlab/condition.hpp"
#include "effectlab/dit.hpp"
#include "effectlab/flow.hpp"
#include "effectlab/gradcheck_fwd.hpp"

namespace effectlab {

inline double gradcheck_max_rel_err(std::vector<Tensor>& leaves, const std::function<Tensor()>& fn,
                                    uint64_t seed, double h) {
    Rng wrng(mix_seed(seed, 0x3e16457ULL));
    Tensor out0 = fn();
    std::vector<float> w(out0.numel());
    for (auto& v : w) {
        const double m = wrng.uniform(0.5, 1.5);
        v = float(wrng.uniform() < 0.5 ? -m : m);
    }
    Tensor w_t = Tensor::from(out0.shape, w);
    Tensor loss = sum(mul(out0, w_t));
    for (auto& l : leaves) l.zero_grad();
    backward(loss);

    auto eval64 = [&]() {
        NoGradGuard ng;
        Tensor o = fn();
        double acc = 0.0;
        for (std::size_t i = 0; i < o.numel(); ++i) acc += double((*o.data)[i]) * double(w[i]);
        return acc;
    };

    double max_rel = 0.0;
    for (auto& leaf : leaves) {
        if (!leaf.requires_grad) continue;
        for (std::size_t i = 0; i < leaf.numel(); ++i) {
            const float orig = (*leaf.data)[i];
            (*leaf.data)[i] = float(orig + h);
            const double fp = eval64();
            (*leaf.data)[i] = float(orig - h);
            const double fm = eval64();
            (*leaf.data)[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = double((*leaf.grad)[i]);
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 0.1});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

namespace detail {

inline Tensor rand_leaf(const Shape& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape, true);
    for (auto& v : *t.data) v = float(rng.uniform(-1.0, 1.0));
    return t;
}

struct OpCase {
    std::string name;
    double tolerance;
    // builds leaves + a forward closure for one seeded trial
    std::function<double(uint64_t)> run;
};

inline double check_binary(uint64_t seed, const Shape& shape, const std::function<Tensor(Tensor&, Tensor&)>& op) {
    Rng rng(seed);
    std::vector<Tensor> leaves{rand_leaf(shape, rng), rand_leaf(shape, rng)};
    return gradcheck_max_rel_err(leaves, [&]() { return op(leaves[0], leaves[1]); }, seed, 1e-2);
}

inline double check_unary(uint64_t seed, const Shape& shape, const std::function<Tensor(Tensor&)>& op) {
    Rng rng(seed);
    std::vector<Tensor> leaves{rand_leaf(shape, rng)};
    return gradcheck_max_rel_err(leaves, [&]() { return op(leaves[0]); }, seed, 1e-2);
}

inline double check_end_to_end(uint64_t seed, int n_probes, double h) {
    Rng rng(mix_seed(seed, 0xe2eULL));
    ModelConfig cfg;
    cfg.width = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.head_dim = 8;
    cfg.patch_t = 1;
    cfg.patch_h = 2;
    cfg.patch_w = 2;
    cfg.latent_channels = 2;
    cfg.ffn_mult = 2;
    cfg.n_und_tokens = 2;
    DiTModel model = DiTModel::init(cfg, AttentionMode::dual, seed);
    // Head is zero-initialized by construction; perturb it so the loss
    // actually depends on upstream parameters.
    {
        Rng hr(mix_seed(seed, 0xeadULL));
        for (auto& v : *model.head.w.data) v = 0.1f * hr.normal_f();
    }
    ParamMap params;
    model.register_params(params);

    Tensor ref = Tensor::randn({2, 1, 4, 4}, rng);
    Tensor x0 = Tensor::randn({2, 2, 4, 4}, rng);
    Tensor eps = Tensor::randn({2, 2, 4, 4}, rng);
    Tensor mask = noisy_mask(x0.shape);
    Tensor x_t = noise_target(x0, eps, 0.4f, mask);
    SemanticCondition cond;
    cond.reasoning = rand_leaf({3, 16}, rng);
    cond.understanding = rand_leaf({2, 16}, rng);

    auto loss_fn = [&]() { return fm_loss(model.forward(ref, x_t, cond, 0.4f), x0, eps, mask); };

    Tensor loss = loss_fn();
    for (auto& p : params) p.tensor.zero_grad();
    cond.reasoning.zero_grad();
    cond.understanding.zero_grad();
    backward(loss);

    auto eval_loss = [&]() {
        NoGradGuard ng;
        return double(loss_fn().item());
    };

    double max_rel = 0.0;
    for (int probe = 0; probe < n_probes; ++probe) {
        Tensor* leaf;
        if (probe % 5 == 4) {
            leaf = probe % 2 ? &cond.reasoning : &cond.understanding;
        } else {
            leaf = &params[std::size_t(rng.below(params.size()))].tensor;
        }
        const std::size_t e = std::size_t(rng.below(leaf->numel()));
        const float orig = (*leaf->data)[e];
        (*leaf->data)[e] = float(orig + h);
        const double fp = eval_loss();
        (*leaf->data)[e] = float(orig - h);
        const double fm = eval_loss();
        (*leaf->data)[e] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = double((*leaf->grad)[e]);
        const double rel =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 0.1});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace detail

// Runs `trials` seeded trials per op and reports the worst relative error.
// Tolerances: 1e-3 for single ops, 1e-2 for the 2-block end-to-end model.
inline std::vector<GradCheckEntry> run_gradcheck_suite(uint64_t seed, int trials) {
    using detail::check_binary;
    using detail::check_unary;
    using detail::rand_leaf;

    std::vector<detail::OpCase> cases;
    cases.push_back({"matmul", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({4, 5}, rng), rand_leaf({5, 3}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return matmul(leaves[0], leaves[1]); }, s, 1e-2);
    }});
    cases.push_back({"transpose2d", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return transpose2d(x); });
    }});
    cases.push_back({"add", 1e-3, [](uint64_t s) {
        return check_binary(s, {3, 4}, [](Tensor& a, Tensor& b) { return add(a, b); });
    }});
    cases.push_back({"sub", 1e-3, [](uint64_t s) {
        return check_binary(s, {3, 4}, [](Tensor& a, Tensor& b) { return sub(a, b); });
    }});
    cases.push_back({"mul", 1e-3, [](uint64_t s) {
        return check_binary(s, {3, 4}, [](Tensor& a, Tensor& b) { return mul(a, b); });
    }});
    cases.push_back({"scale", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return scale(x, 1.7f); });
    }});
    cases.push_back({"add_bias", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({3, 4}, rng), rand_leaf({4}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return add_bias(leaves[0], leaves[1]); }, s, 1e-2);
    }});
    cases.push_back({"silu", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return silu(x); });
    }});
    cases.push_back({"softmax_axis0", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return softmax(x, 0); });
    }});
    cases.push_back({"softmax_axis1", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return softmax(x, 1); });
    }});
    cases.push_back({"rmsnorm", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({3, 4}, rng), rand_leaf({4}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return rmsnorm(leaves[0], leaves[1], 1e-6f); }, s, 1e-2);
    }});
    cases.push_back({"concat_axis0", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({2, 3}, rng), rand_leaf({1, 3}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return concat({leaves[0], leaves[1]}, 0); }, s, 1e-2);
    }});
    cases.push_back({"concat_axis1", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({3, 2}, rng), rand_leaf({3, 4}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return concat({leaves[0], leaves[1]}, 1); }, s, 1e-2);
    }});
    cases.push_back({"slice", 1e-3, [](uint64_t s) {
        return check_unary(s, {4, 5}, [](Tensor& x) { return slice(x, 1, 1, 4); });
    }});
    cases.push_back({"reshape", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return reshape(x, {2, 6}); });
    }});
    cases.push_back({"sum", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return sum(x); });
    }});
    cases.push_back({"mean", 1e-3, [](uint64_t s) {
        return check_unary(s, {3, 4}, [](Tensor& x) { return mean(x); });
    }});
    cases.push_back({"embedding", 1e-3, [](uint64_t s) {
        Rng rng(s);
        std::vector<Tensor> leaves{rand_leaf({5, 4}, rng)};
        const std::vector<int> ids{1, 3, 1, 0};
        return gradcheck_max_rel_err(leaves, [&]() { return embedding(leaves[0], ids); }, s, 1e-2);
    }});
    cases.push_back({"pool_rows", 1e-3, [](uint64_t s) {
        return check_unary(s, {7, 3}, [](Tensor& x) { return pool_rows(x, 3); });
    }});
    cases.push_back({"apply_rope", 1e-3, [](uint64_t s) {
        Rng rng(s);
        ModelConfig cfg;
        cfg.width = 8;
        cfg.heads = 1;
        cfg.head_dim = 8;
        cfg.latent_channels = 1;
        TokenLayout lay = build_layout({1, 2, 2, 2}, {1, 2, 2, 2}, cfg);
        RopeTable table = RopeTable::make(cfg, lay);
        std::vector<Tensor> leaves{rand_leaf({lay.total(), 8}, rng)};
        return gradcheck_max_rel_err(leaves, [&]() { return apply_rope(leaves[0], lay, table); }, s, 1e-2);
    }});

    std::vector<GradCheckEntry> entries;
    for (const auto& c : cases) {
        GradCheckEntry e;
        e.name = c.name;
        e.tolerance = c.tolerance;
        e.max_rel_err = 0.0;
        for (int t = 0; t < trials; ++t) e.max_rel_err = std::max(e.max_rel_err, c.run(mix_seed(seed, t)));
        e.pass = e.max_rel_err < e.tolerance;
        entries.push_back(std::move(e));
    }

    GradCheckEntry e2e;
    e2e.name = "end_to_end_2block";
    e2e.tolerance = 1e-2;
    e2e.max_rel_err = 0.0;
    const int e2e_trials = std::max(1, trials / 20);
    for (int t = 0; t < e2e_trials; ++t)
        e2e.max_rel_err = std::max(e2e.max_rel_err, detail::check_end_to_end(mix_seed(seed, 0xabcdULL, t), 20, 1e-2));
    e2e.pass = e2e.max_rel_err < e2e.tolerance;
    entries.push_back(std::move(e2e));
    return entries;
}

}  // namespace effectlab
