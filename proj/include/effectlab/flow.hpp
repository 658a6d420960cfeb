#pragma once

// Flow-matching training pieces and the Euler sampler. Rectified-flow
// parametrization: x_t = (1-sigma) x0 + sigma eps, velocity target eps - x0.
// Clean positions (target first frame; the reference never enters x) stay
// anchored to ground truth through noising, the loss mask, and every sampler
// step. Sampling walks a shifted sigma schedule with classifier-free
// guidance between the conditional and condition-dropped predictions.

#include <functional>

#include "effectlab/semantic_condition.hpp"
#include "effectlab/tensor.hpp"

namespace effectlab {

struct NoiseSchedule {
    int num_steps = 30;
    float shift = 16.0f;
    std::vector<float> sigmas;  // num_steps+1 values, 1 -> 0 strictly decreasing
};

// sigma_i = s*u / (1 + (s-1)*u) with u linear from 1 to 0; endpoints exact.
inline NoiseSchedule shifted_sigmas(int num_steps, float shift) {
    if (num_steps < 1) throw ConfigError("num_steps must be >= 1");
    if (shift < 1.0f) throw ConfigError("shift must be >= 1");
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.shift = shift;
    s.sigmas.resize(std::size_t(num_steps) + 1);
    for (int i = 0; i <= num_steps; ++i) {
        const double u = 1.0 - double(i) / double(num_steps);
        s.sigmas[std::size_t(i)] = float(double(shift) * u / (1.0 + (double(shift) - 1.0) * u));
    }
    s.sigmas.front() = 1.0f;
    s.sigmas.back() = 0.0f;
    return s;
}

// t = floor(T * sigmoid(1.5 z)) clamped into [0, T-1]; z standard normal.
// Biases density toward the middle timesteps.
inline int timestep_from_z(double z, int total_timesteps) {
    if (total_timesteps < 1) throw ConfigError("total_timesteps must be >= 1");
    const double u = 1.0 / (1.0 + std::exp(-1.5 * z));
    long t = long(std::floor(double(total_timesteps) * u));
    if (t < 0) t = 0;
    if (t > total_timesteps - 1) t = total_timesteps - 1;
    return int(t);
}

inline int sample_timestep(Rng& rng, int total_timesteps) {
    return timestep_from_z(rng.normal(), total_timesteps);
}

// Mask over a target latent [C,F,H,W]: 1 on noisy positions (frames >= 1),
// 0 on the clean first frame.
inline Tensor noisy_mask(const Shape& target_shape) {
    if (target_shape.size() != 4) throw ShapeError("noisy_mask: target must be [C,F,H,W]");
    Tensor m = Tensor::zeros(target_shape);
    const int C = target_shape[0], F = target_shape[1], H = target_shape[2], W = target_shape[3];
    const std::size_t hw = std::size_t(H) * W;
    for (int c = 0; c < C; ++c)
        for (int f = 1; f < F; ++f) {
            float* p = m.mut_ptr() + (std::size_t(c) * F + f) * hw;
            std::fill(p, p + hw, 1.0f);
        }
    return m;
}

// x_t = (1-sigma) x0 + sigma eps on masked positions, x0 copied elsewhere.
inline Tensor noise_target(const Tensor& x0, const Tensor& eps, float sigma, const Tensor& mask) {
    check_same_shape(x0, eps, "noise_target");
    check_same_shape(x0, mask, "noise_target");
    if (sigma < 0.0f || sigma > 1.0f) throw ConfigError("sigma must lie in [0,1]");
    Tensor out = Tensor::zeros(x0.shape);
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const float clean = (*x0.data)[i];
        const float noised = (1.0f - sigma) * clean + sigma * (*eps.data)[i];
        (*out.data)[i] = (*mask.data)[i] != 0.0f ? noised : clean;
    }
    return out;
}

// MSE between the model output and the velocity target eps - x0, over masked
// positions only. Gradients at unmasked positions are exactly zero because
// the mask multiplies the residual before squaring.
inline Tensor fm_loss(const Tensor& model_out, const Tensor& x0, const Tensor& eps, const Tensor& mask) {
    check_same_shape(model_out, x0, "fm_loss");
    check_same_shape(model_out, eps, "fm_loss");
    check_same_shape(model_out, mask, "fm_loss");
    float count = 0.0f;
    for (float v : *mask.data) count += (v != 0.0f) ? 1.0f : 0.0f;
    if (count == 0.0f) throw ShapeError("fm_loss: empty mask");
    Tensor target = sub(eps.detach(), x0.detach());
    Tensor masked = mul(sub(model_out, target), mask.detach());
    return scale(sum(mul(masked, masked)), 1.0f / count);
}

// Conditional velocity estimate: (reference latent, current x_t, sigma, condition).
using VelocityFn = std::function<Tensor(const Tensor&, const Tensor&, float, const SemanticCondition&)>;

// Euler integration of the learned flow from sigma=1 to 0 with CFG:
// v = v_unc + g (v_cond - v_unc). The first frame is re-anchored to the
// user-provided frame after every step; the reference latent is passed
// through unchanged (optionally zeroed for the unconditional branch).
inline Tensor euler_sample(const VelocityFn& velocity, const Tensor& ref_latent, const Tensor& first_frame,
                           const Shape& target_shape, const SemanticCondition& cond, const NoiseSchedule& sched,
                           float guidance, Rng& rng, bool drop_reference_for_uncond = false) {
    if (target_shape.size() != 4) throw ShapeError("euler_sample: target must be [C,F,H,W]");
    if (guidance < 1.0f) throw ConfigError("euler_sample: guidance must be >= 1");
    if (int(sched.sigmas.size()) != sched.num_steps + 1) throw ConfigError("euler_sample: bad schedule");
    const int C = target_shape[0], F = target_shape[1], H = target_shape[2], W = target_shape[3];
    if (first_frame.shape != Shape{C, H, W})
        throw ShapeError("euler_sample: first frame must be [C,H,W] matching the target");

    NoGradGuard ng;
    const std::size_t hw = std::size_t(H) * W;
    Tensor x = Tensor::zeros(target_shape);
    auto anchor_first_frame = [&](Tensor& t) {
        for (int c = 0; c < C; ++c)
            std::copy(first_frame.ptr() + std::size_t(c) * hw, first_frame.ptr() + std::size_t(c + 1) * hw,
                      t.mut_ptr() + std::size_t(c) * F * hw);
    };
    for (int c = 0; c < C; ++c)
        for (int f = 1; f < F; ++f) {
            float* p = x.mut_ptr() + (std::size_t(c) * F + f) * hw;
            for (std::size_t i = 0; i < hw; ++i) p[i] = rng.normal_f();
        }
    anchor_first_frame(x);

    const int d_cond = cond.reasoning.defined() ? cond.reasoning.shape[1] : cond.understanding.shape[1];
    const SemanticCondition uncond = SemanticCondition::dropped(d_cond);
    const Tensor ref_uncond = drop_reference_for_uncond ? Tensor::zeros(ref_latent.shape) : ref_latent;

    for (int i = 0; i < sched.num_steps; ++i) {
        const float sigma = sched.sigmas[std::size_t(i)];
        const float d_sigma = sched.sigmas[std::size_t(i) + 1] - sigma;
        Tensor v_cond = velocity(ref_latent, x, sigma, cond);
        check_same_shape(v_cond, x, "euler_sample velocity");
        Tensor v;
        if (guidance == 1.0f) {
            v = v_cond;
        } else {
            Tensor v_unc = velocity(ref_uncond, x, sigma, uncond);
            check_same_shape(v_unc, x, "euler_sample velocity");
            v = Tensor::zeros(target_shape);
            for (std::size_t e = 0; e < v.numel(); ++e)
                (*v.data)[e] = (*v_unc.data)[e] + guidance * ((*v_cond.data)[e] - (*v_unc.data)[e]);
        }
        for (int c = 0; c < C; ++c)
            for (int f = 1; f < F; ++f) {
                float* p = x.mut_ptr() + (std::size_t(c) * F + f) * hw;
                const float* vp = v.ptr() + (std::size_t(c) * F + f) * hw;
                for (std::size_t e = 0; e < hw; ++e) p[e] += d_sigma * vp[e];
            }
        anchor_first_frame(x);
        if (!x.all_finite())
            throw NumericError("euler_sample: NaN/Inf detected at step " + std::to_string(i));
    }
    return x;
}

}  // namespace effectlab
