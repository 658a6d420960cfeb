#pragma once

// Oracle-based evaluation: the effect-transfer score (ETS) correlates the
// generated video's effect component (video minus its own anchored first
// frame) against the renderer's overlay for the pair's ground-truth
// parameters; the class probe is nearest-template classification over all
// classes and theta offsets.

#include "effectlab/effectdata.hpp"

namespace effectlab {

// Pearson correlation in double precision; 0 when either side has zero
// variance (the zero-covariance convention).
inline double pearson(const float* a, const float* b, std::size_t n) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / (std::sqrt(va) * std::sqrt(vb));
}

// Mean per-frame correlation between the generated effect component and the
// oracle overlay; frames whose oracle has zero variance are skipped. If all
// frames are skipped the score is 0 and *warned is set.
inline double effect_transfer_score(const Tensor& generated, const EffectParams& params, bool* warned = nullptr) {
    if (generated.rank() != 4) throw ShapeError("effect_transfer_score: video must be [C,F,H,W]");
    const int C = generated.shape[0], F = generated.shape[1], H = generated.shape[2], W = generated.shape[3];
    if (F < 2) throw ShapeError("effect_transfer_score: need at least 2 frames");
    const std::size_t hw = std::size_t(H) * W;
    std::vector<float> gen_eff(std::size_t(C) * hw), oracle(std::size_t(C) * hw);
    double total = 0.0;
    int counted = 0;
    for (int f = 1; f < F; ++f) {
        const double phase = double(f) / double(F - 1);
        Tensor ov = render_effect(params, phase, C, H, W);
        bool oracle_nonzero = false;
        for (int c = 0; c < C; ++c) {
            const float* frame = generated.ptr() + (std::size_t(c) * F + f) * hw;
            const float* first = generated.ptr() + std::size_t(c) * F * hw;
            for (std::size_t i = 0; i < hw; ++i) gen_eff[std::size_t(c) * hw + i] = frame[i] - first[i];
            const float* op = ov.ptr() + std::size_t(c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                oracle[std::size_t(c) * hw + i] = op[i];
                oracle_nonzero = oracle_nonzero || op[i] != 0.0f;
            }
        }
        if (!oracle_nonzero) continue;
        total += pearson(gen_eff.data(), oracle.data(), gen_eff.size());
        ++counted;
    }
    if (counted == 0) {
        if (warned) *warned = true;
        return 0.0;
    }
    return total / double(counted);
}

// argmax over classes of the best ETS across theta offsets; ties resolve to
// the lowest class id (strict improvement required).
inline int class_probe(const Tensor& generated, const Taxonomy& tax) {
    const auto classes = expand_taxonomy(tax);
    int best_class = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& cls : classes) {
        double cls_score = -std::numeric_limits<double>::infinity();
        for (int theta = 0; theta < kThetaLevels; ++theta) {
            const double s = effect_transfer_score(generated, params_for_class(cls, tax, theta));
            cls_score = std::max(cls_score, s);
        }
        if (cls_score > best_score) {
            best_score = cls_score;
            best_class = cls.class_id;
        }
    }
    return best_class;
}

}  // namespace effectlab
