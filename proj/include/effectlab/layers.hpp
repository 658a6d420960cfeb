#pragma once

#include <string>

#include "effectlab/tensor.hpp"

namespace effectlab {

struct LinearLayer {
    Tensor w;  // [in x out]
    Tensor b;  // [out]

    static LinearLayer init(int in, int out, Rng& rng, bool zero_init = false) {
        LinearLayer l;
        l.w = zero_init ? Tensor::zeros({in, out}, true)
                        : Tensor::randn({in, out}, rng, 1.0f / std::sqrt(float(in)), true);
        l.b = Tensor::zeros({out}, true);
        return l;
    }

    Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }

    void register_params(const std::string& prefix, ParamMap& out) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

struct RmsNormLayer {
    Tensor weight;
    float eps = 1e-6f;

    static RmsNormLayer init(int d, float eps) {
        RmsNormLayer n;
        n.weight = Tensor::full({d}, 1.0f, true);
        n.eps = eps;
        return n;
    }

    Tensor forward(const Tensor& x) const { return rmsnorm(x, weight, eps); }

    void register_params(const std::string& prefix, ParamMap& out) {
        out.push_back({prefix + ".weight", weight});
    }
};

struct FeedForward {
    LinearLayer fc1, fc2;

    static FeedForward init(int width, int mult, Rng& rng) {
        FeedForward f;
        f.fc1 = LinearLayer::init(width, width * mult, rng);
        f.fc2 = LinearLayer::init(width * mult, width, rng);
        return f;
    }

    Tensor forward(const Tensor& x) const { return fc2.forward(silu(fc1.forward(x))); }

    void register_params(const std::string& prefix, ParamMap& out) {
        fc1.register_params(prefix + ".fc1", out);
        fc2.register_params(prefix + ".fc2", out);
    }
};

}  // namespace effectlab
