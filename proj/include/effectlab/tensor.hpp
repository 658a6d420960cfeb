#pragma once

// Dense float32 tensor with reverse-mode autodiff. Flat row-major storage,
// copies on slice, no strided views. The graph is the DAG of Nodes hanging
// off op results; backward() topo-sorts it and runs each node once.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "effectlab/common.hpp"

namespace effectlab {

using Shape = std::vector<int>;

inline std::size_t numel_of(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive extent in shape");
        n *= std::size_t(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct Tensor;

struct Node {
    std::vector<Tensor> parents;
    std::function<void(Tensor&)> backward_fn;
    bool backward_done = false;
};

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<float>> data;
    std::shared_ptr<std::vector<float>> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;

    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        Tensor t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<float>>(numel_of(shape), 0.0f);
        t.requires_grad = requires_grad;
        if (requires_grad) t.ensure_grad();
        return t;
    }

    static Tensor full(const Shape& shape, float value, bool requires_grad = false) {
        Tensor t = zeros(shape, requires_grad);
        std::fill(t.data->begin(), t.data->end(), value);
        return t;
    }

    static Tensor from(const Shape& shape, std::vector<float> values, bool requires_grad = false) {
        if (values.size() != numel_of(shape))
            throw ShapeError("from: value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        Tensor t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<float>>(std::move(values));
        t.requires_grad = requires_grad;
        if (requires_grad) t.ensure_grad();
        return t;
    }

    static Tensor scalar(float v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    static Tensor randn(const Shape& shape, Rng& rng, float stddev = 1.0f, bool requires_grad = false) {
        Tensor t = zeros(shape, requires_grad);
        for (auto& x : *t.data) x = stddev * rng.normal_f();
        return t;
    }

    std::size_t numel() const { return data ? data->size() : 0; }
    int rank() const { return int(shape.size()); }
    int dim(int axis) const { return shape[std::size_t(axis)]; }
    bool defined() const { return bool(data); }

    float item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape));
        return (*data)[0];
    }

    const float* ptr() const { return data->data(); }
    float* mut_ptr() { return data->data(); }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<float>>(numel(), 0.0f);
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), 0.0f);
    }

    Tensor detach() const {
        Tensor t;
        t.shape = shape;
        t.data = data;
        t.requires_grad = false;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<float>>(*data);
        return t;
    }

    bool all_finite() const {
        for (float v : *data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

namespace detail {

inline bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

inline Tensor make_result(const Shape& shape, std::vector<Tensor> parents,
                          std::function<void(Tensor&)> backward_fn) {
    Tensor out = Tensor::zeros(shape);
    bool rg = false;
    for (const auto& p : parents) rg = rg || want_grad(p);
    if (rg) {
        out.requires_grad = true;
        // Allocate the grad buffer now: copies of this tensor held by later
        // consumers must all share one accumulation buffer.
        out.ensure_grad();
        out.node = std::make_shared<Node>();
        out.node->parents = std::move(parents);
        out.node->backward_fn = std::move(backward_fn);
    }
    return out;
}

// C[m x n] (+)= A[m x k] * B[k x n]; i-k-j loop keeps per-element accumulation
// order fixed for any row partition, so results are reproducible bit for bit.
inline void matmul_kernel(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float* ci = c + std::size_t(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) ci[j] = 0.0f;
        const float* ai = a + std::size_t(i) * k;
        for (int p = 0; p < k; ++p) {
            const float aip = ai[p];
            const float* bp = b + std::size_t(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

inline std::vector<float> transpose_raw(const float* a, int rows, int cols) {
    std::vector<float> out(std::size_t(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out[std::size_t(j) * rows + i] = a[std::size_t(i) * cols + j];
    return out;
}

// Decompose a shape around `axis` into (outer, len, inner) for stride walks.
struct AxisSplit {
    std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& shape, int axis) {
    if (axis < 0 || axis >= int(shape.size())) throw ShapeError("axis out of range");
    AxisSplit s{1, std::size_t(shape[axis]), 1};
    for (int i = 0; i < axis; ++i) s.outer *= std::size_t(shape[i]);
    for (int i = axis + 1; i < int(shape.size()); ++i) s.inner *= std::size_t(shape[i]);
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward

inline void backward(Tensor& root) {
    if (root.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root.requires_grad || !root.node)
        throw Error("backward: root does not require grad or has no graph");

    // Iterative post-order DFS over the node DAG; post-order puts parents
    // before children, so the reverse is the backward visit order. All copies
    // of a tensor share one Node and one grad buffer, so keeping the first
    // Tensor* seen per node is enough.
    struct Frame {
        Tensor* t;
        std::size_t next;
    };
    std::vector<std::pair<Node*, Tensor*>> order;
    std::unordered_set<Node*> seen;
    std::vector<Frame> stack;
    stack.push_back({&root, 0});
    seen.insert(root.node.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        Node* n = f.t->node.get();
        if (f.next < n->parents.size()) {
            Tensor& p = n->parents[f.next++];
            if (p.node && !seen.count(p.node.get())) {
                seen.insert(p.node.get());
                stack.push_back({&p, 0});
            }
        } else {
            order.push_back({n, f.t});
            stack.pop_back();
        }
    }

    root.ensure_grad();
    (*root.grad)[0] = 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = it->first;
        Tensor* t = it->second;
        if (n->backward_done) throw Error("backward: called twice without rebuilding the graph");
        t->ensure_grad();
        for (auto& p : n->parents)
            if (p.requires_grad) p.ensure_grad();
        if (n->backward_fn) n->backward_fn(*t);
        n->backward_done = true;
    }
}

// ---------------------------------------------------------------------------
// ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: expects 2D tensors");
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul: inner dims disagree " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = detail::make_result({m, n}, {a, b}, [m, k, n](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        if (pa.requires_grad) {
            // dA += dC * B^T
            auto bt = detail::transpose_raw(pb.ptr(), k, n);
            detail::matmul_kernel(o.grad->data(), bt.data(), pa.grad->data(), m, n, k, true);
        }
        if (pb.requires_grad) {
            // dB += A^T * dC
            auto at = detail::transpose_raw(pa.ptr(), m, k);
            detail::matmul_kernel(at.data(), o.grad->data(), pb.grad->data(), k, m, n, true);
        }
    });
    detail::matmul_kernel(a.ptr(), b.ptr(), out.mut_ptr(), m, k, n, false);
    return out;
}

inline Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d: expects 2D tensor");
    const int r = a.shape[0], c = a.shape[1];
    Tensor out = detail::make_result({c, r}, {a}, [r, c](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        const float* g = o.grad->data();
        float* pg = pa.grad->data();
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < r; ++j) pg[std::size_t(j) * c + i] += g[std::size_t(i) * r + j];
    });
    auto t = detail::transpose_raw(a.ptr(), r, c);
    std::copy(t.begin(), t.end(), out.mut_ptr());
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = detail::make_result(a.shape, {a, b}, [](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        const std::size_t n = o.numel();
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pa.grad)[i] += (*o.grad)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pb.grad)[i] += (*o.grad)[i];
    });
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = detail::make_result(a.shape, {a, b}, [](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        const std::size_t n = o.numel();
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pa.grad)[i] += (*o.grad)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pb.grad)[i] -= (*o.grad)[i];
    });
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = detail::make_result(a.shape, {a, b}, [](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        const std::size_t n = o.numel();
        if (pa.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < n; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
    });
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    return out;
}

inline Tensor scale(const Tensor& a, float s) {
    Tensor out = detail::make_result(a.shape, {a}, [s](Tensor& o) {
        const Tensor& pa = o.node->parents[0];
        if (!pa.requires_grad) return;
        const std::size_t n = o.numel();
        for (std::size_t i = 0; i < n; ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
    });
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
    return out;
}

// x[... x d] + b[d], broadcast over leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (b.rank() != 1 || x.rank() < 1 || x.shape.back() != b.shape[0])
        throw ShapeError("add_bias: bias length must match last extent");
    const std::size_t d = std::size_t(b.shape[0]);
    const std::size_t rows = x.numel() / d;
    Tensor out = detail::make_result(x.shape, {x, b}, [d, rows](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        const Tensor& pb = o.node->parents[1];
        if (px.requires_grad) {
            const std::size_t n = o.numel();
            for (std::size_t i = 0; i < n; ++i) (*px.grad)[i] += (*o.grad)[i];
        }
        if (pb.requires_grad) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < d; ++j) (*pb.grad)[j] += (*o.grad)[r * d + j];
        }
    });
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) (*out.data)[r * d + j] = (*x.data)[r * d + j] + (*b.data)[j];
    return out;
}

inline Tensor silu(const Tensor& x) {
    Tensor out = detail::make_result(x.shape, {x}, [](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n = o.numel();
        for (std::size_t i = 0; i < n; ++i) {
            const float v = (*px.data)[i];
            const float sig = 1.0f / (1.0f + std::exp(-v));
            (*px.grad)[i] += (*o.grad)[i] * (sig + v * sig * (1.0f - sig));
        }
    });
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const float v = (*x.data)[i];
        (*out.data)[i] = v / (1.0f + std::exp(-v));
    }
    return out;
}

inline Tensor softmax(const Tensor& x, int axis) {
    const auto sp = detail::split_axis(x.shape, axis);
    Tensor out = detail::make_result(x.shape, {x}, [sp](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        // dx = y * (dy - sum(dy * y)) along the axis
        for (std::size_t ou = 0; ou < sp.outer; ++ou)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t base = ou * sp.len * sp.inner + in;
                float dot = 0.0f;
                for (std::size_t l = 0; l < sp.len; ++l) {
                    const std::size_t idx = base + l * sp.inner;
                    dot += (*o.grad)[idx] * (*o.data)[idx];
                }
                for (std::size_t l = 0; l < sp.len; ++l) {
                    const std::size_t idx = base + l * sp.inner;
                    (*px.grad)[idx] += (*o.data)[idx] * ((*o.grad)[idx] - dot);
                }
            }
    });
    for (std::size_t ou = 0; ou < sp.outer; ++ou)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = ou * sp.len * sp.inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::size_t l = 0; l < sp.len; ++l) mx = std::max(mx, (*x.data)[base + l * sp.inner]);
            float sum = 0.0f;
            for (std::size_t l = 0; l < sp.len; ++l) {
                const float e = std::exp((*x.data)[base + l * sp.inner] - mx);
                (*out.data)[base + l * sp.inner] = e;
                sum += e;
            }
            const float inv = 1.0f / sum;
            for (std::size_t l = 0; l < sp.len; ++l) (*out.data)[base + l * sp.inner] *= inv;
        }
    return out;
}

// x / sqrt(mean(x^2) + eps) * weight, normalized over the last axis.
inline Tensor rmsnorm(const Tensor& x, const Tensor& weight, float eps) {
    if (weight.rank() != 1 || x.shape.back() != weight.shape[0])
        throw ShapeError("rmsnorm: weight length must match last extent");
    const std::size_t d = std::size_t(weight.shape[0]);
    const std::size_t rows = x.numel() / d;
    Tensor out = detail::make_result(x.shape, {x, weight}, [d, rows, eps](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        const Tensor& pw = o.node->parents[1];
        for (std::size_t r = 0; r < rows; ++r) {
            const float* xr = px.data->data() + r * d;
            const float* gr = o.grad->data() + r * d;
            float ms = 0.0f;
            for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
            ms = ms / float(d) + eps;
            const float inv = 1.0f / std::sqrt(ms);
            if (pw.requires_grad) {
                for (std::size_t j = 0; j < d; ++j) (*pw.grad)[j] += gr[j] * xr[j] * inv;
            }
            if (px.requires_grad) {
                float dot = 0.0f;  // sum_j g_j * w_j * x_j
                const float* w = pw.data->data();
                for (std::size_t j = 0; j < d; ++j) dot += gr[j] * w[j] * xr[j];
                const float c = dot * inv * inv * inv / float(d);
                float* xg = px.grad->data() + r * d;
                for (std::size_t j = 0; j < d; ++j) xg[j] += gr[j] * w[j] * inv - c * xr[j];
            }
        }
    });
    for (std::size_t r = 0; r < rows; ++r) {
        const float* xr = x.ptr() + r * d;
        float* orow = out.mut_ptr() + r * d;
        float ms = 0.0f;
        for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
        const float inv = 1.0f / std::sqrt(ms / float(d) + eps);
        for (std::size_t j = 0; j < d; ++j) orow[j] = xr[j] * inv * (*weight.data)[j];
    }
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape out_shape = parts[0].shape;
    if (axis < 0 || axis >= int(out_shape.size())) throw ShapeError("concat: axis out of range");
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != int(out_shape.size())) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < p.rank(); ++i)
            if (i != axis && p.shape[i] != out_shape[i]) throw ShapeError("concat: extent mismatch off-axis");
        total += p.shape[axis];
    }
    out_shape[axis] = total;
    const auto sp = detail::split_axis(out_shape, axis);
    std::vector<std::size_t> lens;
    for (const auto& p : parts) lens.push_back(std::size_t(p.shape[axis]));

    Tensor out = detail::make_result(out_shape, parts, [sp, lens](Tensor& o) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < o.node->parents.size(); ++pi) {
            Tensor& p = o.node->parents[pi];
            const std::size_t plen = lens[pi];
            if (p.requires_grad) {
                for (std::size_t ou = 0; ou < sp.outer; ++ou)
                    for (std::size_t l = 0; l < plen; ++l) {
                        const float* src = o.grad->data() + (ou * sp.len + off + l) * sp.inner;
                        float* dst = p.grad->data() + (ou * plen + l) * sp.inner;
                        for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += src[in];
                    }
            }
            off += plen;
        }
    });
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const std::size_t plen = lens[pi];
        for (std::size_t ou = 0; ou < sp.outer; ++ou)
            for (std::size_t l = 0; l < plen; ++l) {
                const float* src = parts[pi].ptr() + (ou * plen + l) * sp.inner;
                float* dst = out.mut_ptr() + (ou * sp.len + off + l) * sp.inner;
                std::copy(src, src + sp.inner, dst);
            }
        off += plen;
    }
    return out;
}

inline Tensor slice(const Tensor& x, int axis, int lo, int hi) {
    if (axis < 0 || axis >= x.rank()) throw ShapeError("slice: axis out of range");
    if (lo < 0 || hi > x.shape[axis] || lo >= hi)
        throw ShapeError("slice: bad range [" + std::to_string(lo) + "," + std::to_string(hi) + ") on axis extent " +
                         std::to_string(x.shape[axis]));
    Shape out_shape = x.shape;
    out_shape[axis] = hi - lo;
    const auto sp = detail::split_axis(x.shape, axis);
    const std::size_t len = std::size_t(hi - lo);
    Tensor out = detail::make_result(out_shape, {x}, [sp, lo, len](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        for (std::size_t ou = 0; ou < sp.outer; ++ou)
            for (std::size_t l = 0; l < len; ++l) {
                const float* src = o.grad->data() + (ou * len + l) * sp.inner;
                float* dst = px.grad->data() + (ou * sp.len + std::size_t(lo) + l) * sp.inner;
                for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += src[in];
            }
    });
    for (std::size_t ou = 0; ou < sp.outer; ++ou)
        for (std::size_t l = 0; l < len; ++l) {
            const float* src = x.ptr() + (ou * sp.len + std::size_t(lo) + l) * sp.inner;
            float* dst = out.mut_ptr() + (ou * len + l) * sp.inner;
            std::copy(src, src + sp.inner, dst);
        }
    return out;
}

inline Tensor reshape(const Tensor& x, const Shape& new_shape) {
    if (numel_of(new_shape) != x.numel()) throw ShapeError("reshape: numel mismatch");
    Tensor out = detail::make_result(new_shape, {x}, [](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const std::size_t n = o.numel();
        for (std::size_t i = 0; i < n; ++i) (*px.grad)[i] += (*o.grad)[i];
    });
    std::copy(x.data->begin(), x.data->end(), out.mut_ptr());
    return out;
}

inline Tensor sum(const Tensor& x) {
    Tensor out = detail::make_result({1}, {x}, [](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const float g = (*o.grad)[0];
        for (auto& v : *px.grad) v += g;
    });
    float s = 0.0f;
    for (float v : *x.data) s += v;
    (*out.data)[0] = s;
    return out;
}

inline Tensor mean(const Tensor& x) {
    const float inv = 1.0f / float(x.numel());
    Tensor out = detail::make_result({1}, {x}, [inv](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        const float g = (*o.grad)[0] * inv;
        for (auto& v : *px.grad) v += g;
    });
    float s = 0.0f;
    for (float v : *x.data) s += v;
    (*out.data)[0] = s * inv;
    return out;
}

// Row gather: out[i, :] = table[ids[i], :]. Backward scatters into the table.
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be 2D");
    const int v = table.shape[0], d = table.shape[1];
    for (int id : ids)
        if (id < 0 || id >= v) throw ShapeError("embedding: id out of range");
    Tensor out = detail::make_result({int(ids.size()), d}, {table}, [ids, d](Tensor& o) {
        const Tensor& pt = o.node->parents[0];
        if (!pt.requires_grad) return;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const float* src = o.grad->data() + i * std::size_t(d);
            float* dst = pt.grad->data() + std::size_t(ids[i]) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const float* src = table.ptr() + std::size_t(ids[i]) * d;
        std::copy(src, src + d, out.mut_ptr() + i * std::size_t(d));
    }
    return out;
}

// Strided mean pooling over rows: group g covers [g*n/out, (g+1)*n/out).
inline Tensor pool_rows(const Tensor& x, int n_out) {
    if (x.rank() != 2) throw ShapeError("pool_rows: expects 2D tensor");
    const int n = x.shape[0], d = x.shape[1];
    if (n_out < 1 || n < n_out) throw ShapeError("pool_rows: need at least as many rows as groups");
    std::vector<int> bounds(std::size_t(n_out) + 1);
    for (int g = 0; g <= n_out; ++g) bounds[g] = int(std::size_t(g) * n / std::size_t(n_out));
    Tensor out = detail::make_result({n_out, d}, {x}, [bounds, n_out, d](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        for (int g = 0; g < n_out; ++g) {
            const float inv = 1.0f / float(bounds[g + 1] - bounds[g]);
            const float* srow = o.grad->data() + std::size_t(g) * d;
            for (int r = bounds[g]; r < bounds[g + 1]; ++r) {
                float* dst = px.grad->data() + std::size_t(r) * d;
                for (int j = 0; j < d; ++j) dst[j] += srow[j] * inv;
            }
        }
    });
    for (int g = 0; g < n_out; ++g) {
        float* orow = out.mut_ptr() + std::size_t(g) * d;
        const float inv = 1.0f / float(bounds[g + 1] - bounds[g]);
        for (int r = bounds[g]; r < bounds[g + 1]; ++r) {
            const float* xr = x.ptr() + std::size_t(r) * d;
            for (int j = 0; j < d; ++j) orow[j] += xr[j];
        }
        for (int j = 0; j < d; ++j) orow[j] *= inv;
    }
    return out;
}

// out.data[i] = x.data[src_index[i]]. Used for patchify-style reorders.
inline Tensor permute_elements(const Tensor& x, const std::vector<std::size_t>& src_index, const Shape& out_shape) {
    if (src_index.size() != numel_of(out_shape)) throw ShapeError("permute_elements: index size mismatch");
    auto idx = std::make_shared<std::vector<std::size_t>>(src_index);
    Tensor out = detail::make_result(out_shape, {x}, [idx](Tensor& o) {
        const Tensor& px = o.node->parents[0];
        if (!px.requires_grad) return;
        for (std::size_t i = 0; i < idx->size(); ++i) (*px.grad)[(*idx)[i]] += (*o.grad)[i];
    });
    for (std::size_t i = 0; i < idx->size(); ++i) (*out.data)[i] = (*x.data)[(*idx)[i]];
    return out;
}

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
    std::vector<float> m, v;
};

// Bias-corrected Adam on one parameter; step is 1-based.
inline void adam_step(Tensor& param, const std::vector<float>& grad, AdamState& state, long step, float lr,
                      float beta1, float beta2, float eps) {
    const std::size_t n = param.numel();
    if (grad.size() != n) throw ShapeError("adam_step: param/grad size mismatch");
    if (state.m.size() != n) {
        state.m.assign(n, 0.0f);
        state.v.assign(n, 0.0f);
    }
    const float bc1 = 1.0f - std::pow(beta1, float(step));
    const float bc2 = 1.0f - std::pow(beta2, float(step));
    float* p = param.mut_ptr();
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0f - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0f - beta2) * grad[i] * grad[i];
        const float mh = state.m[i] / bc1;
        const float vh = state.v[i] / bc2;
        p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

struct NamedParam {
    std::string name;
    Tensor tensor;
};

using ParamMap = std::vector<NamedParam>;

struct Adam {
    float lr = 2e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long step_count = 0;
    std::vector<AdamState> states;

    void step(ParamMap& params) {
        if (states.size() != params.size()) states.resize(params.size());
        ++step_count;
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& t = params[i].tensor;
            if (!t.grad) t.ensure_grad();
            adam_step(t, *t.grad, states[i], step_count, lr, beta1, beta2, eps);
        }
    }

    static void zero_grad(ParamMap& params) {
        for (auto& p : params) p.tensor.zero_grad();
    }
};

// ---------------------------------------------------------------------------
// EFTX tensor file: "EFTX", u8 version=1, u8 rank, u64[rank] extents (LE),
// f32 LE payload.

namespace detail {
static_assert(sizeof(float) == 4, "EFTX requires 32-bit float");

inline void put_u64_le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}
}  // namespace detail

inline void write_eftx(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write("EFTX", 4);
    const unsigned char version = 1;
    const unsigned char rank = (unsigned char)t.rank();
    os.write(reinterpret_cast<const char*>(&version), 1);
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.shape) detail::put_u64_le(os, uint64_t(d));
    os.write(reinterpret_cast<const char*>(t.ptr()), std::streamsize(t.numel() * 4));
    if (!os) throw IoError("write failed: " + path);
}

inline Tensor read_eftx(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EFTX", 4) != 0) throw IoError("bad EFTX magic in " + path);
    unsigned char version = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is || version != 1) throw IoError("unsupported EFTX version in " + path);
    Shape shape(rank);
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) {
        uint64_t e = detail::get_u64_le(is);
        if (!is || e == 0 || e > (1u << 30)) throw IoError("bad EFTX extent in " + path);
        shape[i] = int(e);
        n *= std::size_t(e);
    }
    Tensor t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(t.mut_ptr()), std::streamsize(n * 4));
    if (!is) throw IoError("truncated EFTX payload in " + path);
    return t;
}

}  // namespace effectlab
