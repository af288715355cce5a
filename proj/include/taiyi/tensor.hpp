#pragma once

// Reverse-mode autodiff on dense row-major f64 tensors. Graphs are built
// implicitly: each op returns a fresh tensor holding its inputs and a pull
// closure; backward() walks the graph in reverse topological order.
// Tensors are immutable after construction except for grad buffers and the
// optimizer-owned value updates between graphs.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "taiyi/error.hpp"
#include "taiyi/rng.hpp"

namespace taiyi {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> pull;  // pushes this->grad into parents

    size_t numel() const { return data.size(); }
    bool is_leaf() const { return parents.empty(); }

    std::vector<double>& grad_buf() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

inline void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error(std::string(op) + ": produced non-finite value");
        }
    }
}

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw Error("tensor: shape " + shape_str(shape) + " does not match data length " +
                        std::to_string(data.size()));
        }
        detail::check_finite(data, "tensor");
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> d(shape_numel(shape), value);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 1.0, requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    static Tensor randn(Rng& rng, Shape shape, double sigma = 1.0, bool requires_grad = false) {
        std::vector<double> d(shape_numel(shape));
        for (double& x : d) x = sigma * rng.normal();
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    size_t numel() const { return node_->data.size(); }
    size_t dim(size_t i) const { return node_->shape.at(i); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& data() const { return node_->data; }
    double at(size_t i) const { return node_->data[i]; }

    double item() const {
        if (numel() != 1) throw Error("item: tensor has " + std::to_string(numel()) + " elements");
        return node_->data[0];
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const {
        if (node_->grad.empty()) throw Error("grad: no gradient populated");
        return node_->grad;
    }
    std::vector<double>& grad_mut() const {
        if (node_->grad.empty()) throw Error("grad: no gradient populated");
        return node_->grad;
    }

    void zero_grad() const { node_->grad.clear(); }

    // In-place value update for optimizers; only valid between graphs.
    std::vector<double>& values_mut() const { return node_->data; }

    // Identity-preserving handle comparisons (used by parameter registries).
    bool same_as(const Tensor& other) const { return node_ == other.node_; }

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> inputs, std::function<void(Node&)> pull) {
    check_finite(data, op);
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
        n->pull = std::move(pull);
    }
    return Tensor(std::move(n));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
    }
}

inline void require_2d(const Tensor& a, const char* op) {
    if (a.shape().size() != 2) {
        throw Error(std::string(op) + ": expected 2-d tensor, got " + shape_str(a.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    detail::Node* an = a.node();
    detail::Node* bn = b.node();
    return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [an, bn](detail::Node& n) {
        if (an->requires_grad) {
            auto& g = an->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    detail::Node* an = a.node();
    detail::Node* bn = b.node();
    return detail::make_result(a.shape(), std::move(out), "sub", {a, b}, [an, bn](detail::Node& n) {
        if (an->requires_grad) {
            auto& g = an->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    detail::Node* an = a.node();
    detail::Node* bn = b.node();
    return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [an, bn](detail::Node& n) {
        if (an->requires_grad) {
            auto& g = an->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * an->data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
    detail::Node* an = a.node();
    return detail::make_result(a.shape(), std::move(out), "scale", {a}, [an, c](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * c;
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
    detail::Node* an = a.node();
    return detail::make_result(a.shape(), std::move(out), "add_scalar", {a}, [an](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0 ? a.at(i) : 0.0;
    detail::Node* an = a.node();
    return detail::make_result(a.shape(), std::move(out), "relu", {a}, [an](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += an->data[i] > 0.0 ? n.grad[i] : 0.0;
    });
}

// Exact GELU: x * Phi(x) with the Gaussian CDF.
inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = a.at(i);
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    detail::Node* an = a.node();
    return detail::make_result(a.shape(), std::move(out), "gelu", {a}, [an](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) {
            const double x = an->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            g[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

// ------------------------------------------------------------- broadcast adds

// x: [r, c], v: [c]; v added to every row.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    detail::require_2d(x, "add_rowvec");
    const size_t r = x.dim(0), c = x.dim(1);
    if (v.numel() != c) throw Error("add_rowvec: vector length mismatch");
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = x.at(i * c + j) + v.at(j);
    detail::Node* xn = x.node();
    detail::Node* vn = v.node();
    return detail::make_result(x.shape(), std::move(out), "add_rowvec", {x, v},
                               [xn, vn, r, c](detail::Node& n) {
        if (xn->requires_grad) {
            auto& g = xn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (vn->requires_grad) {
            auto& g = vn->grad_buf();
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
        }
    });
}

// x: [r, c], v: [r]; v added to every column.
inline Tensor add_colvec(const Tensor& x, const Tensor& v) {
    detail::require_2d(x, "add_colvec");
    const size_t r = x.dim(0), c = x.dim(1);
    if (v.numel() != r) throw Error("add_colvec: vector length mismatch");
    std::vector<double> out(x.numel());
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = x.at(i * c + j) + v.at(i);
    detail::Node* xn = x.node();
    detail::Node* vn = v.node();
    return detail::make_result(x.shape(), std::move(out), "add_colvec", {x, v},
                               [xn, vn, r, c](detail::Node& n) {
        if (xn->requires_grad) {
            auto& g = xn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (vn->requires_grad) {
            auto& g = vn->grad_buf();
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) g[i] += n.grad[i * c + j];
        }
    });
}

// ------------------------------------------------------------------ structure

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw Error("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                    shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    for (size_t i = 0; i < m; ++i) {
        for (size_t l = 0; l < k; ++l) {
            const double av = a.at(i * k + l);
            if (av == 0.0) continue;
            const double* brow = b.data().data() + l * n;
            double* orow = out.data() + i * n;
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    detail::Node* an = a.node();
    detail::Node* bn = b.node();
    return detail::make_result({m, n}, std::move(out), "matmul", {a, b},
                               [an, bn, m, k, n](detail::Node& nd) {
        if (an->requires_grad) {
            // dA = dC * B^T
            auto& g = an->grad_buf();
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    const double* grow = nd.grad.data() + i * n;
                    const double* brow = bn->data.data() + l * n;
                    for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    g[i * k + l] += acc;
                }
        }
        if (bn->requires_grad) {
            // dB = A^T * dC
            auto& g = bn->grad_buf();
            for (size_t i = 0; i < m; ++i) {
                const double* arow = an->data.data() + i * k;
                const double* grow = nd.grad.data() + i * n;
                for (size_t l = 0; l < k; ++l) {
                    const double av = arow[l];
                    if (av == 0.0) continue;
                    double* gr = g.data() + l * n;
                    for (size_t j = 0; j < n; ++j) gr[j] += av * grow[j];
                }
            }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_2d(a, "transpose");
    const size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i * c + j);
    detail::Node* an = a.node();
    return detail::make_result({c, r}, std::move(out), "transpose", {a},
                               [an, r, c](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw Error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out = a.data();
    detail::Node* an = a.node();
    return detail::make_result(std::move(shape), std::move(out), "reshape", {a},
                               [an](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

inline Tensor slice_cols(const Tensor& a, size_t start, size_t len) {
    detail::require_2d(a, "slice_cols");
    const size_t r = a.dim(0), c = a.dim(1);
    if (start + len > c) throw Error("slice_cols: range out of bounds");
    std::vector<double> out(r * len);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < len; ++j) out[i * len + j] = a.at(i * c + start + j);
    detail::Node* an = a.node();
    return detail::make_result({r, len}, std::move(out), "slice_cols", {a},
                               [an, r, c, start, len](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < len; ++j) g[i * c + start + j] += n.grad[i * len + j];
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    const size_t r = parts[0].dim(0);
    size_t c = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.dim(0) != r) throw Error("concat_cols: row count mismatch");
        c += p.dim(1);
    }
    std::vector<double> out(r * c);
    size_t off = 0;
    for (const auto& p : parts) {
        const size_t pc = p.dim(1);
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < pc; ++j) out[i * c + off + j] = p.at(i * pc + j);
        off += pc;
    }
    std::vector<detail::Node*> nodes;
    std::vector<size_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.dim(1));
    }
    return detail::make_result({r, c}, std::move(out), "concat_cols", parts,
                               [nodes, widths, r, c](detail::Node& n) {
        size_t off2 = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            const size_t pc = widths[k];
            if (nodes[k]->requires_grad) {
                auto& g = nodes[k]->grad_buf();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < pc; ++j) g[i * pc + j] += n.grad[i * c + off2 + j];
            }
            off2 += pc;
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_rows: no inputs");
    const size_t c = parts[0].dim(1);
    size_t r = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_rows");
        if (p.dim(1) != c) throw Error("concat_rows: column count mismatch");
        r += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(r * c);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<detail::Node*> nodes;
    std::vector<size_t> sizes;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        sizes.push_back(p.numel());
    }
    return detail::make_result({r, c}, std::move(out), "concat_rows", parts,
                               [nodes, sizes](detail::Node& n) {
        size_t off = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k]->requires_grad) {
                auto& g = nodes[k]->grad_buf();
                for (size_t i = 0; i < sizes[k]; ++i) g[i] += n.grad[off + i];
            }
            off += sizes[k];
        }
    });
}

// Row gather; doubles as embedding lookup and row slicing. Gradient
// scatter-adds into exactly the gathered rows.
inline Tensor gather_rows(const Tensor& w, const std::vector<size_t>& ids) {
    detail::require_2d(w, "gather_rows");
    const size_t v = w.dim(0), d = w.dim(1);
    for (size_t id : ids) {
        if (id >= v) {
            throw Error("gather_rows: index " + std::to_string(id) + " out of range for " +
                        std::to_string(v) + " rows");
        }
    }
    std::vector<double> out(ids.size() * d);
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(w.data().data() + ids[i] * d, d, out.data() + i * d);
    detail::Node* wn = w.node();
    auto ids_copy = ids;
    return detail::make_result({ids.size(), d}, std::move(out), "gather_rows", {w},
                               [wn, ids_copy, d](detail::Node& n) {
        auto& g = wn->grad_buf();
        for (size_t i = 0; i < ids_copy.size(); ++i)
            for (size_t j = 0; j < d; ++j) g[ids_copy[i] * d + j] += n.grad[i * d + j];
    });
}

// Flat gather with zero padding: index -1 reads 0 and routes no gradient.
// The building block for im2col convolutions and nearest upsampling.
inline Tensor gather_pad(const Tensor& x, const std::vector<long>& idx, Shape out_shape) {
    if (shape_numel(out_shape) != idx.size()) {
        throw Error("gather_pad: output shape does not match index count");
    }
    const long n = static_cast<long>(x.numel());
    std::vector<double> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        const long k = idx[i];
        if (k >= n) throw Error("gather_pad: index out of range");
        out[i] = k < 0 ? 0.0 : x.at(static_cast<size_t>(k));
    }
    detail::Node* xn = x.node();
    auto idx_copy = idx;
    return detail::make_result(std::move(out_shape), std::move(out), "gather_pad", {x},
                               [xn, idx_copy](detail::Node& nd) {
        auto& g = xn->grad_buf();
        for (size_t i = 0; i < idx_copy.size(); ++i)
            if (idx_copy[i] >= 0) g[static_cast<size_t>(idx_copy[i])] += nd.grad[i];
    });
}

// ------------------------------------------------------------------ reductions

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.at(i);
    detail::Node* an = a.node();
    return detail::make_result({1}, {s}, "sum_all", {a}, [an](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.at(i);
    const double inv = 1.0 / static_cast<double>(a.numel());
    detail::Node* an = a.node();
    return detail::make_result({1}, {s * inv}, "mean_all", {a}, [an, inv](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * inv;
    });
}

// --------------------------------------------------------------- normalization

inline Tensor softmax_rows(const Tensor& a) {
    detail::require_2d(a, "softmax_rows");
    const size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < r; ++i) {
        double mx = a.at(i * c);
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i * c + j));
        double z = 0.0;
        for (size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(a.at(i * c + j) - mx);
            z += out[i * c + j];
        }
        for (size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    detail::Node* an = a.node();
    auto sm = out;  // backward needs the forward output
    return detail::make_result(a.shape(), std::move(out), "softmax_rows", {a},
                               [an, sm, r, c](detail::Node& n) {
        auto& g = an->grad_buf();
        for (size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * sm[i * c + j];
            for (size_t j = 0; j < c; ++j)
                g[i * c + j] += sm[i * c + j] * (n.grad[i * c + j] - dot);
        }
    });
}

// Row-wise layer norm with learned gamma/beta of length c.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps = 1e-5) {
    detail::require_2d(x, "layer_norm_rows");
    const size_t r = x.dim(0), c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw Error("layer_norm_rows: gamma/beta length mismatch");
    }
    std::vector<double> out(x.numel());
    std::vector<double> norm(x.numel());  // pre-scale normalized values
    std::vector<double> inv_sd(r);
    for (size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += x.at(i * c + j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            const double d = x.at(i * c + j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        inv_sd[i] = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < c; ++j) {
            norm[i * c + j] = (x.at(i * c + j) - mean) * inv_sd[i];
            out[i * c + j] = norm[i * c + j] * gamma.at(j) + beta.at(j);
        }
    }
    detail::Node* xn = x.node();
    detail::Node* gn = gamma.node();
    detail::Node* bn = beta.node();
    return detail::make_result(x.shape(), std::move(out), "layer_norm_rows", {x, gamma, beta},
                               [xn, gn, bn, norm, inv_sd, r, c](detail::Node& n) {
        for (size_t i = 0; i < r; ++i) {
            if (xn->requires_grad) {
                auto& g = xn->grad_buf();
                // h = gamma .* dout; dx = (h - mean(h) - y .* mean(h .* y)) * inv_sd
                double mean_h = 0.0, mean_hy = 0.0;
                for (size_t j = 0; j < c; ++j) {
                    const double h = gn->data[j] * n.grad[i * c + j];
                    mean_h += h;
                    mean_hy += h * norm[i * c + j];
                }
                mean_h /= static_cast<double>(c);
                mean_hy /= static_cast<double>(c);
                for (size_t j = 0; j < c; ++j) {
                    const double h = gn->data[j] * n.grad[i * c + j];
                    g[i * c + j] += (h - mean_h - norm[i * c + j] * mean_hy) * inv_sd[i];
                }
            }
            if (gn->requires_grad) {
                auto& g = gn->grad_buf();
                for (size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j] * norm[i * c + j];
            }
            if (bn->requires_grad) {
                auto& g = bn->grad_buf();
                for (size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
            }
        }
    });
}

// Rows scaled to unit L2 norm. Rows with norm below eps divide by eps
// instead, which keeps the zero vector at zero.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
    detail::require_2d(x, "l2_normalize_rows");
    const size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(x.numel());
    std::vector<double> denom(r);
    std::vector<char> guarded(r);
    for (size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < c; ++j) s += x.at(i * c + j) * x.at(i * c + j);
        const double norm = std::sqrt(s);
        guarded[i] = norm < eps;
        denom[i] = guarded[i] ? eps : norm;
        for (size_t j = 0; j < c; ++j) out[i * c + j] = x.at(i * c + j) / denom[i];
    }
    detail::Node* xn = x.node();
    auto y = out;
    return detail::make_result(x.shape(), std::move(out), "l2_normalize_rows", {x},
                               [xn, y, denom, guarded, r, c](detail::Node& n) {
        auto& g = xn->grad_buf();
        for (size_t i = 0; i < r; ++i) {
            if (guarded[i]) {
                for (size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * c + j] / denom[i];
                continue;
            }
            double dot = 0.0;
            for (size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * y[i * c + j];
            for (size_t j = 0; j < c; ++j)
                g[i * c + j] += (n.grad[i * c + j] - y[i * c + j] * dot) / denom[i];
        }
    });
}

// --------------------------------------------------------------------- losses

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    detail::require_same_shape(pred, target, "mse_loss");
    const size_t n = pred.numel();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = pred.at(i) - target.at(i);
        s += d * d;
    }
    const double inv = 1.0 / static_cast<double>(n);
    detail::Node* pn = pred.node();
    detail::Node* tn = target.node();
    return detail::make_result({1}, {s * inv}, "mse_loss", {pred, target},
                               [pn, tn, inv](detail::Node& nd) {
        if (pn->requires_grad) {
            auto& g = pn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i)
                g[i] += nd.grad[0] * 2.0 * inv * (pn->data[i] - tn->data[i]);
        }
        if (tn->requires_grad) {
            auto& g = tn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i)
                g[i] -= nd.grad[0] * 2.0 * inv * (pn->data[i] - tn->data[i]);
        }
    });
}

// Mean softmax cross-entropy over rows against integer targets.
inline Tensor cross_entropy_rows(const Tensor& logits, const std::vector<size_t>& targets) {
    detail::require_2d(logits, "cross_entropy_rows");
    const size_t r = logits.dim(0), c = logits.dim(1);
    if (targets.size() != r) throw Error("cross_entropy_rows: target count mismatch");
    for (size_t t : targets)
        if (t >= c) throw Error("cross_entropy_rows: target index out of range");
    std::vector<double> sm(r * c);
    double loss = 0.0;
    for (size_t i = 0; i < r; ++i) {
        double mx = logits.at(i * c);
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i * c + j));
        double z = 0.0;
        for (size_t j = 0; j < c; ++j) {
            sm[i * c + j] = std::exp(logits.at(i * c + j) - mx);
            z += sm[i * c + j];
        }
        for (size_t j = 0; j < c; ++j) sm[i * c + j] /= z;
        loss -= logits.at(i * c + targets[i]) - mx - std::log(z);
    }
    loss /= static_cast<double>(r);
    detail::Node* ln = logits.node();
    auto tg = targets;
    return detail::make_result({1}, {loss}, "cross_entropy_rows", {logits},
                               [ln, sm, tg, r, c](detail::Node& nd) {
        auto& g = ln->grad_buf();
        const double inv = 1.0 / static_cast<double>(r);
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) {
                double d = sm[i * c + j];
                if (j == tg[i]) d -= 1.0;
                g[i * c + j] += nd.grad[0] * inv * d;
            }
    });
}

// ------------------------------------------------------------------- backward

// Reverse-mode sweep from a scalar loss. Non-leaf grads are reset per call;
// leaf (parameter) grads accumulate until explicitly zeroed.
inline void backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward: undefined tensor");
    if (loss.numel() != 1) {
        throw Error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw Error("backward: loss is detached (no graph reaches a requires_grad tensor)");
    }

    // Iterative post-order DFS.
    std::vector<detail::Node*> topo;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : topo) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    loss.node()->grad_buf()[0] += 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::Node* n = *it;
        if (n->pull && !n->grad.empty()) n->pull(*n);
    }
}

}  // namespace taiyi
