#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "btf/errors.hpp"

namespace btf {

// Reverse-mode autodiff over dense row-major tensors.
//
// Every operation allocates a node holding the forward value plus a pullback
// closure that scatters the node's gradient into its parents. backward() on a
// scalar output walks the DAG once in reverse topological order. The scalar
// type S is float for the model; the double instantiation exists so
// finite-difference oracles can evaluate the same graph in higher precision.

template <typename S>
struct NodeT {
    std::vector<int> shape;
    std::vector<S> data;
    std::vector<S> grad;  // same length as data once touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void(NodeT&)> pullback;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline size_t shape_numel(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
        n *= static_cast<size_t>(d);
    }
    return n;
}

template <typename S>
class TensorT {
  public:
    using Node = NodeT<S>;

    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        return from_data(shape, std::vector<S>(shape_numel(shape), S(0)), requires_grad);
    }

    static TensorT full(std::vector<int> shape, S value) {
        return from_data(shape, std::vector<S>(shape_numel(shape), value), false);
    }

    static TensorT scalar(S value) { return from_data({1}, {value}, false); }

    static TensorT from_data(std::vector<int> shape, std::vector<S> data,
                             bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        TensorT t;
        t.node = std::move(n);
        return t;
    }

    bool defined() const { return node != nullptr; }
    const std::vector<int>& shape() const { return node->shape; }
    int rank() const { return static_cast<int>(node->shape.size()); }
    int dim(int i) const { return node->shape.at(static_cast<size_t>(i)); }
    size_t numel() const { return node->data.size(); }
    std::vector<S>& data() { return node->data; }
    const std::vector<S>& data() const { return node->data; }
    bool requires_grad() const { return node->requires_grad; }

    std::vector<S>& grad() {
        if (!node->requires_grad) throw DomainError("grad requested on non-differentiable tensor");
        node->ensure_grad();
        return node->grad;
    }

    S item() const {
        if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        return node->data[0];
    }

    void zero_grad() {
        if (node->requires_grad) node->grad.assign(node->data.size(), S(0));
    }

    // Reverse pass from a scalar output. Gradients accumulate into every
    // reachable requires_grad node (parameters keep accumulating across
    // calls until zeroed).
    void backward() {
        if (numel() != 1)
            throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
        if (!node->requires_grad) return;

        std::vector<Node*> order;
        topo_sort(order);
        node->ensure_grad();
        node->grad[0] += S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->pullback) (*it)->pullback(**it);
        }
    }

    std::shared_ptr<Node> node;

  private:
    void topo_sort(std::vector<Node*>& order) const {
        std::unordered_set<Node*> seen;
        // explicit stack: (node, next parent index)
        std::vector<std::pair<Node*, size_t>> stack;
        stack.emplace_back(node.get(), 0);
        seen.insert(node.get());
        while (!stack.empty()) {
            auto& [cur, idx] = stack.back();
            if (idx < cur->parents.size()) {
                Node* p = cur->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(cur);
                stack.pop_back();
            }
        }
    }
};

using Tensor = TensorT<float>;

namespace detail {

template <typename S>
TensorT<S> make_op(std::vector<int> shape, std::vector<S> data,
                   std::vector<TensorT<S>> parents) {
    auto out = TensorT<S>::from_data(std::move(shape), std::move(data), false);
    for (auto& p : parents) {
        out.node->parents.push_back(p.node);
        out.node->requires_grad = out.node->requires_grad || p.node->requires_grad;
    }
    return out;
}

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto t = detail::make_op(a.shape(), std::move(out), {a, b});
    if (t.node->requires_grad) {
        auto an = a.node, bn = b.node;
        t.node->pullback = [an, bn](NodeT<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            }
        };
    }
    return t;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto t = detail::make_op(a.shape(), std::move(out), {a, b});
    if (t.node->requires_grad) {
        auto an = a.node, bn = b.node;
        t.node->pullback = [an, bn](NodeT<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
            }
        };
    }
    return t;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<S> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto t = detail::make_op(a.shape(), std::move(out), {a, b});
    if (t.node->requires_grad) {
        auto an = a.node, bn = b.node;
        t.node->pullback = [an, bn](NodeT<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * an->data[i];
            }
        };
    }
    return t;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    std::vector<S> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto t = detail::make_op(a.shape(), std::move(out), {a});
    if (t.node->requires_grad) {
        auto an = a.node;
        t.node->pullback = [an, c](NodeT<S>& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
        };
    }
    return t;
}

// x [*, c] + bias [c], broadcast over leading dims.
template <typename S>
TensorT<S> add_channels(const TensorT<S>& x, const TensorT<S>& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
        throw DimensionError("add_channels: " + shape_str(x.shape()) + " vs " +
                             shape_str(bias.shape()));
    const size_t c = static_cast<size_t>(bias.dim(0));
    const size_t rows = x.numel() / c;
    std::vector<S> out(x.numel());
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < c; ++j) out[r * c + j] = x.data()[r * c + j] + bias.data()[j];
    auto t = detail::make_op(x.shape(), std::move(out), {x, bias});
    if (t.node->requires_grad) {
        auto xn = x.node, bn = bias.node;
        t.node->pullback = [xn, bn, rows, c](NodeT<S>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < c; ++j) bn->grad[j] += self.grad[r * c + j];
            }
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<S> out(static_cast<size_t>(m) * n, S(0));
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const S av = a.data()[i * k + p];
            for (int j = 0; j < n; ++j) out[i * n + j] += av * b.data()[p * n + j];
        }
    auto t = detail::make_op({m, n}, std::move(out), {a, b});
    if (t.node->requires_grad) {
        auto an = a.node, bn = b.node;
        t.node->pullback = [an, bn, m, k, n](NodeT<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        S acc = 0;
                        for (int j = 0; j < n; ++j)
                            acc += self.grad[i * n + j] * bn->data[p * n + j];
                        an->grad[i * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        const S av = an->data[i * k + p];
                        for (int j = 0; j < n; ++j)
                            bn->grad[p * n + j] += av * self.grad[i * n + j];
                    }
            }
        };
    }
    return t;
}

template <typename S>
TensorT<S> transpose2d(const TensorT<S>& a) {
    if (a.rank() != 2) throw DimensionError("transpose2d: " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    std::vector<S> out(a.numel());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    auto t = detail::make_op({n, m}, std::move(out), {a});
    if (t.node->requires_grad) {
        auto an = a.node;
        t.node->pullback = [an, m, n](NodeT<S>& self) {
            an->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
        };
    }
    return t;
}

// y = x.W + b where x is [*, in]; leading dims are preserved.
template <typename S>
TensorT<S> affine(const TensorT<S>& x, const TensorT<S>& weight, const TensorT<S>& bias) {
    if (weight.rank() != 2 || bias.rank() != 1 || x.rank() < 1 ||
        x.shape().back() != weight.dim(0) || weight.dim(1) != bias.dim(0))
        throw DimensionError("affine: x" + shape_str(x.shape()) + " w" +
                             shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
    const int in = weight.dim(0), out_dim = weight.dim(1);
    const size_t rows = x.numel() / static_cast<size_t>(in);
    std::vector<int> out_shape(x.shape().begin(), x.shape().end() - 1);
    out_shape.push_back(out_dim);
    std::vector<S> out(rows * static_cast<size_t>(out_dim));
    for (size_t r = 0; r < rows; ++r) {
        for (int o = 0; o < out_dim; ++o) out[r * out_dim + o] = bias.data()[o];
        for (int i = 0; i < in; ++i) {
            const S xv = x.data()[r * in + i];
            if (xv == S(0)) continue;
            for (int o = 0; o < out_dim; ++o)
                out[r * out_dim + o] += xv * weight.data()[i * out_dim + o];
        }
    }
    auto t = detail::make_op(std::move(out_shape), std::move(out), {x, weight, bias});
    if (t.node->requires_grad) {
        auto xn = x.node, wn = weight.node, bn = bias.node;
        t.node->pullback = [xn, wn, bn, rows, in, out_dim](NodeT<S>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int i = 0; i < in; ++i) {
                        S acc = 0;
                        for (int o = 0; o < out_dim; ++o)
                            acc += self.grad[r * out_dim + o] * wn->data[i * out_dim + o];
                        xn->grad[r * in + i] += acc;
                    }
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int i = 0; i < in; ++i) {
                        const S xv = xn->data[r * in + i];
                        if (xv == S(0)) continue;
                        for (int o = 0; o < out_dim; ++o)
                            wn->grad[i * out_dim + o] += xv * self.grad[r * out_dim + o];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int o = 0; o < out_dim; ++o) bn->grad[o] += self.grad[r * out_dim + o];
            }
        };
    }
    return t;
}

// Same-padded 2D cross-correlation over an [n, n, c_in] map with dilated taps.
// kernel is [k, k, c_in, c_out], k odd.
template <typename S>
TensorT<S> conv2d_dilated(const TensorT<S>& x, const TensorT<S>& kernel, int dilation) {
    if (x.rank() != 3 || x.dim(0) != x.dim(1))
        throw DimensionError("conv2d_dilated: input must be [n,n,c], got " + shape_str(x.shape()));
    if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) || kernel.dim(2) != x.dim(2))
        throw DimensionError("conv2d_dilated: kernel " + shape_str(kernel.shape()) +
                             " does not fit input " + shape_str(x.shape()));
    const int k = kernel.dim(0);
    if (k % 2 == 0) throw ConfigError("conv2d_dilated: kernel size must be odd, got " +
                                      std::to_string(k));
    if (dilation < 1) throw ConfigError("conv2d_dilated: dilation must be >= 1");

    const int n = x.dim(0), ci = x.dim(2), co = kernel.dim(3);
    const int h = (k - 1) / 2;
    std::vector<S> out(static_cast<size_t>(n) * n * co, S(0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int u = 0; u < k; ++u) {
                const int xi = i + dilation * (u - h);
                if (xi < 0 || xi >= n) continue;
                for (int v = 0; v < k; ++v) {
                    const int xj = j + dilation * (v - h);
                    if (xj < 0 || xj >= n) continue;
                    const S* xp = &x.data()[(static_cast<size_t>(xi) * n + xj) * ci];
                    const S* kp = &kernel.data()[(static_cast<size_t>(u) * k + v) * ci * co];
                    S* op = &out[(static_cast<size_t>(i) * n + j) * co];
                    for (int c = 0; c < ci; ++c) {
                        const S xv = xp[c];
                        if (xv == S(0)) continue;
                        for (int o = 0; o < co; ++o) op[o] += xv * kp[c * co + o];
                    }
                }
            }
    auto t = detail::make_op({n, n, co}, std::move(out), {x, kernel});
    if (t.node->requires_grad) {
        auto xn = x.node, kn = kernel.node;
        t.node->pullback = [xn, kn, n, ci, co, k, h, dilation](NodeT<S>& self) {
            const bool gx = xn->requires_grad, gk = kn->requires_grad;
            if (gx) xn->ensure_grad();
            if (gk) kn->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int u = 0; u < k; ++u) {
                        const int xi = i + dilation * (u - h);
                        if (xi < 0 || xi >= n) continue;
                        for (int v = 0; v < k; ++v) {
                            const int xj = j + dilation * (v - h);
                            if (xj < 0 || xj >= n) continue;
                            const size_t xoff = (static_cast<size_t>(xi) * n + xj) * ci;
                            const size_t koff = (static_cast<size_t>(u) * k + v) * ci * co;
                            const S* gp = &self.grad[(static_cast<size_t>(i) * n + j) * co];
                            for (int c = 0; c < ci; ++c) {
                                if (gx) {
                                    S acc = 0;
                                    for (int o = 0; o < co; ++o)
                                        acc += gp[o] * kn->data[koff + c * co + o];
                                    xn->grad[xoff + c] += acc;
                                }
                                if (gk) {
                                    const S xv = xn->data[xoff + c];
                                    if (xv == S(0)) continue;
                                    for (int o = 0; o < co; ++o)
                                        kn->grad[koff + c * co + o] += xv * gp[o];
                                }
                            }
                        }
                    }
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    auto t = detail::make_op(x.shape(), std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (xn->data[i] > S(0)) xn->grad[i] += self.grad[i];
        };
    }
    return t;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    std::vector<S> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        const S v = x.data()[i];
        if (v >= S(0)) {
            out[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            out[i] = e / (S(1) + e);
        }
    }
    auto t = detail::make_op(x.shape(), std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const S y = self.data[i];
                xn->grad[i] += self.grad[i] * y * (S(1) - y);
            }
        };
    }
    return t;
}

// Softmax along the last axis, max-shifted for stability.
template <typename S>
TensorT<S> softmax_lastdim(const TensorT<S>& x) {
    if (x.rank() < 1) throw DimensionError("softmax_lastdim: rank-0 input");
    const size_t c = static_cast<size_t>(x.shape().back());
    const size_t rows = x.numel() / c;
    std::vector<S> out(x.numel());
    for (size_t r = 0; r < rows; ++r) {
        const S* xr = &x.data()[r * c];
        S mx = xr[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        S denom = 0;
        for (size_t j = 0; j < c; ++j) {
            out[r * c + j] = std::exp(xr[j] - mx);
            denom += out[r * c + j];
        }
        for (size_t j = 0; j < c; ++j) out[r * c + j] /= denom;
    }
    auto t = detail::make_op(x.shape(), std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, rows, c](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t r = 0; r < rows; ++r) {
                S dot = 0;
                for (size_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.data[r * c + j];
                for (size_t j = 0; j < c; ++j)
                    xn->grad[r * c + j] += (self.grad[r * c + j] - dot) * self.data[r * c + j];
            }
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// gathering / slicing / reshaping
// ---------------------------------------------------------------------------

// Rows of an embedding-style matrix [V, d] selected by index; repeated
// indices accumulate gradient into the same row.
template <typename S>
TensorT<S> gather_rows(const TensorT<S>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw DimensionError("gather_rows: " + shape_str(table.shape()));
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw DomainError("gather_rows: index " + std::to_string(id) + " out of [0," +
                              std::to_string(v) + ")");
    std::vector<S> out(ids.size() * static_cast<size_t>(d));
    for (size_t r = 0; r < ids.size(); ++r)
        std::copy_n(&table.data()[static_cast<size_t>(ids[r]) * d], d, &out[r * d]);
    auto t = detail::make_op({static_cast<int>(ids.size()), d}, std::move(out), {table});
    if (t.node->requires_grad) {
        auto tn = table.node;
        auto idx = ids;
        t.node->pullback = [tn, idx, d](NodeT<S>& self) {
            tn->ensure_grad();
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < d; ++j)
                    tn->grad[static_cast<size_t>(idx[r]) * d + j] += self.grad[r * d + j];
        };
    }
    return t;
}

// Single row of a [m, d] matrix as a [d] vector.
template <typename S>
TensorT<S> row(const TensorT<S>& x, int i) {
    if (x.rank() != 2) throw DimensionError("row: " + shape_str(x.shape()));
    const int m = x.dim(0), d = x.dim(1);
    if (i < 0 || i >= m) throw DomainError("row: index " + std::to_string(i) + " out of range");
    std::vector<S> out(x.data().begin() + static_cast<size_t>(i) * d,
                       x.data().begin() + static_cast<size_t>(i + 1) * d);
    auto t = detail::make_op({d}, std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, i, d](NodeT<S>& self) {
            xn->ensure_grad();
            for (int j = 0; j < d; ++j) xn->grad[static_cast<size_t>(i) * d + j] += self.grad[j];
        };
    }
    return t;
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& x, int lo, int len) {
    if (x.rank() != 2) throw DimensionError("slice_rows: " + shape_str(x.shape()));
    const int m = x.dim(0), d = x.dim(1);
    if (lo < 0 || len < 1 || lo + len > m)
        throw DomainError("slice_rows: [" + std::to_string(lo) + "," + std::to_string(lo + len) +
                          ") out of " + std::to_string(m) + " rows");
    std::vector<S> out(x.data().begin() + static_cast<size_t>(lo) * d,
                       x.data().begin() + static_cast<size_t>(lo + len) * d);
    auto t = detail::make_op({len, d}, std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, lo, len, d](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < static_cast<size_t>(len) * d; ++i)
                xn->grad[static_cast<size_t>(lo) * d + i] += self.grad[i];
        };
    }
    return t;
}

// Contiguous column block [m, w] starting at column c0.
template <typename S>
TensorT<S> slice_cols(const TensorT<S>& x, int c0, int w) {
    if (x.rank() != 2) throw DimensionError("slice_cols: " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    if (c0 < 0 || w < 1 || c0 + w > n) throw DomainError("slice_cols: block out of range");
    std::vector<S> out(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        std::copy_n(&x.data()[static_cast<size_t>(i) * n + c0], w, &out[static_cast<size_t>(i) * w]);
    auto t = detail::make_op({m, w}, std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, c0, w, m, n](NodeT<S>& self) {
            xn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    xn->grad[static_cast<size_t>(i) * n + c0 + j] +=
                        self.grad[static_cast<size_t>(i) * w + j];
        };
    }
    return t;
}

// Concatenate along the last axis; all inputs share leading dims.
template <typename S>
TensorT<S> concat_lastdim(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw DomainError("concat_lastdim: no inputs");
    std::vector<int> lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    int total = 0;
    for (const auto& p : parts) {
        std::vector<int> pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead)
            throw DimensionError("concat_lastdim: leading dims differ: " +
                                 shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        total += p.shape().back();
    }
    const size_t rows = shape_numel(lead);
    std::vector<S> out(rows * static_cast<size_t>(total));
    size_t off = 0;
    for (const auto& p : parts) {
        const size_t w = static_cast<size_t>(p.shape().back());
        for (size_t r = 0; r < rows; ++r)
            std::copy_n(&p.data()[r * w], w, &out[r * total + off]);
        off += w;
    }
    std::vector<int> out_shape = lead;
    out_shape.push_back(total);
    auto t = detail::make_op(std::move(out_shape), std::move(out), parts);
    if (t.node->requires_grad) {
        std::vector<std::shared_ptr<NodeT<S>>> pn;
        std::vector<size_t> widths;
        for (const auto& p : parts) {
            pn.push_back(p.node);
            widths.push_back(static_cast<size_t>(p.shape().back()));
        }
        t.node->pullback = [pn, widths, rows, total](NodeT<S>& self) {
            size_t off2 = 0;
            for (size_t k = 0; k < pn.size(); ++k) {
                if (pn[k]->requires_grad) {
                    pn[k]->ensure_grad();
                    for (size_t r = 0; r < rows; ++r)
                        for (size_t j = 0; j < widths[k]; ++j)
                            pn[k]->grad[r * widths[k] + j] +=
                                self.grad[r * static_cast<size_t>(total) + off2 + j];
                }
                off2 += widths[k];
            }
        };
    }
    return t;
}

// Stack K same-shape tensors into a new trailing axis of size K.
template <typename S>
TensorT<S> stack_lastdim(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) throw DomainError("stack_lastdim: no inputs");
    for (const auto& p : parts) detail::check_same_shape(parts[0], p, "stack_lastdim");
    const size_t k = parts.size();
    const size_t cells = parts[0].numel();
    std::vector<S> out(cells * k);
    for (size_t p = 0; p < k; ++p)
        for (size_t i = 0; i < cells; ++i) out[i * k + p] = parts[p].data()[i];
    std::vector<int> out_shape = parts[0].shape();
    out_shape.push_back(static_cast<int>(k));
    auto t = detail::make_op(std::move(out_shape), std::move(out), parts);
    if (t.node->requires_grad) {
        std::vector<std::shared_ptr<NodeT<S>>> pn;
        for (const auto& p : parts) pn.push_back(p.node);
        t.node->pullback = [pn, cells, k](NodeT<S>& self) {
            for (size_t p = 0; p < k; ++p) {
                if (!pn[p]->requires_grad) continue;
                pn[p]->ensure_grad();
                for (size_t i = 0; i < cells; ++i) pn[p]->grad[i] += self.grad[i * k + p];
            }
        };
    }
    return t;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(new_shape));
    auto t = detail::make_op(std::move(new_shape), std::vector<S>(x.data()), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        };
    }
    return t;
}

// Rows of the rectangle [a..c] x [b..d] of an [n, n, ch] table, flattened to
// [(c-a+1)*(d-b+1), ch] in row-major cell order.
template <typename S>
TensorT<S> slice_rect(const TensorT<S>& t3, int a, int b, int c, int d) {
    if (t3.rank() != 3 || t3.dim(0) != t3.dim(1))
        throw DimensionError("slice_rect: " + shape_str(t3.shape()));
    const int n = t3.dim(0), ch = t3.dim(2);
    if (a < 0 || b < 0 || c < a || d < b || c >= n || d >= n)
        throw DomainError("slice_rect: rectangle (" + std::to_string(a) + "," + std::to_string(b) +
                          ")-(" + std::to_string(c) + "," + std::to_string(d) + ") out of " +
                          std::to_string(n) + "x" + std::to_string(n));
    const int rows = (c - a + 1) * (d - b + 1);
    std::vector<S> out(static_cast<size_t>(rows) * ch);
    size_t r = 0;
    for (int i = a; i <= c; ++i)
        for (int j = b; j <= d; ++j, ++r)
            std::copy_n(&t3.data()[(static_cast<size_t>(i) * n + j) * ch], ch, &out[r * ch]);
    auto t = detail::make_op({rows, ch}, std::move(out), {t3});
    if (t.node->requires_grad) {
        auto tn = t3.node;
        t.node->pullback = [tn, a, b, c, d, n, ch](NodeT<S>& self) {
            tn->ensure_grad();
            size_t r2 = 0;
            for (int i = a; i <= c; ++i)
                for (int j = b; j <= d; ++j, ++r2)
                    for (int q = 0; q < ch; ++q)
                        tn->grad[(static_cast<size_t>(i) * n + j) * ch + q] +=
                            self.grad[r2 * ch + q];
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

// Elementwise max over the first axis of [m, d]; the gradient routes to the
// first (lowest-index) maximal element of each column.
template <typename S>
TensorT<S> max_over_axis0(const TensorT<S>& x) {
    if (x.rank() != 2) throw DimensionError("max_over_axis0: " + shape_str(x.shape()));
    const int m = x.dim(0), d = x.dim(1);
    if (m == 0) throw DomainError("max_over_axis0: empty pool");
    std::vector<S> out(static_cast<size_t>(d));
    std::vector<int> arg(static_cast<size_t>(d), 0);
    for (int j = 0; j < d; ++j) out[j] = x.data()[j];
    for (int i = 1; i < m; ++i)
        for (int j = 0; j < d; ++j) {
            const S v = x.data()[static_cast<size_t>(i) * d + j];
            if (v > out[j]) {
                out[j] = v;
                arg[j] = i;
            }
        }
    auto t = detail::make_op({d}, std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, arg, d](NodeT<S>& self) {
            xn->ensure_grad();
            for (int j = 0; j < d; ++j)
                xn->grad[static_cast<size_t>(arg[j]) * d + j] += self.grad[j];
        };
    }
    return t;
}

template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
    S acc = 0;
    for (S v : x.data()) acc += v;
    auto t = detail::make_op({1}, std::vector<S>{acc}, {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
        };
    }
    return t;
}

// Mean over the two spatial axes of an [n, n, ch] table -> [ch].
template <typename S>
TensorT<S> mean_over_table(const TensorT<S>& t3) {
    if (t3.rank() != 3 || t3.dim(0) != t3.dim(1))
        throw DimensionError("mean_over_table: " + shape_str(t3.shape()));
    const int n = t3.dim(0), ch = t3.dim(2);
    const size_t cells = static_cast<size_t>(n) * n;
    std::vector<S> out(static_cast<size_t>(ch), S(0));
    for (size_t cell = 0; cell < cells; ++cell)
        for (int q = 0; q < ch; ++q) out[q] += t3.data()[cell * ch + q];
    const S inv = S(1) / static_cast<S>(cells);
    for (int q = 0; q < ch; ++q) out[q] *= inv;
    auto t = detail::make_op({ch}, std::move(out), {t3});
    if (t.node->requires_grad) {
        auto tn = t3.node;
        t.node->pullback = [tn, cells, ch, inv](NodeT<S>& self) {
            tn->ensure_grad();
            for (size_t cell = 0; cell < cells; ++cell)
                for (int q = 0; q < ch; ++q) tn->grad[cell * ch + q] += self.grad[q] * inv;
        };
    }
    return t;
}

// sqrt(x + eps) on a scalar; eps keeps the pullback finite at x == 0.
template <typename S>
TensorT<S> sqrt_smooth(const TensorT<S>& x, S eps = S(1e-12)) {
    if (x.numel() != 1) throw DimensionError("sqrt_smooth: scalar expected");
    const S y = std::sqrt(x.data()[0] + eps);
    auto t = detail::make_op({1}, std::vector<S>{y}, {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, y](NodeT<S>& self) {
            xn->ensure_grad();
            xn->grad[0] += self.grad[0] * (S(0.5) / y);
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// table broadcasting (word-pair grids)
// ---------------------------------------------------------------------------

// out[i][j] = H[i] for H [n, d] -> [n, n, d].
template <typename S>
TensorT<S> expand_rows_table(const TensorT<S>& h) {
    if (h.rank() != 2) throw DimensionError("expand_rows_table: " + shape_str(h.shape()));
    const int n = h.dim(0), d = h.dim(1);
    std::vector<S> out(static_cast<size_t>(n) * n * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            std::copy_n(&h.data()[static_cast<size_t>(i) * d], d,
                        &out[(static_cast<size_t>(i) * n + j) * d]);
    auto t = detail::make_op({n, n, d}, std::move(out), {h});
    if (t.node->requires_grad) {
        auto hn = h.node;
        t.node->pullback = [hn, n, d](NodeT<S>& self) {
            hn->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int q = 0; q < d; ++q)
                        hn->grad[static_cast<size_t>(i) * d + q] +=
                            self.grad[(static_cast<size_t>(i) * n + j) * d + q];
        };
    }
    return t;
}

// out[i][j] = H[j].
template <typename S>
TensorT<S> expand_cols_table(const TensorT<S>& h) {
    if (h.rank() != 2) throw DimensionError("expand_cols_table: " + shape_str(h.shape()));
    const int n = h.dim(0), d = h.dim(1);
    std::vector<S> out(static_cast<size_t>(n) * n * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            std::copy_n(&h.data()[static_cast<size_t>(j) * d], d,
                        &out[(static_cast<size_t>(i) * n + j) * d]);
    auto t = detail::make_op({n, n, d}, std::move(out), {h});
    if (t.node->requires_grad) {
        auto hn = h.node;
        t.node->pullback = [hn, n, d](NodeT<S>& self) {
            hn->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int q = 0; q < d; ++q)
                        hn->grad[static_cast<size_t>(j) * d + q] +=
                            self.grad[(static_cast<size_t>(i) * n + j) * d + q];
        };
    }
    return t;
}

// out[i][j] = elementwise max over rows min(i,j)..max(i,j) of H. The DP is
// keyed on (lo, hi) so cell (i, j) and (j, i) share bits exactly; ties route
// the gradient to the lowest row index.
template <typename S>
TensorT<S> span_max_table(const TensorT<S>& h) {
    if (h.rank() != 2) throw DimensionError("span_max_table: " + shape_str(h.shape()));
    const int n = h.dim(0), d = h.dim(1);
    std::vector<S> val(static_cast<size_t>(n) * n * d);
    std::vector<int> arg(static_cast<size_t>(n) * n * d);
    // upper triangle via DP over span ends, then mirror
    for (int lo = 0; lo < n; ++lo) {
        size_t cur = (static_cast<size_t>(lo) * n + lo) * d;
        for (int q = 0; q < d; ++q) {
            val[cur + q] = h.data()[static_cast<size_t>(lo) * d + q];
            arg[cur + q] = lo;
        }
        for (int hi = lo + 1; hi < n; ++hi) {
            const size_t prev = (static_cast<size_t>(lo) * n + hi - 1) * d;
            const size_t now = (static_cast<size_t>(lo) * n + hi) * d;
            for (int q = 0; q < d; ++q) {
                const S cand = h.data()[static_cast<size_t>(hi) * d + q];
                if (cand > val[prev + q]) {
                    val[now + q] = cand;
                    arg[now + q] = hi;
                } else {
                    val[now + q] = val[prev + q];
                    arg[now + q] = arg[prev + q];
                }
            }
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) {
            const size_t src = (static_cast<size_t>(j) * n + i) * d;
            const size_t dst = (static_cast<size_t>(i) * n + j) * d;
            std::copy_n(&val[src], d, &val[dst]);
            std::copy_n(&arg[src], d, &arg[dst]);
        }
    auto t = detail::make_op({n, n, d}, std::move(val), {h});
    if (t.node->requires_grad) {
        auto hn = h.node;
        auto argv = std::make_shared<std::vector<int>>(std::move(arg));
        t.node->pullback = [hn, argv, d](NodeT<S>& self) {
            hn->ensure_grad();
            const auto& a = *argv;
            for (size_t cell = 0; cell < self.grad.size() / d; ++cell)
                for (int q = 0; q < d; ++q)
                    hn->grad[static_cast<size_t>(a[cell * d + q]) * d + q] +=
                        self.grad[cell * d + q];
        };
    }
    return t;
}

// t[k] = h_i^T W[k] h_j for W [K, d, d]; one K-vector of bilinear forms.
template <typename S>
TensorT<S> bilinear_vec(const TensorT<S>& hi, const TensorT<S>& hj, const TensorT<S>& w) {
    if (hi.rank() != 1 || hj.rank() != 1 || w.rank() != 3 || w.dim(1) != hi.dim(0) ||
        w.dim(2) != hj.dim(0))
        throw DimensionError("bilinear_vec: h_i" + shape_str(hi.shape()) + " h_j" +
                             shape_str(hj.shape()) + " W" + shape_str(w.shape()));
    const int kk = w.dim(0), d = w.dim(1);
    std::vector<S> out(static_cast<size_t>(kk), S(0));
    for (int k = 0; k < kk; ++k) {
        const S* wk = &w.data()[static_cast<size_t>(k) * d * d];
        S acc = 0;
        for (int p = 0; p < d; ++p) {
            const S hv = hi.data()[p];
            if (hv == S(0)) continue;
            S inner = 0;
            for (int q = 0; q < d; ++q) inner += wk[p * d + q] * hj.data()[q];
            acc += hv * inner;
        }
        out[k] = acc;
    }
    auto t = detail::make_op({kk}, std::move(out), {hi, hj, w});
    if (t.node->requires_grad) {
        auto in = hi.node, jn = hj.node, wn = w.node;
        t.node->pullback = [in, jn, wn, kk, d](NodeT<S>& self) {
            if (in->requires_grad) in->ensure_grad();
            if (jn->requires_grad) jn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            for (int k = 0; k < kk; ++k) {
                const S g = self.grad[k];
                if (g == S(0)) continue;
                const S* wk = &wn->data[static_cast<size_t>(k) * d * d];
                for (int p = 0; p < d; ++p) {
                    const S hp = in->data[p];
                    for (int q = 0; q < d; ++q) {
                        const S hq = jn->data[q];
                        if (in->requires_grad) in->grad[p] += g * wk[p * d + q] * hq;
                        if (jn->requires_grad) jn->grad[q] += g * wk[p * d + q] * hp;
                        if (wn->requires_grad)
                            wn->grad[static_cast<size_t>(k) * d * d + p * d + q] += g * hp * hq;
                    }
                }
            }
        };
    }
    return t;
}

// ---------------------------------------------------------------------------
// regularization / losses
// ---------------------------------------------------------------------------

// Inverted dropout; only called on the training path.
template <typename S>
TensorT<S> dropout(const TensorT<S>& x, float rate, std::mt19937& rng) {
    if (rate < 0.0f || rate >= 1.0f) throw ConfigError("dropout: rate must be in [0,1)");
    if (rate == 0.0f) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    const S inv_keep = S(1) / S(1.0f - rate);
    auto mask = std::make_shared<std::vector<S>>(x.numel());
    std::vector<S> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = keep(rng) ? inv_keep : S(0);
        out[i] = x.data()[i] * (*mask)[i];
    }
    auto t = detail::make_op(x.shape(), std::move(out), {x});
    if (t.node->requires_grad) {
        auto xn = x.node;
        t.node->pullback = [xn, mask](NodeT<S>& self) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.grad[i] * (*mask)[i];
        };
    }
    return t;
}

template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      S eps = S(1e-5)) {
    if (gamma.rank() != 1 || beta.rank() != 1 || x.shape().back() != gamma.dim(0) ||
        gamma.dim(0) != beta.dim(0))
        throw DimensionError("layer_norm: x" + shape_str(x.shape()) + " gamma" +
                             shape_str(gamma.shape()));
    const size_t d = static_cast<size_t>(x.shape().back());
    const size_t rows = x.numel() / d;
    std::vector<S> out(x.numel());
    auto xhat = std::make_shared<std::vector<S>>(x.numel());
    auto inv_std = std::make_shared<std::vector<S>>(rows);
    for (size_t r = 0; r < rows; ++r) {
        const S* xr = &x.data()[r * d];
        S mean = 0;
        for (size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<S>(d);
        S var = 0;
        for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<S>(d);
        const S istd = S(1) / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        for (size_t j = 0; j < d; ++j) {
            (*xhat)[r * d + j] = (xr[j] - mean) * istd;
            out[r * d + j] = gamma.data()[j] * (*xhat)[r * d + j] + beta.data()[j];
        }
    }
    auto t = detail::make_op(x.shape(), std::move(out), {x, gamma, beta});
    if (t.node->requires_grad) {
        auto xn = x.node, gn = gamma.node, bn = beta.node;
        t.node->pullback = [xn, gn, bn, xhat, inv_std, rows, d](NodeT<S>& self) {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (size_t r = 0; r < rows; ++r) {
                S sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (size_t j = 0; j < d; ++j) {
                    const S g = self.grad[r * d + j];
                    const S xh = (*xhat)[r * d + j];
                    if (gn->requires_grad) gn->grad[j] += g * xh;
                    if (bn->requires_grad) bn->grad[j] += g;
                    const S dxh = g * gn->data[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xh;
                }
                if (xn->requires_grad) {
                    const S istd = (*inv_std)[r];
                    const S inv_d = S(1) / static_cast<S>(d);
                    for (size_t j = 0; j < d; ++j) {
                        const S dxh = self.grad[r * d + j] * gn->data[j];
                        const S xh = (*xhat)[r * d + j];
                        xn->grad[r * d + j] +=
                            istd * (dxh - inv_d * sum_dxhat - xh * inv_d * sum_dxhat_xhat);
                    }
                }
            }
        };
    }
    return t;
}

// Mean binary cross-entropy on logits, in the log-sum-exp stable form
// max(z,0) - z*y + log1p(exp(-|z|)). Labels must be exactly 0 or 1.
template <typename S>
TensorT<S> bce_with_logits_mean(const TensorT<S>& logits, const std::vector<S>& labels) {
    if (labels.size() != logits.numel())
        throw DimensionError("bce_with_logits_mean: " + std::to_string(labels.size()) +
                             " labels for " + shape_str(logits.shape()));
    for (S y : labels)
        if (y != S(0) && y != S(1)) throw DataError("bce_with_logits_mean: label not in {0,1}");
    const size_t n = labels.size();
    const S inv_n = S(1) / static_cast<S>(n);
    S acc = 0;
    for (size_t i = 0; i < n; ++i) {
        const S z = logits.data()[i];
        acc += std::max(z, S(0)) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
    }
    auto t = detail::make_op({1}, std::vector<S>{acc * inv_n}, {logits});
    if (t.node->requires_grad) {
        auto zn = logits.node;
        auto lab = std::make_shared<std::vector<S>>(labels);
        t.node->pullback = [zn, lab, inv_n](NodeT<S>& self) {
            zn->ensure_grad();
            for (size_t i = 0; i < zn->data.size(); ++i) {
                const S z = zn->data[i];
                S p;
                if (z >= S(0)) {
                    p = S(1) / (S(1) + std::exp(-z));
                } else {
                    const S e = std::exp(z);
                    p = e / (S(1) + e);
                }
                zn->grad[i] += self.grad[0] * (p - (*lab)[i]) * inv_n;
            }
        };
    }
    return t;
}

// Mean negative log-likelihood over rows of [R, C] logits, computed via a
// shifted log-sum-exp.
template <typename S>
TensorT<S> cross_entropy_mean(const TensorT<S>& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2 || targets.size() != static_cast<size_t>(logits.dim(0)))
        throw DimensionError("cross_entropy_mean: logits " + shape_str(logits.shape()) + " with " +
                             std::to_string(targets.size()) + " targets");
    const int rows = logits.dim(0), c = logits.dim(1);
    for (int tgt : targets)
        if (tgt < 0 || tgt >= c) throw DataError("cross_entropy_mean: target out of range");
    const S inv_r = S(1) / static_cast<S>(rows);
    auto probs = std::make_shared<std::vector<S>>(logits.numel());
    S acc = 0;
    for (int r = 0; r < rows; ++r) {
        const S* zr = &logits.data()[static_cast<size_t>(r) * c];
        S mx = zr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, zr[j]);
        S denom = 0;
        for (int j = 0; j < c; ++j) denom += std::exp(zr[j] - mx);
        const S lse = mx + std::log(denom);
        acc += lse - zr[targets[static_cast<size_t>(r)]];
        for (int j = 0; j < c; ++j)
            (*probs)[static_cast<size_t>(r) * c + j] = std::exp(zr[j] - lse);
    }
    auto t = detail::make_op({1}, std::vector<S>{acc * inv_r}, {logits});
    if (t.node->requires_grad) {
        auto zn = logits.node;
        auto tgt = std::make_shared<std::vector<int>>(targets);
        t.node->pullback = [zn, probs, tgt, rows, c, inv_r](NodeT<S>& self) {
            zn->ensure_grad();
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) {
                    S g = (*probs)[static_cast<size_t>(r) * c + j];
                    if (j == (*tgt)[static_cast<size_t>(r)]) g -= S(1);
                    zn->grad[static_cast<size_t>(r) * c + j] += self.grad[0] * g * inv_r;
                }
        };
    }
    return t;
}

template <typename S>
bool all_finite(const TensorT<S>& t) {
    for (S v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// parameter store
// ---------------------------------------------------------------------------

// Trainable tensors keyed by a stable path; iteration order is lexicographic
// so initialization, serialization, and updates are deterministic.
template <typename S>
class ParamStoreT {
  public:
    TensorT<S>& add(const std::string& path, TensorT<S> t) {
        if (entries_.count(path)) throw ConfigError("ParamStore: duplicate path " + path);
        t.node->requires_grad = true;
        auto [it, _] = entries_.emplace(path, std::move(t));
        return it->second;
    }

    TensorT<S>& at(const std::string& path) {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw ConfigError("ParamStore: unknown path " + path);
        return it->second;
    }

    const TensorT<S>& at(const std::string& path) const {
        auto it = entries_.find(path);
        if (it == entries_.end()) throw ConfigError("ParamStore: unknown path " + path);
        return it->second;
    }

    bool contains(const std::string& path) const { return entries_.count(path) != 0; }
    size_t size() const { return entries_.size(); }

    size_t total_parameters() const {
        size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [_, t] : entries_) t.zero_grad();
    }

    template <typename T>
    ParamStoreT<T> cast() const {
        ParamStoreT<T> out;
        for (const auto& [path, t] : entries_) {
            std::vector<T> data(t.numel());
            for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(t.data()[i]);
            out.add(path, TensorT<T>::from_data(t.shape(), std::move(data)));
        }
        return out;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

  private:
    std::map<std::string, TensorT<S>> entries_;
};

using ParamStore = ParamStoreT<float>;

// ---------------------------------------------------------------------------
// initializers (parameters are always created in float)
// ---------------------------------------------------------------------------

inline Tensor randn_init(std::vector<int> shape, float stddev, std::mt19937& rng) {
    std::normal_distribution<float> dist(0.0f, stddev);
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) v = dist(rng);
    return Tensor::from_data(std::move(shape), std::move(data));
}

inline Tensor xavier_init(int fan_in, int fan_out, std::mt19937& rng) {
    const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    std::uniform_real_distribution<float> dist(-a, a);
    std::vector<float> data(static_cast<size_t>(fan_in) * fan_out);
    for (auto& v : data) v = dist(rng);
    return Tensor::from_data({fan_in, fan_out}, std::move(data));
}

}  // namespace btf
