#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lgvf/errors.hpp"

namespace lgvf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

class Tape;

// Dense float64 array, optionally bound to a differentiation tape. Values are
// immutable once constructed; operations produce new tensors. A tensor made
// by an op whose inputs live on a tape is registered on that tape, everything
// else is a plain constant.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)),
          data_(std::make_shared<const std::vector<double>>(std::move(values))) {
        if (data_->size() != shape_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_->size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) {
        std::size_t n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape shape, double v) {
        std::size_t n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor(Shape{n}, std::move(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor(Shape{rows, cols}, std::move(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    const std::vector<double>& data() const { return *data_; }
    double operator[](std::size_t i) const { return (*data_)[i]; }

    double value() const {
        if (size() != 1) throw ContractError("value() requires a single-element tensor, got " + shape_str(shape_));
        return (*data_)[0];
    }

    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    friend class Tape;
    Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data, Tape* tape, int node)
        : shape_(std::move(shape)), data_(std::move(data)), tape_(tape), node_(node) {}

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Reverse-mode differentiation tape. Nodes are appended in forward order, so
// the record is topologically sorted by construction; backward() runs one
// reverse sweep, visiting each reachable node exactly once and accumulating
// gradients additively across fan-out. A tape is built per forward pass and
// its saved values are released by the sweep.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Shape shape, std::vector<double> values) {
        if (values.size() != shape_size(shape))
            throw DimensionError("leaf data length does not match shape " + shape_str(shape));
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{shape, BackwardFn{}});
        grads_.emplace_back();
        leaves_.push_back(id);
        auto data = std::make_shared<const std::vector<double>>(std::move(values));
        return Tensor(std::move(shape), std::move(data), this, id);
    }

    Tensor leaf(const Tensor& constant) {
        return leaf(constant.shape(), constant.data());
    }

    Tensor emit(Shape shape, std::vector<double> values, BackwardFn backward) {
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{shape, std::move(backward)});
        grads_.emplace_back();
        auto data = std::make_shared<const std::vector<double>>(std::move(values));
        return Tensor(std::move(shape), std::move(data), this, id);
    }

    // Gradient accumulator for a node, allocated zero-filled on first touch.
    std::vector<double>& grad_buffer(int node) {
        auto& g = grads_[static_cast<std::size_t>(node)];
        if (g.empty()) g.assign(shape_size(nodes_[static_cast<std::size_t>(node)].shape), 0.0);
        return g;
    }

    void backward(const Tensor& loss) {
        if (!loss.on_tape() || loss.tape() != this)
            throw ContractError("backward: loss does not live on this tape");
        if (loss.size() != 1)
            throw ContractError("backward: loss must be a single element, got " + shape_str(loss.shape()));
        if (swept_) throw ContractError("backward: tape already swept");
        swept_ = true;
        grad_buffer(loss.node())[0] = 1.0;
        for (int i = loss.node(); i >= 0; --i) {
            auto& node = nodes_[static_cast<std::size_t>(i)];
            if (!grads_[static_cast<std::size_t>(i)].empty() && node.backward)
                node.backward(*this, grads_[static_cast<std::size_t>(i)]);
            node.backward = nullptr;  // release saved values as the sweep passes
        }
        // Every leaf ends up with a gradient buffer, reachable or not.
        for (int id : leaves_) grad_buffer(id);
    }

    bool swept() const { return swept_; }
    std::size_t node_count() const { return nodes_.size(); }

    // Bookkeeping for learned parameters: leafing a Parameter records which
    // node carries it so the trainer can pull gradients out by identity.
    void note_param(const void* param, int node) { param_nodes_.emplace_back(param, node); }
    const std::vector<std::pair<const void*, int>>& param_nodes() const { return param_nodes_; }

    const std::vector<double>& grad(const Tensor& t) {
        if (!swept_) throw ContractError("grad: backward() has not run");
        if (!t.on_tape() || t.tape() != this)
            throw ContractError("grad: tensor does not live on this tape");
        return grad_buffer(t.node());
    }

private:
    struct Node {
        Shape shape;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::vector<int> leaves_;
    std::vector<std::pair<const void*, int>> param_nodes_;
    bool swept_ = false;
};

namespace detail {

inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->on_tape()) continue;
        if (tape && tape != t->tape())
            throw ContractError("operands live on different tapes");
        tape = t->tape();
    }
    return tape;
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc_nn(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += G[m x n] * B^T, B stored as [k x n]
inline void gemm_acc_nt(const double* g, const double* b, double* c,
                        std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[k x n] += A^T * G, A stored as [m x k], G as [m x n]
inline void gemm_acc_tn(const double* a, const double* g, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix product and transpose
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw DimensionError("matmul expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    std::size_t m = a.shape()[0], k = a.shape()[1];
    std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    detail::gemm_acc_nn(a.data().data(), b.data().data(), out.data(), m, k, n);

    Tape* tape = detail::common_tape({&a, &b});
    if (!tape) return Tensor(Shape{m, n}, std::move(out));

    int na = a.node(), nb = b.node();
    return tape->emit(
        Shape{m, n}, std::move(out),
        [na, nb, ad = std::make_shared<std::vector<double>>(a.data()),
         bd = std::make_shared<std::vector<double>>(b.data()), m, k, n](Tape& t, const std::vector<double>& g) {
            if (na >= 0) detail::gemm_acc_nt(g.data(), bd->data(), t.grad_buffer(na).data(), m, n, k);
            if (nb >= 0) detail::gemm_acc_tn(ad->data(), g.data(), t.grad_buffer(nb).data(), m, k, n);
        });
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw DimensionError("transpose expects a 2-d tensor");
    std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    Tape* tape = detail::common_tape({&a});
    if (!tape) return Tensor(Shape{n, m}, std::move(out));
    int na = a.node();
    return tape->emit(Shape{n, m}, std::move(out),
                      [na, m, n](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                      });
}

// ---------------------------------------------------------------------------
// Elementwise operations (same shape, or scalar with tensor)
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul };

inline Tensor binary_elementwise(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape())
        throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ (only scalar broadcast is supported)");
    const Shape& shape = b_scalar ? a.shape() : b.shape();
    std::size_t n = shape_size(shape);
    std::vector<double> out(n);
    const auto& av = a.data();
    const auto& bv = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        double x = a_scalar ? av[0] : av[i];
        double y = b_scalar ? bv[0] : bv[i];
        out[i] = op == BinOp::Add ? x + y : op == BinOp::Sub ? x - y : x * y;
    }
    Tape* tape = common_tape({&a, &b});
    if (!tape) return Tensor(shape, std::move(out));
    int na = a.node(), nb = b.node();
    auto ad = std::make_shared<std::vector<double>>(av);
    auto bd = std::make_shared<std::vector<double>>(bv);
    return tape->emit(shape, std::move(out),
                      [na, nb, ad, bd, a_scalar, b_scalar, op, n](Tape& t, const std::vector<double>& g) {
                          if (na >= 0) {
                              auto& ga = t.grad_buffer(na);
                              for (std::size_t i = 0; i < n; ++i) {
                                  double d = op == BinOp::Mul ? g[i] * (b_scalar ? (*bd)[0] : (*bd)[i]) : g[i];
                                  if (a_scalar) ga[0] += d; else ga[i] += d;
                              }
                          }
                          if (nb >= 0) {
                              auto& gb = t.grad_buffer(nb);
                              for (std::size_t i = 0; i < n; ++i) {
                                  double d;
                                  switch (op) {
                                      case BinOp::Add: d = g[i]; break;
                                      case BinOp::Sub: d = -g[i]; break;
                                      default: d = g[i] * (a_scalar ? (*ad)[0] : (*ad)[i]);
                                  }
                                  if (b_scalar) gb[0] += d; else gb[i] += d;
                              }
                          }
                      });
}

// Unary op: dfdx receives (input, output) per element.
template <class F, class DF>
Tensor unary_elementwise(const Tensor& a, F f, DF dfdx) {
    std::size_t n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a.data()[i]);
    Tape* tape = common_tape({&a});
    if (!tape) return Tensor(a.shape(), std::move(out));
    int na = a.node();
    auto ad = std::make_shared<std::vector<double>>(a.data());
    auto od = std::make_shared<std::vector<double>>(out);
    return tape->emit(a.shape(), std::move(out),
                      [na, ad, od, dfdx, n](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx((*ad)[i], (*od)[i]);
                      });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_elementwise(a, b, detail::BinOp::Add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_elementwise(a, b, detail::BinOp::Sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_elementwise(a, b, detail::BinOp::Mul, "mul"); }

inline Tensor scale(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
inline Tensor add_const(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor negate(const Tensor& a) {
    return detail::unary_elementwise(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_elementwise(a, [](double x) { return std::exp(x); },
                                     [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    for (double v : a.data())
        if (v <= 0.0) throw DomainError("log: non-positive input " + std::to_string(v));
    return detail::unary_elementwise(a, [](double x) { return std::log(x); },
                                     [](double x, double) { return 1.0 / x; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_elementwise(a, [](double x) { return std::tanh(x); },
                                     [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_elementwise(
        a,
        [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor softplus(const Tensor& a) {
    return detail::unary_elementwise(
        a,
        [](double x) {
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
        },
        [](double x, double) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

// Clamp with pass-through gradient strictly inside [lo, hi].
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    return detail::unary_elementwise(
        a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_const(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_const(a, -c); }
inline Tensor operator-(const Tensor& a) { return negate(a); }

// ---------------------------------------------------------------------------
// Row softmax
// ---------------------------------------------------------------------------

inline Tensor softmax_rows(const Tensor& a) {
    if (a.ndim() != 2) throw DimensionError("softmax_rows expects a 2-d tensor");
    std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.data().data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            sum += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
    }
    Tape* tape = detail::common_tape({&a});
    if (!tape) return Tensor(a.shape(), std::move(out));
    int na = a.node();
    auto od = std::make_shared<std::vector<double>>(out);
    return tape->emit(a.shape(), std::move(out),
                      [na, od, m, n](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          for (std::size_t i = 0; i < m; ++i) {
                              const double* y = od->data() + i * n;
                              const double* gr = g.data() + i * n;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < n; ++j) dot += gr[j] * y[j];
                              for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[j] * (gr[j] - dot);
                          }
                      });
}

// ---------------------------------------------------------------------------
// Grouped 1-d cross-correlation with zero padding (stride 1, odd kernel)
// ---------------------------------------------------------------------------

inline Tensor conv1d_grouped(const Tensor& z, const Tensor& kernels) {
    if (z.ndim() != 2 || kernels.ndim() != 2)
        throw DimensionError("conv1d_grouped expects 2-d [groups x len] and [groups x k]");
    std::size_t groups = z.shape()[0], len = z.shape()[1];
    std::size_t kg = kernels.shape()[0], ksize = kernels.shape()[1];
    if (groups != kg)
        throw DimensionError("conv1d_grouped: group counts differ (" + std::to_string(groups) + " vs " +
                             std::to_string(kg) + ")");
    if (ksize % 2 == 0) throw ConfigError("conv1d_grouped: kernel size must be odd, got " + std::to_string(ksize));
    if (len < 1) throw DimensionError("conv1d_grouped: empty input");
    std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksize - 1) / 2;

    std::vector<double> out(groups * len, 0.0);
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        const double* zi = z.data().data() + gidx * len;
        const double* ki = kernels.data().data() + gidx * ksize;
        double* oi = out.data() + gidx * len;
        for (std::size_t i = 0; i < len; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < ksize; ++j) {
                std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(j) - pad;
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) acc += ki[j] * zi[src];
            }
            oi[i] = acc;
        }
    }

    Tape* tape = detail::common_tape({&z, &kernels});
    if (!tape) return Tensor(Shape{groups, len}, std::move(out));
    int nz = z.node(), nk = kernels.node();
    auto zd = std::make_shared<std::vector<double>>(z.data());
    auto kd = std::make_shared<std::vector<double>>(kernels.data());
    return tape->emit(
        Shape{groups, len}, std::move(out),
        [nz, nk, zd, kd, groups, len, ksize, pad](Tape& t, const std::vector<double>& g) {
            for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                const double* gi = g.data() + gidx * len;
                if (nz >= 0) {
                    double* gz = t.grad_buffer(nz).data() + gidx * len;
                    const double* ki = kd->data() + gidx * ksize;
                    for (std::size_t tpos = 0; tpos < len; ++tpos) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < ksize; ++j) {
                            std::ptrdiff_t oi = static_cast<std::ptrdiff_t>(tpos) -
                                                static_cast<std::ptrdiff_t>(j) + pad;
                            if (oi >= 0 && oi < static_cast<std::ptrdiff_t>(len)) acc += ki[j] * gi[oi];
                        }
                        gz[tpos] += acc;
                    }
                }
                if (nk >= 0) {
                    double* gk = t.grad_buffer(nk).data() + gidx * ksize;
                    const double* zi = zd->data() + gidx * len;
                    for (std::size_t j = 0; j < ksize; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < len; ++i) {
                            std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) +
                                                 static_cast<std::ptrdiff_t>(j) - pad;
                            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) acc += gi[i] * zi[src];
                        }
                        gk[j] += acc;
                    }
                }
            }
        });
}

// Expand per-group half kernels [groups x (k+1)/2] (center tap first) into
// full palindromic kernels [groups x k].
inline Tensor mirror_palindrome(const Tensor& half, std::size_t ksize) {
    if (half.ndim() != 2) throw DimensionError("mirror_palindrome expects 2-d [groups x half]");
    if (ksize % 2 == 0) throw ConfigError("mirror_palindrome: kernel size must be odd");
    std::size_t groups = half.shape()[0], h = half.shape()[1];
    if (h != (ksize + 1) / 2)
        throw DimensionError("mirror_palindrome: half length " + std::to_string(h) +
                             " does not match kernel size " + std::to_string(ksize));
    std::ptrdiff_t center = static_cast<std::ptrdiff_t>(ksize - 1) / 2;
    std::vector<double> out(groups * ksize);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t j = 0; j < ksize; ++j) {
            std::size_t off = static_cast<std::size_t>(std::abs(static_cast<std::ptrdiff_t>(j) - center));
            out[g * ksize + j] = half.data()[g * h + off];
        }
    Tape* tape = detail::common_tape({&half});
    if (!tape) return Tensor(Shape{groups, ksize}, std::move(out));
    int nh = half.node();
    return tape->emit(Shape{groups, ksize}, std::move(out),
                      [nh, groups, ksize, h, center](Tape& t, const std::vector<double>& g) {
                          if (nh < 0) return;
                          auto& gh = t.grad_buffer(nh);
                          for (std::size_t gi = 0; gi < groups; ++gi)
                              for (std::size_t j = 0; j < ksize; ++j) {
                                  std::size_t off = static_cast<std::size_t>(
                                      std::abs(static_cast<std::ptrdiff_t>(j) - center));
                                  gh[gi * h + off] += g[gi * ksize + j];
                              }
                      });
}

// ---------------------------------------------------------------------------
// Reductions, reshape, tiling, concat, slice
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tape* tape = detail::common_tape({&a});
    if (!tape) return Tensor::scalar(s);
    int na = a.node();
    std::size_t n = a.size();
    return tape->emit(Shape{1}, {s}, [na, n](Tape& t, const std::vector<double>& g) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
}

inline Tensor mean(const Tensor& a) {
    std::size_t n = a.size();
    if (n == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

namespace detail {

inline void check_axis(const Tensor& a, std::size_t axis, const char* name) {
    if (axis >= a.ndim())
        throw DimensionError(std::string(name) + ": axis " + std::to_string(axis) +
                             " out of range for shape " + shape_str(a.shape()));
}

}  // namespace detail

inline Tensor sum(const Tensor& a, std::size_t axis) {
    detail::check_axis(a, axis, "sum");
    const Shape& s = a.shape();
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);

    std::size_t outer = 1, inner = 1, extent = s[axis];
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t in = 0; in < inner; ++in)
                out[o * inner + in] += a.data()[(o * extent + e) * inner + in];

    Tape* tape = detail::common_tape({&a});
    if (!tape) return Tensor(out_shape, std::move(out));
    int na = a.node();
    return tape->emit(out_shape, std::move(out),
                      [na, outer, inner, extent](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t e = 0; e < extent; ++e)
                                  for (std::size_t in = 0; in < inner; ++in)
                                      ga[(o * extent + e) * inner + in] += g[o * inner + in];
                      });
}

inline Tensor mean(const Tensor& a, std::size_t axis) {
    detail::check_axis(a, axis, "mean");
    return scale(sum(a, axis), 1.0 / static_cast<double>(a.shape()[axis]));
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        throw DimensionError("reshape from " + shape_str(a.shape()) + " to " + shape_str(shape) +
                             " changes element count");
    Tape* tape = detail::common_tape({&a});
    std::vector<double> out = a.data();
    if (!tape) return Tensor(std::move(shape), std::move(out));
    int na = a.node();
    std::size_t n = a.size();
    return tape->emit(std::move(shape), std::move(out),
                      [na, n](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                      });
}

// Repeat a length-d vector as m rows of an [m x d] matrix (explicit tiling in
// place of row broadcast; backward sums over rows).
inline Tensor tile_rows(const Tensor& v, std::size_t rows) {
    if (v.ndim() != 1) throw DimensionError("tile_rows expects a 1-d tensor");
    std::size_t d = v.shape()[0];
    std::vector<double> out(rows * d);
    for (std::size_t i = 0; i < rows; ++i)
        std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
    Tape* tape = detail::common_tape({&v});
    if (!tape) return Tensor(Shape{rows, d}, std::move(out));
    int nv = v.node();
    return tape->emit(Shape{rows, d}, std::move(out),
                      [nv, rows, d](Tape& t, const std::vector<double>& g) {
                          if (nv < 0) return;
                          auto& gv = t.grad_buffer(nv);
                          for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < d; ++j) gv[j] += g[i * d + j];
                      });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    if (axis >= first.size())
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range");
    Shape out_shape = first;
    std::size_t total_axis = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < first.size(); ++i)
            if (i != axis && p.shape()[i] != first[i])
                throw DimensionError("concat: shapes differ off-axis: " + shape_str(p.shape()) + " vs " +
                                     shape_str(first));
        total_axis += p.shape()[axis];
    }
    out_shape[axis] = total_axis;

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

    std::vector<double> out(shape_size(out_shape));
    std::size_t axis_off = 0;
    for (const Tensor& p : parts) {
        std::size_t pa = p.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t e = 0; e < pa; ++e)
                std::copy(p.data().begin() + static_cast<std::ptrdiff_t>((o * pa + e) * inner),
                          p.data().begin() + static_cast<std::ptrdiff_t>((o * pa + e + 1) * inner),
                          out.begin() + static_cast<std::ptrdiff_t>((o * total_axis + axis_off + e) * inner));
        axis_off += pa;
    }

    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) ptrs.push_back(&p);
    Tape* tape = nullptr;
    for (const Tensor* p : ptrs)
        if (p->on_tape()) {
            if (tape && tape != p->tape()) throw ContractError("operands live on different tapes");
            tape = p->tape();
        }
    if (!tape) return Tensor(std::move(out_shape), std::move(out));

    struct PartInfo {
        int node;
        std::size_t axis_extent;
        std::size_t axis_off;
    };
    std::vector<PartInfo> infos;
    axis_off = 0;
    for (const Tensor& p : parts) {
        infos.push_back({p.node(), p.shape()[axis], axis_off});
        axis_off += p.shape()[axis];
    }
    return tape->emit(out_shape, std::move(out),
                      [infos, outer, inner, total_axis](Tape& t, const std::vector<double>& g) {
                          for (const auto& info : infos) {
                              if (info.node < 0) continue;
                              auto& gp = t.grad_buffer(info.node);
                              for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t e = 0; e < info.axis_extent; ++e)
                                      for (std::size_t in = 0; in < inner; ++in)
                                          gp[(o * info.axis_extent + e) * inner + in] +=
                                              g[(o * total_axis + info.axis_off + e) * inner + in];
                          }
                      });
}

// Half-open [begin, end) range per dimension.
using SliceRanges = std::vector<std::pair<std::size_t, std::size_t>>;

inline Tensor slice(const Tensor& a, const SliceRanges& ranges) {
    if (ranges.size() != a.ndim())
        throw DimensionError("slice: expected " + std::to_string(a.ndim()) + " ranges, got " +
                             std::to_string(ranges.size()));
    Shape out_shape(ranges.size());
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].first > ranges[i].second || ranges[i].second > a.shape()[i])
            throw DimensionError("slice: range [" + std::to_string(ranges[i].first) + "," +
                                 std::to_string(ranges[i].second) + ") invalid for extent " +
                                 std::to_string(a.shape()[i]));
        out_shape[i] = ranges[i].second - ranges[i].first;
    }

    std::size_t nd = a.ndim();
    std::vector<std::size_t> in_strides(nd, 1);
    for (std::size_t i = nd; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];

    std::size_t out_n = shape_size(out_shape);
    std::vector<double> out(out_n);
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t flat = 0; flat < out_n; ++flat) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < nd; ++d) src += (ranges[d].first + idx[d]) * in_strides[d];
        out[flat] = a.data()[src];
        for (std::size_t d = nd; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }

    Tape* tape = detail::common_tape({&a});
    if (!tape) return Tensor(std::move(out_shape), std::move(out));
    int na = a.node();
    return tape->emit(out_shape, std::move(out),
                      [na, ranges, out_shape, in_strides, out_n, nd](Tape& t, const std::vector<double>& g) {
                          if (na < 0) return;
                          auto& ga = t.grad_buffer(na);
                          std::vector<std::size_t> idx(nd, 0);
                          for (std::size_t flat = 0; flat < out_n; ++flat) {
                              std::size_t src = 0;
                              for (std::size_t d = 0; d < nd; ++d)
                                  src += (ranges[d].first + idx[d]) * in_strides[d];
                              ga[src] += g[flat];
                              for (std::size_t d = nd; d-- > 0;) {
                                  if (++idx[d] < out_shape[d]) break;
                                  idx[d] = 0;
                              }
                          }
                      });
}

// Convenience: contiguous row block [begin, end) of a 2-d tensor.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.ndim() != 2) throw DimensionError("slice_rows expects a 2-d tensor");
    return slice(a, {{begin, end}, {0, a.shape()[1]}});
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.ndim() != 2) throw DimensionError("slice_cols expects a 2-d tensor");
    return slice(a, {{0, a.shape()[0]}, {begin, end}});
}

// ---------------------------------------------------------------------------
// Learned parameter: master value plus accumulated gradient, re-leafed onto a
// fresh tape each forward pass.
// ---------------------------------------------------------------------------

struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, Shape s, std::vector<double> v)
        : name(std::move(n)), shape(std::move(s)), value(std::move(v)), grad(value.size(), 0.0) {
        if (value.size() != shape_size(shape))
            throw DimensionError("parameter " + name + ": data does not match shape");
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    Tensor leaf(Tape& tape) const {
        Tensor t = tape.leaf(shape, value);
        tape.note_param(this, t.node());
        return t;
    }

    void accumulate_grad(Tape& tape, const Tensor& leaf_tensor, double weight = 1.0) {
        const auto& g = tape.grad(leaf_tensor);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight * g[i];
    }
};

}  // namespace lgvf
