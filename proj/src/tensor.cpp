#include "dsf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dsf/errors.hpp"

namespace dsf {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Array& a) {
    return ConstMatMap(a.data.data(), static_cast<Eigen::Index>(a.shape[0]),
                       static_cast<Eigen::Index>(a.shape[1]));
}

MatMap as_matrix(std::vector<double>& buf, std::size_t rows, std::size_t cols) {
    return MatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                             shape_str(t.shape()));
    }
}

void require_same_graph(const Tensor& a, const Tensor& b) {
    if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

bool inputs_require_grad(const Graph& g, const std::vector<std::size_t>& ids) {
    return std::any_of(ids.begin(), ids.end(),
                       [&](std::size_t i) { return g.node(i).requires_grad; });
}

// Shared implementation of unary elementwise ops. deriv(x, y) returns dy/dx.
template <typename Fwd, typename Deriv>
Tensor unary(OpKind kind, const Tensor& a, Fwd fwd, Deriv deriv) {
    const Array& x = a.value();
    Array out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = fwd(x.data[i]);
    const std::size_t in = a.id();
    return a.graph().record(kind, std::move(out), {in}, [in, deriv](Graph& g, std::size_t self) {
        const auto& xs = g.node(in).value.data;
        const auto& ys = g.node(self).value.data;
        const auto& gy = g.node(self).grad;
        auto& gx = g.grad_of(in);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xs[i], ys[i]);
    });
}

enum class Binary { add, sub, mul };

Tensor binary(Binary op, OpKind kind, const Tensor& a, const Tensor& b) {
    require_same_graph(a, b);
    const Array& x = a.value();
    const Array& y = b.value();
    const bool a_scalar = x.size() == 1 && y.size() != 1;
    const bool b_scalar = y.size() == 1 && x.size() != 1;
    if (!a_scalar && !b_scalar && x.shape != y.shape) {
        throw DimensionError(std::string(op_name(kind)) + ": shape mismatch " +
                             shape_str(x.shape) + " vs " + shape_str(y.shape));
    }
    const Shape& shape = a_scalar ? y.shape : x.shape;
    const std::size_t n = numel(shape);
    Array out(shape);
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x.data[a_scalar ? 0 : i];
        const double yi = y.data[b_scalar ? 0 : i];
        switch (op) {
            case Binary::add: out.data[i] = xi + yi; break;
            case Binary::sub: out.data[i] = xi - yi; break;
            case Binary::mul: out.data[i] = xi * yi; break;
        }
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record(
        kind, std::move(out), {ia, ib},
        [op, ia, ib, a_scalar, b_scalar](Graph& g, std::size_t self) {
            const auto& gy = g.node(self).grad;
            const bool need_a = g.node(ia).requires_grad;
            const bool need_b = g.node(ib).requires_grad;
            const auto& xv = g.node(ia).value.data;
            const auto& yv = g.node(ib).value.data;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                const std::size_t ja = a_scalar ? 0 : i;
                const std::size_t jb = b_scalar ? 0 : i;
                double da = 0.0;
                double db = 0.0;
                switch (op) {
                    case Binary::add: da = gy[i]; db = gy[i]; break;
                    case Binary::sub: da = gy[i]; db = -gy[i]; break;
                    case Binary::mul: da = gy[i] * yv[jb]; db = gy[i] * xv[ja]; break;
                }
                if (need_a) g.grad_of(ia)[ja] += da;
                if (need_b) g.grad_of(ib)[jb] += db;
            }
        });
}

}  // namespace

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
        throw DimensionError("array of shape " + shape_str(shape) + " given " +
                             std::to_string(data.size()) + " values");
    }
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

std::size_t Array::rows() const {
    if (shape.size() != 2) throw DimensionError("rows() on array of shape " + shape_str(shape));
    return shape[0];
}

std::size_t Array::cols() const {
    if (shape.size() != 2) throw DimensionError("cols() on array of shape " + shape_str(shape));
    return shape[1];
}

Array Array::row_slice(std::size_t begin, std::size_t end) const {
    if (shape.empty() || begin > end || end > shape[0]) {
        throw DimensionError("row_slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") of " + shape_str(shape));
    }
    const std::size_t stride = shape[0] ? data.size() / shape[0] : 0;
    Array out(Shape{end - begin, stride});
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * stride),
              data.begin() + static_cast<std::ptrdiff_t>(end * stride), out.data.begin());
    return out;
}

Parameter::Parameter(std::string n, Array v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

void Parameter::zero_grad() {
    grad.shape = value.shape;
    grad.data.assign(value.size(), 0.0);
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::negate: return "negate";
        case OpKind::scale: return "scale";
        case OpKind::add_constant: return "add_constant";
        case OpKind::log: return "log";
        case OpKind::exp: return "exp";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::relu: return "relu";
        case OpKind::clamp: return "clamp";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::add_bias: return "add_bias";
        case OpKind::concat_cols: return "concat_cols";
        case OpKind::pairwise_sq_dist: return "pairwise_sq_dist";
        case OpKind::softmax_xent: return "softmax_cross_entropy";
        case OpKind::custom: return "custom";
    }
    return "unknown";
}

// ---- Tensor ---------------------------------------------------------------

const Shape& Tensor::shape() const { return graph_->node(id_).value.shape; }
const Array& Tensor::value() const { return graph_->node(id_).value; }
const std::vector<double>& Tensor::grad() const { return graph_->node(id_).grad; }
bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

double Tensor::item() const {
    const auto& v = values();
    if (v.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return v[0];
}

// ---- Graph ----------------------------------------------------------------

Tensor Graph::constant(Array value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::leaf(Array value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::record(OpKind kind, Array value, std::vector<std::size_t> inputs, BackwardFn fn) {
    for (std::size_t in : inputs) {
        if (in >= nodes_.size()) throw ContractError("node input refers to a future node");
    }
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.requires_grad = inputs_require_grad(*this, inputs);
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

std::vector<double>& Graph::grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

void Graph::backward(const Tensor& loss) {
    if (&loss.graph() != this) throw ContractError("backward: loss belongs to another graph");
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    const std::size_t root = loss.id();
    // Interior and parameter-bound grads restart at zero; plain leaves keep
    // whatever earlier passes accumulated.
    for (std::size_t i = 0; i <= root; ++i) {
        Node& n = nodes_[i];
        const bool plain_leaf = n.kind == OpKind::leaf && n.param == nullptr;
        if (!plain_leaf && !n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
    if (!nodes_[root].requires_grad) return;
    grad_of(root)[0] += 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
        n.backward(*this, i);
    }
    for (std::size_t i = 0; i <= root; ++i) {
        Node& n = nodes_[i];
        if (n.param == nullptr || n.grad.empty()) continue;
        Parameter& p = *n.param;
        if (p.grad.size() != p.value.size()) p.zero_grad();
        for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad.data[k] += n.grad[k];
    }
}

// ---- matrix ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_same_graph(a, b);
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa[1] != sb[0]) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(sa) + " x " +
                             shape_str(sb));
    }
    Array out(Shape{sa[0], sb[1]});
    as_matrix(out.data, sa[0], sb[1]).noalias() = as_matrix(a.value()) * as_matrix(b.value());
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record(OpKind::matmul, std::move(out), {ia, ib},
                            [ia, ib](Graph& g, std::size_t self) {
        const Array& av = g.node(ia).value;
        const Array& bv = g.node(ib).value;
        const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        auto& gy = g.node(self).grad;
        ConstMatMap dc(gy.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (g.node(ia).requires_grad) {
            as_matrix(g.grad_of(ia), m, k).noalias() += dc * as_matrix(bv).transpose();
        }
        if (g.node(ib).requires_grad) {
            as_matrix(g.grad_of(ib), k, n).noalias() += as_matrix(av).transpose() * dc;
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Array out(Shape{n, m});
    as_matrix(out.data, n, m) = as_matrix(a.value()).transpose();
    const std::size_t ia = a.id();
    return a.graph().record(OpKind::transpose, std::move(out), {ia},
                            [ia, m, n](Graph& g, std::size_t self) {
        ConstMatMap dy(g.node(self).grad.data(), static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(m));
        as_matrix(g.grad_of(ia), m, n) += dy.transpose();
    });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::add, OpKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::sub, OpKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::mul, OpKind::mul, a, b); }

Tensor negate(const Tensor& a) {
    return unary(OpKind::negate, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
    return unary(OpKind::scale, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_constant(const Tensor& a, double c) {
    return unary(OpKind::add_constant, a, [c](double x) { return x + c; },
                 [](double, double) { return 1.0; });
}

Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(v) +
                              "; clamp the operand first");
        }
    }
    return unary(OpKind::log, a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary(OpKind::exp, a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
    return unary(OpKind::tanh, a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(OpKind::sigmoid, a,
                 [](double x) {
                     if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return unary(OpKind::clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- reductions -----------------------------------------------------------

namespace {

Tensor reduce_all(OpKind kind, const Tensor& a) {
    const auto& x = a.values();
    double s = 0.0;
    for (double v : x) s += v;
    const double factor = kind == OpKind::mean ? 1.0 / static_cast<double>(x.size()) : 1.0;
    const std::size_t ia = a.id();
    return a.graph().record(kind, Array::scalar(s * factor), {ia},
                            [ia, factor](Graph& g, std::size_t self) {
        const double gy = g.node(self).grad[0] * factor;
        for (double& v : g.grad_of(ia)) v += gy;
    });
}

Tensor reduce_axis(OpKind kind, const Tensor& a, std::size_t axis) {
    const Shape& shape = a.shape();
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op_name(kind)) + ": axis " + std::to_string(axis) +
                             " invalid for shape " + shape_str(shape));
    }
    // View the array as [outer, extent, inner] and reduce the middle index.
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t extent = shape[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) out_shape.push_back(shape[i]);
    }
    const double factor = kind == OpKind::mean ? 1.0 / static_cast<double>(extent) : 1.0;
    Array out(out_shape);
    const auto& x = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < extent; ++e) {
            for (std::size_t i = 0; i < inner; ++i) {
                out.data[o * inner + i] += x[(o * extent + e) * inner + i];
            }
        }
    }
    for (double& v : out.data) v *= factor;
    const std::size_t ia = a.id();
    return a.graph().record(kind, std::move(out), {ia},
                            [ia, outer, extent, inner, factor](Graph& g, std::size_t self) {
        const auto& gy = g.node(self).grad;
        auto& gx = g.grad_of(ia);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t e = 0; e < extent; ++e) {
                for (std::size_t i = 0; i < inner; ++i) {
                    gx[(o * extent + e) * inner + i] += gy[o * inner + i] * factor;
                }
            }
        }
    });
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_all(OpKind::sum, a); }
Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(OpKind::sum, a, axis); }
Tensor mean(const Tensor& a) { return reduce_all(OpKind::mean, a); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(OpKind::mean, a, axis); }

// ---- structural -----------------------------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_same_graph(x, b);
    require_rank2(x, "add_bias");
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    if (b.numel() != k) {
        throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                             shape_str(x.shape()));
    }
    Array out = x.value();
    const auto& bv = b.values();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < k; ++c) out.data[r * k + c] += bv[c];
    }
    const std::size_t ix = x.id(), ib = b.id();
    return x.graph().record(OpKind::add_bias, std::move(out), {ix, ib},
                            [ix, ib, n, k](Graph& g, std::size_t self) {
        const auto& gy = g.node(self).grad;
        if (g.node(ix).requires_grad) {
            auto& gx = g.grad_of(ix);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        }
        if (g.node(ib).requires_grad) {
            auto& gb = g.grad_of(ib);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < k; ++c) gb[c] += gy[r * k + c];
            }
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_same_graph(a, b);
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    const std::size_t n = a.shape()[0];
    if (b.shape()[0] != n) {
        throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const std::size_t ca = a.shape()[1], cb = b.shape()[1];
    Array out(Shape{n, ca + cb});
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(r * ca), ca,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb)));
        std::copy_n(b.values().begin() + static_cast<std::ptrdiff_t>(r * cb), cb,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb) + ca));
    }
    const std::size_t ia = a.id(), ib = b.id();
    return a.graph().record(OpKind::concat_cols, std::move(out), {ia, ib},
                            [ia, ib, n, ca, cb](Graph& g, std::size_t self) {
        const auto& gy = g.node(self).grad;
        if (g.node(ia).requires_grad) {
            auto& ga = g.grad_of(ia);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += gy[r * (ca + cb) + c];
            }
        }
        if (g.node(ib).requires_grad) {
            auto& gb = g.grad_of(ib);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += gy[r * (ca + cb) + ca + c];
            }
        }
    });
}

Tensor pairwise_sq_dist(const Tensor& u) {
    require_rank2(u, "pairwise_sq_dist");
    const std::size_t n = u.shape()[0], d = u.shape()[1];
    const auto& x = u.values();
    Array out(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x[i * d + k] - x[j * d + k];
                s += diff * diff;
            }
            out.data[i * n + j] = s;
            out.data[j * n + i] = s;
        }
    }
    const std::size_t iu = u.id();
    return u.graph().record(OpKind::pairwise_sq_dist, std::move(out), {iu},
                            [iu, n, d](Graph& g, std::size_t self) {
        const auto& gy = g.node(self).grad;
        const auto& xv = g.node(iu).value.data;
        auto& gx = g.grad_of(iu);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = 2.0 * (gy[i * n + j] + gy[j * n + i]);
                if (w == 0.0) continue;
                for (std::size_t k = 0; k < d; ++k) {
                    gx[i * d + k] += w * (xv[i * d + k] - xv[j * d + k]);
                }
            }
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank2(logits, "softmax_cross_entropy");
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (labels.size() != n) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                             " labels for logits " + shape_str(logits.shape()));
    }
    if (c < 2) throw ContractError("softmax_cross_entropy: need at least 2 classes");
    const auto& z = logits.values();
    Array probs(Shape{n, c});
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw DataError("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(c) + ")");
        }
        const double* row = z.data() + r * c;
        const double mx = *std::max_element(row, row + c);
        double se = 0.0;
        for (std::size_t k = 0; k < c; ++k) se += std::exp(row[k] - mx);
        const double lse = mx + std::log(se);
        for (std::size_t k = 0; k < c; ++k) probs.data[r * c + k] = std::exp(row[k] - lse);
        total += lse - row[y];
    }
    std::vector<int> ys(labels.begin(), labels.end());
    const std::size_t il = logits.id();
    return logits.graph().record(
        OpKind::softmax_xent, Array::scalar(total / static_cast<double>(n)), {il},
        [il, n, c, ys = std::move(ys), probs = std::move(probs)](Graph& g, std::size_t self) {
            const double gy = g.node(self).grad[0] / static_cast<double>(n);
            auto& gx = g.grad_of(il);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t k = 0; k < c; ++k) {
                    const double target = static_cast<std::size_t>(ys[r]) == k ? 1.0 : 0.0;
                    gx[r * c + k] += gy * (probs.data[r * c + k] - target);
                }
            }
        });
}

// ---- gradient checking ----------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor(Graph&)>& build,
                           std::span<Parameter* const> params, double step, double tol) {
    if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
    for (Parameter* p : params) p->zero_grad();
    {
        Graph g;
        Tensor loss = build(g);
        g.backward(loss);
    }
    auto evaluate = [&] {
        Graph g;
        return build(g).item();
    };

    GradCheckReport report;
    report.tolerance = tol;
    for (Parameter* p : params) {
        GradCheckReport::Entry entry;
        entry.name = p->name;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + step;
            const double up = evaluate();
            p->value.data[i] = saved - step;
            const double down = evaluate();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = p->grad.data[i];
            const double err = relative_error(analytic, numeric);
            if (i == 0 || err > entry.max_rel_error) {
                entry.max_rel_error = err;
                entry.worst_index = i;
                entry.analytic = analytic;
                entry.numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace dsf
