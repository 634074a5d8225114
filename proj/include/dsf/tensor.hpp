#pragma once

// Define-by-run reverse-mode differentiation over dense double arrays.
//
// A Graph is a tape: every operation appends a node whose inputs all have
// smaller ids, so the tape order is a topological order and backward() is a
// single reverse sweep. Tensors are lightweight handles (graph, node id).
// Model parameters live outside the graph in Parameter objects; a graph binds
// them as leaves and backward() accumulates into Parameter::grad.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsf/rng.hpp"

namespace dsf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Plain dense row-major array with no graph attachment.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    Array(Shape s, std::vector<double> values);
    explicit Array(Shape s, double fill = 0.0);

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const;  // shape[0]; requires rank 2
    std::size_t cols() const;  // shape[1]; requires rank 2
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    // Rows [begin, end) of a rank >= 1 array, flattened to rank 2.
    Array row_slice(std::size_t begin, std::size_t end) const;

    bool operator==(const Array&) const = default;
};

struct Parameter {
    std::string name;
    Array value;
    Array grad;

    Parameter() = default;
    Parameter(std::string n, Array v);
    void zero_grad();
};

enum class OpKind {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    mul,
    negate,
    scale,
    add_constant,
    log,
    exp,
    tanh,
    sigmoid,
    relu,
    clamp,
    sum,
    mean,
    add_bias,
    concat_cols,
    pairwise_sq_dist,
    softmax_xent,
    custom,
};

const char* op_name(OpKind kind);

class Graph;

class Tensor {
public:
    Tensor() = default;
    Tensor(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    const Shape& shape() const;
    const Array& value() const;
    const std::vector<double>& values() const { return value().data; }
    // Empty until a backward pass reaches this node.
    const std::vector<double>& grad() const;
    bool requires_grad() const;
    std::size_t numel() const { return values().size(); }
    // Value of a single-element tensor.
    double item() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    // Receives the graph and the id of the node whose grad is populated;
    // accumulates into the grads of that node's inputs.
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    struct Node {
        OpKind kind = OpKind::leaf;
        Array value;
        std::vector<double> grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Parameter* param = nullptr;
    };

    explicit Graph(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor constant(Array value);
    Tensor leaf(Array value, bool requires_grad = true);
    Tensor param(Parameter& p);

    // Reverse sweep from a scalar loss. Interior grads are recomputed on each
    // call; leaf grads and bound Parameter grads accumulate.
    void backward(const Tensor& loss);

    // Records a node. Used by the op implementations and by modules that add
    // their own differentiable primitives.
    Tensor record(OpKind kind, Array value, std::vector<std::size_t> inputs, BackwardFn fn);

    Node& node(std::size_t id) { return nodes_[id]; }
    const Node& node(std::size_t id) const { return nodes_[id]; }
    // Grad buffer of a node, allocated (zeroed) on first use.
    std::vector<double>& grad_of(std::size_t id);
    std::size_t size() const { return nodes_.size(); }

    std::uint64_t seed() const { return seed_; }
    Rng& rng() { return rng_; }

private:
    std::deque<Node> nodes_;  // push_back keeps references to earlier nodes valid
    std::uint64_t seed_;
    Rng rng_;
};

// ---- operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Binary elementwise ops accept equal shapes, or a single-element operand
// broadcast against the other. Nothing else broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor negate(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_constant(const Tensor& a, double c);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// Gradient passes where lo <= a <= hi, zero outside.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

// x[N×k] + b[k] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& b);
// [N×a] ++ [N×b] -> [N×(a+b)]
Tensor concat_cols(const Tensor& a, const Tensor& b);
// [N×d] -> [N×N] with entries ||u_i - u_j||^2.
Tensor pairwise_sq_dist(const Tensor& u);
// Mean over rows of -log softmax(logits)[label]; logits [N×C].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- gradient checking ---------------------------------------------------

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_error = 0.0;
        std::size_t worst_index = 0;
        double analytic = 0.0;
        double numeric = 0.0;
    };
    std::vector<Entry> entries;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = true;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
// true gradient is zero from dividing finite-difference roundoff by nothing.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares analytic gradients of build() against central differences for
// every entry of every parameter. build must be deterministic: it receives a
// fresh Graph each call. Parameter grads are overwritten.
GradCheckReport grad_check(const std::function<Tensor(Graph&)>& build,
                           std::span<Parameter* const> params, double step, double tol);

}  // namespace dsf
