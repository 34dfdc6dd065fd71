#pragma once

#include <cstdint>
#include <vector>

#include "hope/matrix.hpp"

namespace hope {

enum class Precision : std::uint8_t { f64, f32 };

// Reverse-mode gradient engine over the fixed primitive set this pipeline
// needs. Nodes are appended in topological order (every input id is smaller
// than its consumer), so the backward sweep is a single reverse pass that
// touches each node exactly once. Adjoint buffers exist only for nodes on a
// path from a trainable leaf to the loss.
class Tape {
public:
    using NodeId = int;

    explicit Tape(Precision precision = Precision::f64) : precision_(precision) {}

    NodeId leaf(Matrix value, bool trainable = false);
    NodeId constant(Matrix value) { return leaf(std::move(value), false); }
    NodeId scalar(double v) { return constant(Matrix(1, 1, {v})); }

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId scale(NodeId a, double c);
    NodeId transpose(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId logsumexp_rows(NodeId a);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId slice_rows(NodeId a, int first, int count);
    NodeId reshape(NodeId a, int rows, int cols);
    NodeId sum_all(NodeId a);

    // Elementwise nonlinearities.
    NodeId exp(NodeId a);
    NodeId log(NodeId a, double eps = 0.0);  // log(x + eps)
    NodeId square(NodeId a);
    NodeId gelu(NodeId a);                   // tanh approximation, smooth
    NodeId rsqrt(NodeId a, double eps);      // (x + eps)^(-1/2)
    NodeId clamp_max(NodeId a, double cap);  // min(x, cap)

    const Matrix& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Seeds the scalar loss with adjoint 1 and sweeps the tape in reverse.
    // Throws ContractError if the loss node is not 1x1.
    void backward(NodeId loss);

    // Adjoint of a node after backward(). Zero matrix for nodes the loss does
    // not reach (including non-trainable leaves).
    Matrix gradient(NodeId id) const;

    std::size_t node_count() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    enum class Op : std::uint8_t {
        leaf,
        matmul,
        add,
        mul,
        scale,
        transpose,
        softmax_rows,
        logsumexp_rows,
        concat_rows,
        slice_rows,
        reshape,
        sum_all,
        unary,
    };
    enum class Unary : std::uint8_t { exp, log, square, gelu, rsqrt, clamp_max };

    struct Node {
        Op op = Op::leaf;
        Unary unary = Unary::exp;
        NodeId a = -1;
        NodeId b = -1;
        double attr = 0.0;  // scale factor or epsilon
        int first = 0;      // slice start
        Matrix value;
        Matrix adjoint;     // empty until backward touches the node
        bool requires_grad = false;
    };

    NodeId push(Node n);
    NodeId unary_op(NodeId a, Unary kind, double attr);
    Matrix& adjoint_of(NodeId id);
    void accumulate(NodeId id, const Matrix& g);
    void backprop_node(const Node& n);

    std::vector<Node> nodes_;
    Precision precision_;
};

// Composite helpers built from primitives.

// Row-wise L2 normalization: y_i = x_i / sqrt(|x_i|^2 + eps).
Tape::NodeId l2_normalize_rows(Tape& t, Tape::NodeId x, double eps = 1e-12);

// Pre-norm transformer normalization: per row standardize, then gain/bias
// (gain and bias are 1 x D nodes, broadcast over rows).
Tape::NodeId layer_norm_rows(Tape& t, Tape::NodeId x, Tape::NodeId gain, Tape::NodeId bias, double eps = 1e-5);

// Broadcast a 1 x D row to n rows / a 1 x 1 scalar node to r x c.
Tape::NodeId broadcast_rows(Tape& t, Tape::NodeId row, int n);
Tape::NodeId broadcast_scalar(Tape& t, Tape::NodeId s, int rows, int cols);

// Mean of all rows as a single row.
Tape::NodeId mean_of_rows(Tape& t, Tape::NodeId x);

// Mean negative log-likelihood of logits (n x C) against integer labels:
// mean_i [ logsumexp(logits_i) - logits_i[label_i] ].
Tape::NodeId cross_entropy_mean(Tape& t, Tape::NodeId logits, const std::vector<int>& labels);

}  // namespace hope
