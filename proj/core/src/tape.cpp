#include "hope/tape.hpp"

#include <cmath>
#include <string>

#include "hope/errors.hpp"

namespace hope {

namespace {

constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_value(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double th = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
    if (precision_ == Precision::f32 && n.op != Op::leaf) n.value.round_to_f32();
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Matrix value, bool trainable) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.requires_grad = trainable;
    return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::matmul;
    n.a = a;
    n.b = b;
    n.value = hope::matmul(value(a), value(b));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::add;
    n.a = a;
    n.b = b;
    n.value = hope::add(value(a), value(b));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::mul;
    n.a = a;
    n.b = b;
    n.value = hadamard(value(a), value(b));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Node n;
    n.op = Op::scale;
    n.a = a;
    n.attr = c;
    n.value = scaled(value(a), c);
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::transpose(NodeId a) {
    Node n;
    n.op = Op::transpose;
    n.a = a;
    n.value = transposed(value(a));
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
    Node n;
    n.op = Op::softmax_rows;
    n.a = a;
    n.value = hope::softmax_rows(value(a));
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::logsumexp_rows(NodeId a) {
    Node n;
    n.op = Op::logsumexp_rows;
    n.a = a;
    n.value = hope::logsumexp_rows(value(a));
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::concat_rows(NodeId a, NodeId b) {
    Node n;
    n.op = Op::concat_rows;
    n.a = a;
    n.b = b;
    n.value = hope::concat_rows(value(a), value(b));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Tape::NodeId Tape::slice_rows(NodeId a, int first, int count) {
    Node n;
    n.op = Op::slice_rows;
    n.a = a;
    n.first = first;
    n.value = hope::slice_rows(value(a), first, count);
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::reshape(NodeId a, int rows, int cols) {
    const Matrix& v = value(a);
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != v.size()) {
        throw DimensionError("reshape: " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " to " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    Node n;
    n.op = Op::reshape;
    n.a = a;
    n.value = Matrix(rows, cols, v.values());
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::sum_all(NodeId a) {
    Node n;
    n.op = Op::sum_all;
    n.a = a;
    n.value = Matrix(1, 1, {hope::sum_all(value(a))});
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::unary_op(NodeId a, Unary kind, double attr) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        switch (kind) {
            case Unary::exp: out.data()[i] = std::exp(v); break;
            case Unary::log: out.data()[i] = std::log(v + attr); break;
            case Unary::square: out.data()[i] = v * v; break;
            case Unary::gelu: out.data()[i] = gelu_value(v); break;
            case Unary::rsqrt: out.data()[i] = 1.0 / std::sqrt(v + attr); break;
            case Unary::clamp_max: out.data()[i] = v < attr ? v : attr; break;
        }
    }
    Node n;
    n.op = Op::unary;
    n.unary = kind;
    n.a = a;
    n.attr = attr;
    n.value = std::move(out);
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Tape::NodeId Tape::exp(NodeId a) { return unary_op(a, Unary::exp, 0.0); }
Tape::NodeId Tape::log(NodeId a, double eps) { return unary_op(a, Unary::log, eps); }
Tape::NodeId Tape::square(NodeId a) { return unary_op(a, Unary::square, 0.0); }
Tape::NodeId Tape::gelu(NodeId a) { return unary_op(a, Unary::gelu, 0.0); }
Tape::NodeId Tape::rsqrt(NodeId a, double eps) { return unary_op(a, Unary::rsqrt, eps); }
Tape::NodeId Tape::clamp_max(NodeId a, double cap) { return unary_op(a, Unary::clamp_max, cap); }

Matrix& Tape::adjoint_of(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adjoint.size() == 0) n.adjoint = Matrix(n.value.rows(), n.value.cols());
    return n.adjoint;
}

void Tape::accumulate(NodeId id, const Matrix& g) {
    if (!requires_grad(id)) return;
    Matrix& adj = adjoint_of(id);
    for (std::size_t i = 0; i < adj.size(); ++i) adj.data()[i] += g.data()[i];
}

void Tape::backward(NodeId loss) {
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward: loss must be a scalar, got " + std::to_string(lv.rows()) + "x" +
                            std::to_string(lv.cols()));
    }
    for (Node& n : nodes_) n.adjoint = Matrix();
    if (!requires_grad(loss)) return;  // loss reaches no trainable leaf
    adjoint_of(loss)(0, 0) = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.adjoint.size() == 0 || n.op == Op::leaf) continue;
        backprop_node(n);
    }
}

void Tape::backprop_node(const Node& n) {
    const Matrix& g = n.adjoint;
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            if (requires_grad(n.a)) accumulate(n.a, hope::matmul(g, transposed(value(n.b))));
            if (requires_grad(n.b)) accumulate(n.b, hope::matmul(transposed(value(n.a)), g));
            break;
        }
        case Op::add: {
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        }
        case Op::mul: {
            if (requires_grad(n.a)) accumulate(n.a, hadamard(g, value(n.b)));
            if (requires_grad(n.b)) accumulate(n.b, hadamard(g, value(n.a)));
            break;
        }
        case Op::scale: {
            accumulate(n.a, scaled(g, n.attr));
            break;
        }
        case Op::transpose: {
            accumulate(n.a, transposed(g));
            break;
        }
        case Op::softmax_rows: {
            // dx = y * (g - sum_j(g_j y_j)) per row.
            const Matrix& y = n.value;
            Matrix dx(y.rows(), y.cols());
            for (int i = 0; i < y.rows(); ++i) {
                double s = 0.0;
                for (int j = 0; j < y.cols(); ++j) s += g(i, j) * y(i, j);
                for (int j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - s);
            }
            accumulate(n.a, dx);
            break;
        }
        case Op::logsumexp_rows: {
            // dx_ij = g_i * exp(x_ij - lse_i)
            const Matrix& x = value(n.a);
            const Matrix& l = n.value;
            Matrix dx(x.rows(), x.cols());
            for (int i = 0; i < x.rows(); ++i) {
                for (int j = 0; j < x.cols(); ++j) dx(i, j) = g(i, 0) * std::exp(x(i, j) - l(i, 0));
            }
            accumulate(n.a, dx);
            break;
        }
        case Op::concat_rows: {
            const int ra = value(n.a).rows();
            if (requires_grad(n.a)) accumulate(n.a, hope::slice_rows(g, 0, ra));
            if (requires_grad(n.b)) accumulate(n.b, hope::slice_rows(g, ra, value(n.b).rows()));
            break;
        }
        case Op::slice_rows: {
            const Matrix& x = value(n.a);
            Matrix dx(x.rows(), x.cols());
            for (int i = 0; i < g.rows(); ++i) {
                for (int j = 0; j < g.cols(); ++j) dx(n.first + i, j) = g(i, j);
            }
            accumulate(n.a, dx);
            break;
        }
        case Op::reshape: {
            const Matrix& x = value(n.a);
            accumulate(n.a, Matrix(x.rows(), x.cols(), g.values()));
            break;
        }
        case Op::sum_all: {
            const Matrix& x = value(n.a);
            accumulate(n.a, Matrix::filled(x.rows(), x.cols(), g(0, 0)));
            break;
        }
        case Op::unary: {
            const Matrix& x = value(n.a);
            Matrix dx(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double v = x.data()[i];
                double d = 0.0;
                switch (n.unary) {
                    case Unary::exp: d = n.value.data()[i]; break;
                    case Unary::log: d = 1.0 / (v + n.attr); break;
                    case Unary::square: d = 2.0 * v; break;
                    case Unary::gelu: d = gelu_grad(v); break;
                    case Unary::rsqrt: {
                        const double r = n.value.data()[i];
                        d = -0.5 * r * r * r;
                        break;
                    }
                    case Unary::clamp_max: d = v < n.attr ? 1.0 : 0.0; break;
                }
                dx.data()[i] = g.data()[i] * d;
            }
            accumulate(n.a, dx);
            break;
        }
    }
}

Matrix Tape::gradient(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adjoint.size() == 0) return Matrix(n.value.rows(), n.value.cols());
    return n.adjoint;
}

Tape::NodeId l2_normalize_rows(Tape& t, Tape::NodeId x, double eps) {
    const int cols = t.value(x).cols();
    const Tape::NodeId sq = t.square(x);
    const Tape::NodeId norms = t.matmul(sq, t.constant(Matrix::filled(cols, 1, 1.0)));
    const Tape::NodeId inv = t.rsqrt(norms, eps);
    const Tape::NodeId invb = t.matmul(inv, t.constant(Matrix::filled(1, cols, 1.0)));
    return t.mul(x, invb);
}

Tape::NodeId layer_norm_rows(Tape& t, Tape::NodeId x, Tape::NodeId gain, Tape::NodeId bias, double eps) {
    const int rows = t.value(x).rows();
    const int cols = t.value(x).cols();
    const Tape::NodeId mean = t.scale(t.matmul(x, t.constant(Matrix::filled(cols, 1, 1.0))), 1.0 / cols);
    const Tape::NodeId centered = t.add(x, t.scale(t.matmul(mean, t.constant(Matrix::filled(1, cols, 1.0))), -1.0));
    const Tape::NodeId var = t.scale(t.matmul(t.square(centered), t.constant(Matrix::filled(cols, 1, 1.0))), 1.0 / cols);
    const Tape::NodeId inv = t.rsqrt(var, eps);
    const Tape::NodeId invb = t.matmul(inv, t.constant(Matrix::filled(1, cols, 1.0)));
    const Tape::NodeId standardized = t.mul(centered, invb);
    const Tape::NodeId scaled = t.mul(standardized, broadcast_rows(t, gain, rows));
    return t.add(scaled, broadcast_rows(t, bias, rows));
}

Tape::NodeId broadcast_rows(Tape& t, Tape::NodeId row, int n) {
    return t.matmul(t.constant(Matrix::filled(n, 1, 1.0)), row);
}

Tape::NodeId broadcast_scalar(Tape& t, Tape::NodeId s, int rows, int cols) {
    const Tape::NodeId r = t.matmul(s, t.constant(Matrix::filled(1, cols, 1.0)));
    return t.matmul(t.constant(Matrix::filled(rows, 1, 1.0)), r);
}

Tape::NodeId mean_of_rows(Tape& t, Tape::NodeId x) {
    const int rows = t.value(x).rows();
    return t.scale(t.matmul(t.constant(Matrix::filled(1, rows, 1.0)), x), 1.0 / rows);
}

Tape::NodeId cross_entropy_mean(Tape& t, Tape::NodeId logits, const std::vector<int>& labels) {
    const Matrix& v = t.value(logits);
    if (static_cast<int>(labels.size()) != v.rows()) {
        throw ContractError("cross_entropy_mean: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(v.rows()) + " rows");
    }
    Matrix onehot(v.rows(), v.cols());
    for (int i = 0; i < v.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= v.cols()) {
            throw ContractError("cross_entropy_mean: label out of range at row " + std::to_string(i));
        }
        onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;
    }
    const Tape::NodeId lse = t.sum_all(t.logsumexp_rows(logits));
    const Tape::NodeId picked = t.sum_all(t.mul(logits, t.constant(std::move(onehot))));
    const Tape::NodeId nll = t.add(lse, t.scale(picked, -1.0));
    return t.scale(nll, 1.0 / v.rows());
}

}  // namespace hope
