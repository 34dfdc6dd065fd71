#include "hope/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "hope/errors.hpp"

namespace hope {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    require(rows >= 0 && cols >= 0, "matrix: negative dimensions");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            "matrix: data length does not match " + std::to_string(rows) + "x" + std::to_string(cols));
}

bool Matrix::is_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

void Matrix::round_to_f32() {
    for (double& x : data_) x = static_cast<double>(static_cast<float>(x));
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::filled(int rows, int cols, double v) {
    Matrix m(rows, cols);
    m.fill(v);
    return m;
}

Matrix Matrix::gaussian(int rows, int cols, Rng& rng, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.gauss();
    return m;
}

Matrix Matrix::row(int r) const {
    Matrix out(1, cols_);
    for (int j = 0; j < cols_; ++j) out(0, j) = (*this)(r, j);
    return out;
}

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.values() == b.values();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: " + shape_str(a) + " x " + shape_str(b));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    for (int i = 0; i < m; ++i) {
        double* ci = c.data() + static_cast<std::size_t>(i) * n;
        const double* ai = a.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add: " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "sub: " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "hadamard: " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    return c;
}

Matrix scaled(const Matrix& a, double c) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
    return out;
}

Matrix transposed(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    require(m.rows() > 0 && m.cols() > 0, "softmax_rows: empty matrix");
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        double denom = 0.0;
        for (int j = 0; j < m.cols(); ++j) {
            const double e = std::exp(m(i, j) - mx);
            out(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < m.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

Matrix logsumexp_rows(const Matrix& m) {
    require(m.rows() > 0 && m.cols() > 0, "logsumexp_rows: empty matrix");
    Matrix out(m.rows(), 1);
    for (int i = 0; i < m.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        double s = 0.0;
        for (int j = 0; j < m.cols(); ++j) s += std::exp(m(i, j) - mx);
        out(i, 0) = mx + std::log(s);
    }
    return out;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "concat_rows: " + shape_str(a) + " vs " + shape_str(b));
    Matrix out(a.rows() + b.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    }
    for (int i = 0; i < b.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) out(a.rows() + i, j) = b(i, j);
    }
    return out;
}

Matrix slice_rows(const Matrix& m, int first, int count) {
    require(first >= 0 && count >= 0 && first + count <= m.rows(),
            "slice_rows: range [" + std::to_string(first) + ", " + std::to_string(first + count) + ") of " +
                std::to_string(m.rows()) + " rows");
    Matrix out(count, m.cols());
    for (int i = 0; i < count; ++i) {
        for (int j = 0; j < m.cols(); ++j) out(i, j) = m(first + i, j);
    }
    return out;
}

double sum_all(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i];
    return s;
}

double dot(const Matrix& a, const Matrix& b) {
    require(a.size() == b.size(), "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

double l2_norm(const Matrix& a) {
    return std::sqrt(dot(a, a));
}

Matrix l2_normalize_rows(const Matrix& m, double eps) {
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
        const double inv = 1.0 / std::sqrt(s + eps);
        for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * inv;
    }
    return out;
}

}  // namespace hope
