#pragma once

#include <vector>

#include "hope/rng.hpp"

namespace hope {

// Dense row-major matrix of doubles. The single value carrier for features,
// memories, prototypes, routing weights and gradients. All kernels below use
// a fixed summation order so repeated runs are bit-identical.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);
    Matrix(int rows, int cols, std::vector<double> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool is_finite() const;

    void fill(double v);
    // Quantizes every entry through IEEE single precision (32-bit training mode).
    void round_to_f32();

    static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }
    static Matrix identity(int n);
    static Matrix filled(int rows, int cols, double v);
    static Matrix gaussian(int rows, int cols, Rng& rng, double stddev = 1.0);
    // Single row view copies.
    Matrix row(int r) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

bool operator==(const Matrix& a, const Matrix& b);

// c = a * b. Fixed i-k-j loop order: the k-sum for every output entry runs in
// ascending k, which keeps reductions deterministic.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double c);
Matrix transposed(const Matrix& a);

// Row-wise softmax with max-subtraction; rows sum to 1 within 1e-12 at f64.
Matrix softmax_rows(const Matrix& m);
// Row-wise log(sum(exp(.))) as an m x 1 column, max-subtracted.
Matrix logsumexp_rows(const Matrix& m);

Matrix concat_rows(const Matrix& a, const Matrix& b);
Matrix slice_rows(const Matrix& m, int first, int count);
double sum_all(const Matrix& m);

double dot(const Matrix& a, const Matrix& b);      // flattened
double l2_norm(const Matrix& a);
Matrix l2_normalize_rows(const Matrix& m, double eps = 1e-12);

}  // namespace hope
