#pragma once

#include <cstddef>
#include <vector>

#include "sampsd/rng.hpp"

namespace sampsd {

// Dense row-major matrix of doubles. Small: feature dims in this project are
// <= 128, sample counts a few thousand.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    static Matrix identity(std::size_t n);

    bool all_finite() const;
};

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;              // orthonormal columns, column i pairs with eigenvalues[i]
};

struct PcaResult {
    Matrix components;                // d x d', orthonormal columns
    std::vector<double> eigenvalues;  // all d covariance eigenvalues, descending
    std::vector<double> mean;         // column means of the input
    bool degenerate = false;          // set when the input had (near-)zero variance
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// y = A * x
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

// Column means of X (n x d).
std::vector<double> column_means(const Matrix& x);

// Sample covariance (n-1 denominator) of the rows of X.
Matrix sample_covariance(const Matrix& x);

// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
// Throws value_error if A has non-finite entries or is asymmetric beyond 1e-9.
EigenDecomposition sym_eig(const Matrix& a);

// V diag(1/sqrt(max(lambda_i, floor))) V^T for a symmetric PSD matrix.
Matrix inv_sqrt(const Matrix& a, double floor);

// Top-k right singular directions of a column-centered X (n x d) by power
// iteration with deflation: fixed 200 iterations or relative change < 1e-10.
// Start vectors come from `rng`; sign fixed so the first nonzero component of
// each direction is positive. Throws dimension_error if k > min(n, d).
Matrix top_singular_directions(const Matrix& x, std::size_t k, Rng rng);

// Leading principal components of X: the smallest dimension whose eigenvalues
// reach variance_target (fraction of total), clamped to max_dim, at least 1.
PcaResult pca_fit(const Matrix& x, double variance_target, std::size_t max_dim);

}  // namespace sampsd
