// Small dense linear algebra for the statistics pipeline: sample covariance,
// the matching metric (inverse covariance with identity fallback), Mahalanobis
// distances, and column-pivoted QR least squares.
//
// Matrices here are tiny (covariate dimension d and design widths of at most
// a dozen columns), so everything is plain row-major double storage with
// textbook algorithms; the value added is the pinned singularity thresholds.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "matchinf/core.hpp"
#include "matchinf/errors.hpp"

namespace matchinf {

// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, 0.0) {}

    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    std::span<const double> row(int i) const { return {a_.data() + static_cast<std::size_t>(i) * cols_, static_cast<std::size_t>(cols_)}; }

    bool symmetric(double rel_tol = 1e-12) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

// Distance metric for matching: the inverse sample covariance, or the identity
// when the covariance is numerically singular.
struct Metric {
    Matrix inverse_matrix;             // d x d, symmetric PSD
    bool used_identity_fallback = false;

    int dim() const { return inverse_matrix.rows(); }
};

// Unbiased pooled sample covariance over ALL n units, divisor n-1.
// Requires n >= 2.
Matrix sample_covariance(const Dataset& dataset);

// Invert a symmetric PSD matrix via LDLT. If the smallest pivot falls below
// 1e-10 x the largest diagonal entry (or the matrix is not PSD), fall back to
// the identity and set the flag. Asymmetric input is a contract error.
Metric build_metric(const Matrix& cov);

// sqrt{(a-b)^T M (a-b)}; `mahalanobis_squared` skips the square root (same
// argmin, cheaper for nearest-neighbor scans).
double mahalanobis_distance(std::span<const double> a, std::span<const double> b, const Metric& m);
double mahalanobis_squared(std::span<const double> a, std::span<const double> b, const Metric& m);

// Weighted least squares min ||sqrt(W)(y - X beta)|| via column-pivoted
// Householder QR. Throws SingularDesign when a pivot falls below 1e-10 x the
// largest pivot. Outputs the coefficients and, optionally, (X^T W X)^{-1}
// (the "bread" of sandwich variances).
struct LeastSquares {
    std::vector<double> coef;
    Matrix xtwx_inverse;
};
LeastSquares solve_least_squares(const Matrix& x, std::span<const double> y, std::span<const double> w,
                                 bool want_xtwx_inverse);

// Jacobi eigenvalues of a small symmetric matrix (diagnostics / tests).
std::vector<double> symmetric_eigenvalues(Matrix a);

}  // namespace matchinf
