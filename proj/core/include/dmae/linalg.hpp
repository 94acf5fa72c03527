#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace dmae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Gaussian Gram matrix over the rows of a sample matrix.
struct GramMatrix {
  Matrix values;
  double sigma2 = 1.0;

  [[nodiscard]] Eigen::Index size() const { return values.rows(); }
};

// Throws DataError if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

// Squared Euclidean distances between all pairs of rows, via
// |a|^2 + |b|^2 - 2 a.b with negative round-off clamped to 0 and an exactly
// zero, symmetric result on the diagonal.
Matrix pairwise_sq_dists(const Matrix& Z);

// K_ij = exp(-|z_i - z_j|^2 / (2 sigma2)).
GramMatrix gram_gaussian(const Matrix& Z, double sigma2);

// Solves (H + lambda I) x = h with a Cholesky factorization. When lambda == 0
// the diagonal receives a jitter of 1e-10 * tr(H) / n first.
Vector ridge_solve(const Matrix& H, const Vector& h, double lambda_ridge);

// tr(K Pi L Pi^T) for K (n x n), L (m x m) and Pi (n x m).
double trace_perm(const Matrix& K, const Matrix& L, const Matrix& Pi);
inline double trace_perm(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi) {
  return trace_perm(K.values, L.values, Pi);
}

// Pi L Pi^T, the y-view Gram matrix re-indexed onto x-samples.
Matrix permuted_gram(const Matrix& L, const Matrix& Pi);

// Median of the off-diagonal pairwise squared distances divided by 2, so that
// the median pair sits at exp(-1) under gram_gaussian.
double median_sigma2(const Matrix& Z);

}  // namespace dmae
