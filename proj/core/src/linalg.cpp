#include "dmae/linalg.hpp"

#include "dmae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace dmae {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw DataError(std::string(what) + ": non-finite entry");
  }
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw DataError(std::string(what) + ": non-finite entry");
  }
}

Matrix pairwise_sq_dists(const Matrix& Z) {
  const Eigen::Index n = Z.rows();
  const Vector sq = Z.rowwise().squaredNorm();
  const Matrix inner = Z * Z.transpose();
  Matrix D(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = std::max(0.0, sq(i) + sq(j) - 2.0 * inner(i, j));
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

GramMatrix gram_gaussian(const Matrix& Z, double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw ParameterError("gram_gaussian: sigma2 must be positive and finite");
  }
  if (Z.rows() < 1 || Z.cols() < 1) {
    throw ShapeError("gram_gaussian: empty sample matrix");
  }
  require_finite(Z, "gram_gaussian");
  const Matrix D = pairwise_sq_dists(Z);
  const double scale = -1.0 / (2.0 * sigma2);
  GramMatrix K;
  K.sigma2 = sigma2;
  K.values.resize(D.rows(), D.cols());
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    K.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < D.cols(); ++j) {
      const double k = std::exp(scale * D(i, j));
      K.values(i, j) = k;
      K.values(j, i) = k;
    }
  }
  return K;
}

Vector ridge_solve(const Matrix& H, const Vector& h, double lambda_ridge) {
  const Eigen::Index n = H.rows();
  if (H.cols() != n || h.size() != n) {
    throw ShapeError("ridge_solve: H must be n x n and h of length n");
  }
  if (!(lambda_ridge >= 0.0) || !std::isfinite(lambda_ridge)) {
    throw ParameterError("ridge_solve: lambda_ridge must be nonnegative");
  }
  require_finite(H, "ridge_solve H");
  require_finite(h, "ridge_solve h");

  Eigen::MatrixXd A = H;
  double shift = lambda_ridge;
  if (lambda_ridge == 0.0) {
    shift = 1e-10 * H.trace() / static_cast<double>(n);
  }
  A.diagonal().array() += shift;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  const bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                  (ldlt.vectorD().array() > 0.0).all();
  if (!pd || !(rcond > 1e-15)) {
    std::ostringstream msg;
    msg << "ridge_solve: singular system (n=" << n << ", shift=" << shift
        << ", reciprocal condition estimate=" << rcond << ")";
    throw NumericalError(msg.str());
  }
  Vector x = ldlt.solve(h);
  if (!x.allFinite()) {
    throw NumericalError("ridge_solve: non-finite solution");
  }
  return x;
}

double trace_perm(const Matrix& K, const Matrix& L, const Matrix& Pi) {
  if (K.rows() != K.cols() || L.rows() != L.cols() || Pi.rows() != K.rows() ||
      Pi.cols() != L.rows()) {
    std::ostringstream msg;
    msg << "trace_perm: incompatible shapes K " << K.rows() << "x" << K.cols() << ", L "
        << L.rows() << "x" << L.cols() << ", Pi " << Pi.rows() << "x" << Pi.cols();
    throw ShapeError(msg.str());
  }
  // tr(K Pi L Pi^T) = sum_ij (K Pi)_ij (Pi L^T)_ij
  const Matrix A = K * Pi;
  const Matrix B = Pi * L.transpose();
  return A.cwiseProduct(B).sum();
}

Matrix permuted_gram(const Matrix& L, const Matrix& Pi) {
  if (L.rows() != L.cols() || Pi.cols() != L.rows()) {
    throw ShapeError("permuted_gram: Pi must have as many columns as L has rows");
  }
  return Pi * L * Pi.transpose();
}

double median_sigma2(const Matrix& Z) {
  if (Z.rows() < 2) {
    throw ShapeError("median_sigma2: need at least two samples");
  }
  const Matrix D = pairwise_sq_dists(Z);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(Z.rows() * (Z.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < D.cols(); ++j) d.push_back(D(i, j));
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double med = *mid;
  if (!(med > 0.0)) {
    throw DataError("median_sigma2: all samples coincide");
  }
  return med / 2.0;
}

}  // namespace dmae
