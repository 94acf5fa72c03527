#include "dmae/dependence.hpp"

#include "dmae/errors.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace dmae {

namespace {

void check_triple(const Matrix& K, const Matrix& L, const Matrix& Pi, const char* who) {
  if (K.rows() != K.cols() || L.rows() != L.cols() || Pi.rows() != K.rows() ||
      Pi.cols() != L.rows()) {
    throw ShapeError(std::string(who) + ": need K n x n, L m x m, Pi n x m");
  }
}

// Gradient of sum_ij W_ij k(z_i, z_j) for a Gaussian Gram K with width sigma2:
// dK_ij / dz_i = -K_ij (z_i - z_j) / sigma2.
Matrix gram_chain(const Matrix& W, const Matrix& K, const Matrix& Z, double sigma2) {
  const Matrix S = (W + W.transpose()).cwiseProduct(K);
  const Vector s = S.rowwise().sum();
  Matrix G = S * Z;
  G -= s.asDiagonal() * Z;
  return G / sigma2;
}

}  // namespace

std::string_view to_string(Measure m) { return m == Measure::ukta ? "ukta" : "smi"; }

Measure measure_from_string(std::string_view s) {
  if (s == "ukta" || s == "uKTA") return Measure::ukta;
  if (s == "smi" || s == "SMI") return Measure::smi;
  throw ParameterError("unknown dependence measure '" + std::string(s) + "'");
}

void DependenceConfig::validate() const {
  if (!(sigma2_x > 0.0) || !std::isfinite(sigma2_x)) throw ParameterError("sigma2_x must be positive");
  if (!(sigma2_y > 0.0) || !std::isfinite(sigma2_y)) throw ParameterError("sigma2_y must be positive");
  if (!(lambda_ridge >= 0.0) || !std::isfinite(lambda_ridge)) {
    throw ParameterError("lambda_ridge must be nonnegative");
  }
}

std::uint64_t fingerprint(const Matrix& K, const Matrix& L, const Matrix& Pi) {
  // FNV-1a over shapes and raw bytes.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Matrix* m : {&K, &L, &Pi}) {
    const Eigen::Index dims[2] = {m->rows(), m->cols()};
    mix(dims, sizeof(dims));
    mix(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  return h;
}

double ukta(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi) {
  return trace_perm(K.values, L.values, Pi);
}

DensityRatioModel fit_smi(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi,
                          double lambda_ridge) {
  check_triple(K.values, L.values, Pi, "fit_smi");
  const auto n = static_cast<double>(K.size());
  const Matrix Lp = permuted_gram(L.values, Pi);
  const Matrix H = (K.values * K.values.transpose()).cwiseProduct(Lp * Lp.transpose()) / (n * n);
  const Vector h = K.values.cwiseProduct(Lp).rowwise().sum() / n;
  DensityRatioModel model;
  model.alpha = ridge_solve(H, h, lambda_ridge);
  model.lambda_ridge = lambda_ridge;
  model.fitted_against = fingerprint(K.values, L.values, Pi);
  return model;
}

double smi_with_alpha(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha) {
  check_triple(K, L, Pi, "smi");
  if (alpha.size() != K.rows()) throw ShapeError("smi: alpha length must equal n");
  const auto n = static_cast<double>(K.rows());
  const Matrix Lp = permuted_gram(L, Pi);
  // [K L']_ll = sum_j K_lj L'_jl
  const Vector diag = K.cwiseProduct(Lp.transpose()).rowwise().sum();
  return alpha.dot(diag) / (2.0 * n) - 0.5;
}

double smi(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi,
           const DensityRatioModel& model) {
  if (model.fitted_against != fingerprint(K.values, L.values, Pi)) {
    throw ContractError("smi: density-ratio model was fitted against different (K, L, Pi)");
  }
  return smi_with_alpha(K.values, L.values, Pi, model.alpha);
}

double dependence_value(const DependenceConfig& cfg, const Matrix& Zx, const Matrix& Zy,
                        const Matrix& Pi, const Vector* alpha) {
  const GramMatrix K = gram_gaussian(Zx, cfg.sigma2_x);
  const GramMatrix L = gram_gaussian(Zy, cfg.sigma2_y);
  if (cfg.measure == Measure::ukta) return ukta(K, L, Pi);
  if (alpha == nullptr) throw ContractError("dependence_value: SMI needs alpha");
  return smi_with_alpha(K.values, L.values, Pi, *alpha);
}

LatentGradients dep_grad_latent(const DependenceConfig& cfg, const Matrix& Zx, const Matrix& Zy,
                                const Matrix& Pi, const Vector* alpha) {
  const GramMatrix K = gram_gaussian(Zx, cfg.sigma2_x);
  const GramMatrix L = gram_gaussian(Zy, cfg.sigma2_y);
  check_triple(K.values, L.values, Pi, "dep_grad_latent");
  const auto n = static_cast<double>(K.size());

  // D = sum_ij Wx_ij K_ij with L' = Pi L Pi^T held fixed, and
  // D = sum_kl Wy_kl L_kl with A = (weighted) K held fixed.
  Matrix A = K.values;
  if (cfg.measure == Measure::smi) {
    if (alpha == nullptr) throw ContractError("dep_grad_latent: SMI needs alpha");
    if (alpha->size() != K.size()) throw ShapeError("dep_grad_latent: alpha length must equal n");
    A = alpha->asDiagonal() * K.values / (2.0 * n);
  }
  const Matrix Lp = permuted_gram(L.values, Pi);
  // tr(A L') = sum_ij A_ij L'_ji; for uKTA A = K so Wx = L'^T; for SMI the
  // weight on K_ij is alpha_i L'_ji / 2n.
  Matrix Wx = Lp.transpose();
  if (cfg.measure == Measure::smi) {
    Wx = alpha->asDiagonal() * Lp.transpose() / (2.0 * n);
  }
  // tr(A Pi L Pi^T) = sum_kl (Pi^T A Pi)_lk L_kl
  const Matrix Wy = (Pi.transpose() * A * Pi).transpose();

  LatentGradients g;
  g.dx = gram_chain(Wx, K.values, Zx, cfg.sigma2_x);
  g.dy = gram_chain(Wy, L.values, Zy, cfg.sigma2_y);
  return g;
}

}  // namespace dmae
