#pragma once

#include "dmae/linalg.hpp"

#include <cstdint>
#include <string_view>

namespace dmae {

enum class Measure { ukta, smi };

std::string_view to_string(Measure m);
Measure measure_from_string(std::string_view s);

struct DependenceConfig {
  Measure measure = Measure::smi;
  double sigma2_x = 2.5;
  double sigma2_y = 0.5;
  double lambda_ridge = 0.1;

  void validate() const;
};

// Identity of a (K, L, Pi) triple, used to detect stale density-ratio fits.
std::uint64_t fingerprint(const Matrix& K, const Matrix& L, const Matrix& Pi);

// Coefficients of r(x, y) = sum_l alpha_l K(x_l, x) L'(y_l, y) fitted by
// least squares against the permuted Gram L' = Pi L Pi^T.
struct DensityRatioModel {
  Vector alpha;
  double lambda_ridge = 0.0;
  std::uint64_t fitted_against = 0;
};

// tr(K Pi L Pi^T).
double ukta(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi);

// H = (K K^T) o (L' L'^T) / n^2,  h = (K o L') 1 / n,  alpha = (H + lambda I)^-1 h.
DensityRatioModel fit_smi(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi,
                          double lambda_ridge);

// (1/2n) tr(diag(alpha) K Pi L Pi^T) - 1/2. Throws ContractError when model was
// fitted against a different (K, L, Pi).
double smi(const GramMatrix& K, const GramMatrix& L, const Matrix& Pi,
           const DensityRatioModel& model);

// The same estimator for an arbitrary alpha, with no staleness check.
double smi_with_alpha(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha);

// D evaluated on latent codes: Grams are rebuilt from Zx, Zy. alpha is
// required for SMI and ignored for uKTA.
double dependence_value(const DependenceConfig& cfg, const Matrix& Zx, const Matrix& Zy,
                        const Matrix& Pi, const Vector* alpha);

struct LatentGradients {
  Matrix dx;  // dD / dZx
  Matrix dy;  // dD / dZy
};

// Exact gradient of dependence_value with respect to every latent row, alpha
// held fixed.
LatentGradients dep_grad_latent(const DependenceConfig& cfg, const Matrix& Zx, const Matrix& Zy,
                                const Matrix& Pi, const Vector* alpha);

}  // namespace dmae
