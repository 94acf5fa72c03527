#include "dmae/selfcheck.hpp"

#include "dmae/autoencoder.hpp"
#include "dmae/dependence.hpp"
#include "dmae/linalg.hpp"
#include "dmae/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dmae {

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = ud(rng);
  return v;
}

Matrix perm_matrix(const std::vector<std::size_t>& p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, static_cast<Eigen::Index>(p[static_cast<std::size_t>(i)])) = 1.0;
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

BackwardFn faulty_backward() {
  return [](const AutoencoderParams& p, const Matrix& X, const Matrix& G, double w) {
    GradientBundle g = backward(p, X, G, w);
    g.encoder.front().weights(0, 0) *= 1.5;
    return g;
  };
}

CheckResult check_autoencoder(const SelfCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  ArchitectureOptions arch;
  arch.input_dim = 5;
  arch.latent_dim = 3;
  arch.depth = 3;
  const AutoencoderParams params = make_autoencoder(arch, opts.seed);
  const Matrix X = random_matrix(rng, 7, 5);
  const Matrix G = random_matrix(rng, 7, 3, 0.3);
  const double err = grad_check(params, X, G, 1.0, 1e-6, opts.inject_gradient_fault ? faulty_backward() : backward);
  return {"autoencoder_gradient", err < 1e-6, "max rel err " + fmt(err)};
}

double dep_fd_error(const DependenceConfig& cfg, const Matrix& Zx, const Matrix& Zy, const Matrix& Pi,
                    const Vector* alpha) {
  const LatentGradients g = dep_grad_latent(cfg, Zx, Zy, Pi, alpha);
  const double eps = 1e-6;
  double worst = 0.0;
  auto probe = [&](bool x_side) {
    Matrix Z = x_side ? Zx : Zy;
    const Matrix& analytic = x_side ? g.dx : g.dy;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        const double orig = Z(i, j);
        Z(i, j) = orig + eps;
        const double fp = x_side ? dependence_value(cfg, Z, Zy, Pi, alpha) : dependence_value(cfg, Zx, Z, Pi, alpha);
        Z(i, j) = orig - eps;
        const double fm = x_side ? dependence_value(cfg, Z, Zy, Pi, alpha) : dependence_value(cfg, Zx, Z, Pi, alpha);
        Z(i, j) = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic(i, j);
        worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric)));
      }
    }
  };
  probe(true);
  probe(false);
  return worst;
}

CheckResult check_dependence(const SelfCheckOptions& opts, Measure measure) {
  std::mt19937_64 rng(opts.seed + 11);
  const Eigen::Index n = 6;
  const Matrix Zx = random_matrix(rng, n, 3);
  const Matrix Zy = random_matrix(rng, n, 2);
  Matrix Pi = random_matrix(rng, n, n).cwiseAbs();
  Pi /= static_cast<double>(n);
  DependenceConfig cfg;
  cfg.measure = measure;
  cfg.sigma2_x = 1.5;
  cfg.sigma2_y = 0.8;
  const Vector alpha = random_vector(rng, n, 0.2, 1.5);
  const double err = dep_fd_error(cfg, Zx, Zy, Pi, &alpha);
  return {std::string("dependence_gradient_") + std::string(to_string(measure)), err < 1e-5,
          "max rel err " + fmt(err)};
}

CheckResult check_lemma(const SelfCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed + 23);
  const std::size_t n = 4;
  int mismatches = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix K = gram_gaussian(random_matrix(rng, n, 2), 1.0).values;
    const Matrix L = gram_gaussian(random_matrix(rng, n, 2), 1.0).values;
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::vector<double> tr, fro;
    do {
      const Matrix P = perm_matrix(p);
      tr.push_back(trace_perm(K, L, P));
      fro.push_back(kta_surrogate(K, L, P, 0.0));
    } while (std::next_permutation(p.begin(), p.end()));
    const double tmax = *std::max_element(tr.begin(), tr.end());
    const double fmin = *std::min_element(fro.begin(), fro.end());
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const bool in_max = tr[k] >= tmax - 1e-9 * std::max(1.0, std::abs(tmax));
      const bool in_min = fro[k] <= fmin + 1e-9 * std::max(1.0, std::abs(fmin));
      if (in_max != in_min) ++mismatches;
    }
  }
  return {"trace_frobenius_argmax_n4", mismatches == 0, std::to_string(mismatches) + " mismatches"};
}

CheckResult check_rounding(const SelfCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed + 31);
  const std::size_t n = 5;
  int failures = 0;
  for (int trial = 0; trial < 10; ++trial) {
    RelaxedPermutation pi{random_matrix(rng, n, n).cwiseAbs(), PairingMode::one_one};
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    double best = -1e300;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += pi.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p[i]));
      best = std::max(best, s);
    } while (std::next_permutation(p.begin(), p.end()));
    const HardAssignment h = round_permutation(pi);
    double got = 0.0;
    for (std::size_t i = 0; i < n; ++i) got += pi.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h.assignment[i]));
    if (!h.valid(n) || std::abs(got - best) > 1e-12) ++failures;
  }
  return {"hungarian_vs_enumeration_n5", failures == 0, std::to_string(failures) + " failures"};
}

CheckResult check_reduction(const SelfCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed + 41);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 3 + trial;
    const GramMatrix K = gram_gaussian(random_matrix(rng, n, 2), 2.5);
    const GramMatrix L = gram_gaussian(random_matrix(rng, n, 3), 0.5);
    const Matrix Pi = random_matrix(rng, n, n).cwiseAbs();
    const double s = smi_with_alpha(K.values, L.values, Pi, Vector::Ones(n));
    const double u = ukta(K, L, Pi) / (2.0 * static_cast<double>(n)) - 0.5;
    worst = std::max(worst, std::abs(s - u));
  }
  return {"smi_ukta_reduction", worst < 1e-10, "max abs diff " + fmt(worst)};
}

}  // namespace

std::vector<CheckResult> run_selfchecks(const SelfCheckOptions& opts) {
  std::vector<CheckResult> out;
  auto guarded = [&out](const char* name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("autoencoder_gradient", [&] { return check_autoencoder(opts); });
  guarded("dependence_gradient_ukta", [&] { return check_dependence(opts, Measure::ukta); });
  guarded("dependence_gradient_smi", [&] { return check_dependence(opts, Measure::smi); });
  guarded("trace_frobenius_argmax_n4", [&] { return check_lemma(opts); });
  guarded("hungarian_vs_enumeration_n5", [&] { return check_rounding(opts); });
  guarded("smi_ukta_reduction", [&] { return check_reduction(opts); });
  return out;
}

}  // namespace dmae
