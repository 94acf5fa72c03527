#include "dmae/matching.hpp"

#include "dmae/autoencoder.hpp"
#include "dmae/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

namespace dmae {

std::string_view to_string(PairingMode m) {
  return m == PairingMode::one_one ? "one_one" : "many_one";
}

PairingMode pairing_from_string(std::string_view s) {
  if (s == "one_one") return PairingMode::one_one;
  if (s == "many_one") return PairingMode::many_one;
  throw ParameterError("unknown pairing mode '" + std::string(s) + "'");
}

bool HardAssignment::valid(std::size_t columns) const {
  std::vector<bool> seen(columns, false);
  for (std::size_t c : assignment) {
    if (c >= columns) return false;
    if (mode == PairingMode::one_one) {
      if (seen[c]) return false;
      seen[c] = true;
    }
  }
  return mode != PairingMode::one_one || assignment.size() == columns;
}

Matrix HardAssignment::to_matrix(std::size_t columns) const {
  Matrix P = Matrix::Zero(static_cast<Eigen::Index>(assignment.size()),
                          static_cast<Eigen::Index>(columns));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= columns) throw ShapeError("HardAssignment: column out of range");
    P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assignment[i])) = 1.0;
  }
  return P;
}

void PiSolverConfig::validate() const {
  if (!(lambda_pi >= 0.0) || !std::isfinite(lambda_pi)) throw ParameterError("lambda_pi must be nonnegative");
  if (max_iters < 0) throw ParameterError("pi solver max_iters must be nonnegative");
  if (!(step_init > 0.0)) throw ParameterError("pi solver step_init must be positive");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
    throw ParameterError("pi solver backtrack_factor must lie in (0, 1)");
  }
  if (!(sufficient_decrease > 0.0 && sufficient_decrease < 1.0)) {
    throw ParameterError("pi solver sufficient_decrease must lie in (0, 1)");
  }
  if (!(tol > 0.0)) throw ParameterError("pi solver tol must be positive");
}

double assignment_penalty(const Matrix& Pi, PairingMode mode) {
  double p = (Pi.rowwise().sum().array() - 1.0).square().sum();
  if (mode == PairingMode::one_one) p += (Pi.colwise().sum().array() - 1.0).square().sum();
  return p;
}

Matrix assignment_penalty_grad(const Matrix& Pi, PairingMode mode) {
  const Vector r = 2.0 * (Pi.rowwise().sum().array() - 1.0).matrix();
  Matrix G = r.replicate(1, Pi.cols());
  if (mode == PairingMode::one_one) {
    const Eigen::RowVectorXd c = 2.0 * (Pi.colwise().sum().array() - 1.0).matrix();
    G.rowwise() += c;
  }
  return G;
}

namespace {

void check_square_pair(const Matrix& K, const Matrix& L, const Matrix& Pi, const char* who) {
  if (K.rows() != K.cols() || L.rows() != L.cols() || Pi.rows() != K.rows() ||
      Pi.cols() != L.rows()) {
    throw ShapeError(std::string(who) + ": need K n x n, L m x m, Pi n x m");
  }
}

// Projected gradient descent on f over Pi >= 0 with Armijo backtracking.
PiStepResult projected_descent(const std::function<double(const Matrix&)>& f,
                               const std::function<Matrix(const Matrix&)>& grad,
                               const RelaxedPermutation& start, const PiSolverConfig& cfg,
                               double trace_sign) {
  cfg.validate();
  PiStepResult result;
  Matrix P = start.values.cwiseMax(0.0);
  double fP = f(P);
  if (!std::isfinite(fP)) throw NumericalError("pi step: non-finite objective at start");
  result.trace.push_back(trace_sign * fP);
  if (cfg.observer) cfg.observer(P);

  double step = cfg.step_init;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Matrix g = grad(P);
    if (!g.allFinite()) throw NumericalError("pi step: non-finite gradient");
    bool accepted = false;
    Matrix next;
    double f_next = fP;
    while (step > 1e-20) {
      next = (P - step * g).cwiseMax(0.0);
      f_next = f(next);
      if (!std::isfinite(f_next)) throw NumericalError("pi step: non-finite objective");
      const double decrease = g.cwiseProduct(next - P).sum();
      if (f_next <= fP + cfg.sufficient_decrease * decrease && f_next <= fP) {
        accepted = true;
        break;
      }
      step *= cfg.backtrack_factor;
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
    const double rel = std::abs(fP - f_next) / std::max(1.0, std::abs(fP));
    P = std::move(next);
    fP = f_next;
    result.trace.push_back(trace_sign * fP);
    if (cfg.observer) cfg.observer(P);
    result.iterations = it + 1;
    if (rel < cfg.tol) {
      result.converged = true;
      break;
    }
    step /= cfg.backtrack_factor;
  }

  result.pi.values = std::move(P);
  result.pi.mode = start.mode;
  result.penalty = assignment_penalty(result.pi.values, start.mode);
  const double mass = result.pi.values.sum();
  if (mass < 0.1 * static_cast<double>(result.pi.values.rows())) {
    result.degenerate = true;
    spdlog::warn("pi step collapsed toward Pi = 0 (total mass {:.3g}); lambda_pi = {} is too small",
                 mass, cfg.lambda_pi);
  }
  return result;
}

}  // namespace

double kta_surrogate(const Matrix& K, const Matrix& L, const Matrix& Pi, double lambda_pi) {
  check_square_pair(K, L, Pi, "kta_surrogate");
  const Matrix R = K * Pi - Pi * L;
  return R.squaredNorm() + lambda_pi * assignment_penalty(Pi, PairingMode::one_one);
}

Matrix kta_surrogate_grad(const Matrix& K, const Matrix& L, const Matrix& Pi, double lambda_pi) {
  check_square_pair(K, L, Pi, "kta_surrogate_grad");
  const Matrix R = K * Pi - Pi * L;
  return 2.0 * (K.transpose() * R - R * L.transpose()) +
         lambda_pi * assignment_penalty_grad(Pi, PairingMode::one_one);
}

double smi_objective(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha,
                     double lambda_pi, PairingMode mode) {
  check_square_pair(K, L, Pi, "smi_objective");
  if (alpha.size() != K.rows()) throw ShapeError("smi_objective: alpha length must equal n");
  const auto n = static_cast<double>(K.rows());
  const Matrix A = alpha.asDiagonal() * K;
  const double tr = trace_perm(A, L, Pi);
  return tr / (2.0 * n) - 0.5 - lambda_pi * assignment_penalty(Pi, mode);
}

Matrix smi_objective_grad(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha,
                          double lambda_pi, PairingMode mode) {
  check_square_pair(K, L, Pi, "smi_objective_grad");
  if (alpha.size() != K.rows()) throw ShapeError("smi_objective_grad: alpha length must equal n");
  const auto n = static_cast<double>(K.rows());
  const Matrix A = alpha.asDiagonal() * K;
  // d tr(A Pi L Pi^T) / d Pi = A^T Pi L^T + A Pi L
  const Matrix g = (A.transpose() * Pi * L.transpose() + A * Pi * L) / (2.0 * n);
  return g - lambda_pi * assignment_penalty_grad(Pi, mode);
}

PiStepResult pi_step_kta(const GramMatrix& K, const GramMatrix& L, const RelaxedPermutation& Pi,
                         const PiSolverConfig& cfg) {
  if (Pi.mode != PairingMode::one_one || K.size() != L.size()) {
    throw ShapeError("pi_step_kta: the Frobenius surrogate needs square one_one Pi");
  }
  check_square_pair(K.values, L.values, Pi.values, "pi_step_kta");
  const Matrix& Kv = K.values;
  const Matrix& Lv = L.values;
  const double lam = cfg.lambda_pi;
  return projected_descent([&](const Matrix& P) { return kta_surrogate(Kv, Lv, P, lam); },
                           [&](const Matrix& P) { return kta_surrogate_grad(Kv, Lv, P, lam); },
                           Pi, cfg, 1.0);
}

PiStepResult pi_step_smi(const GramMatrix& K, const GramMatrix& L, const RelaxedPermutation& Pi,
                         const Vector& alpha, const PiSolverConfig& cfg) {
  check_square_pair(K.values, L.values, Pi.values, "pi_step_smi");
  if (!alpha.allFinite()) throw NumericalError("pi_step_smi: non-finite alpha");
  const Matrix& Kv = K.values;
  const Matrix& Lv = L.values;
  const double lam = cfg.lambda_pi;
  const PairingMode mode = Pi.mode;
  return projected_descent(
      [&](const Matrix& P) { return -smi_objective(Kv, Lv, P, alpha, lam, mode); },
      [&](const Matrix& P) { return Matrix(-smi_objective_grad(Kv, Lv, P, alpha, lam, mode)); },
      Pi, cfg, -1.0);
}

HardAssignment round_permutation(const RelaxedPermutation& Pi) {
  const Eigen::Index n = Pi.values.rows();
  if (Pi.values.cols() != n) throw ShapeError("round_permutation: Pi must be square");
  // Shortest augmenting path with potentials, minimizing cost = -Pi.
  // Indices are 1-based; row/column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  const auto N = static_cast<std::size_t>(n);
  std::vector<double> u(N + 1, 0.0), v(N + 1, 0.0);
  std::vector<std::size_t> match(N + 1, 0), way(N + 1, 0);
  for (std::size_t i = 1; i <= N; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(N + 1, inf);
    std::vector<bool> used(N + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= N; ++j) {
        if (used[j]) continue;
        const double cost = -Pi.values(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1));
        const double cur = cost - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= N; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  HardAssignment out;
  out.mode = PairingMode::one_one;
  out.assignment.assign(N, 0);
  for (std::size_t j = 1; j <= N; ++j) out.assignment[match[j] - 1] = j - 1;
  return out;
}

HardAssignment round_many_one(const RelaxedPermutation& Pi) {
  HardAssignment out;
  out.mode = PairingMode::many_one;
  out.assignment.resize(static_cast<std::size_t>(Pi.values.rows()));
  for (Eigen::Index i = 0; i < Pi.values.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < Pi.values.cols(); ++j) {
      if (Pi.values(i, j) > Pi.values(i, best)) best = j;
    }
    out.assignment[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

HardAssignment round_assignment(const RelaxedPermutation& Pi) {
  return Pi.mode == PairingMode::one_one ? round_permutation(Pi) : round_many_one(Pi);
}

RelaxedPermutation init_pi(std::size_t n, std::size_t m, PairingMode mode, std::uint64_t seed) {
  if (n < 1 || m < 1) throw ParameterError("init_pi: n and m must be positive");
  if (mode == PairingMode::one_one && n != m) {
    throw ShapeError("init_pi: one_one pairing needs n == m");
  }
  std::mt19937_64 rng(seed);
  const double base = 1.0 / static_cast<double>(m);
  std::uniform_real_distribution<double> jitter(-1e-3 * base, 1e-3 * base);
  RelaxedPermutation pi;
  pi.mode = mode;
  pi.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < pi.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.values.cols(); ++j) {
      pi.values(i, j) = std::max(0.0, base + jitter(rng));
    }
  }
  return pi;
}

void write_pi(std::ostream& out, const RelaxedPermutation& pi, std::int64_t iterations) {
  out << "dmae-pi 1\n";
  out << pi.values.rows() << ' ' << pi.values.cols() << ' ' << to_string(pi.mode) << ' '
      << iterations << '\n';
  for (Eigen::Index i = 0; i < pi.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.values.cols(); ++j) {
      out << (j == 0 ? "" : " ") << format_double(pi.values(i, j));
    }
    out << '\n';
  }
}

PiCheckpoint read_pi(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "dmae-pi" || version != 1) {
    throw DataError("pi checkpoint: bad header");
  }
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::string mode;
  PiCheckpoint cp;
  if (!(in >> n >> m >> mode >> cp.iterations) || n < 1 || m < 1) {
    throw DataError("pi checkpoint: bad dimensions line");
  }
  cp.pi.mode = pairing_from_string(mode);
  cp.pi.values.resize(n, m);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!(in >> tok)) throw DataError("pi checkpoint truncated");
      cp.pi.values(i, j) = parse_double(tok);
    }
  }
  return cp;
}

}  // namespace dmae
