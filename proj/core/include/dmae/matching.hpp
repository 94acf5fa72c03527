#pragma once

#include "dmae/linalg.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace dmae {

enum class PairingMode { one_one, many_one };

std::string_view to_string(PairingMode m);
PairingMode pairing_from_string(std::string_view s);

// Relaxed assignment between n x-samples (rows) and m y-samples (columns).
// Entries are nonnegative; one_one drives row and column sums toward 1,
// many_one only the row sums.
struct RelaxedPermutation {
  Matrix values;
  PairingMode mode = PairingMode::one_one;
};

// assignment[i] is the y-column paired with x-row i.
struct HardAssignment {
  std::vector<std::size_t> assignment;
  PairingMode mode = PairingMode::one_one;

  // one_one: bijective onto [0, columns); many_one: every entry < columns.
  [[nodiscard]] bool valid(std::size_t columns) const;
  [[nodiscard]] Matrix to_matrix(std::size_t columns) const;
};

struct PiSolverConfig {
  double lambda_pi = 1.0;
  int max_iters = 200;
  double step_init = 1.0;
  double backtrack_factor = 0.5;
  double sufficient_decrease = 1e-4;
  double tol = 1e-6;
  // Receives the starting point and every accepted iterate; for diagnostics.
  std::function<void(const Matrix&)> observer;

  void validate() const;
};

struct PiStepResult {
  RelaxedPermutation pi;
  // Surrogate objective at the start and after every accepted step
  // (F for the KTA solver, G for the SMI solver).
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  // Total mass fell below 0.1 n: the solver is collapsing onto Pi = 0.
  bool degenerate = false;
  double penalty = 0.0;
};

// sum_k (row_k - 1)^2 + sum_k (col_k - 1)^2, without the column term in many_one.
double assignment_penalty(const Matrix& Pi, PairingMode mode);
Matrix assignment_penalty_grad(const Matrix& Pi, PairingMode mode);

// F(Pi) = ||K Pi - Pi L||_F^2 + lambda_pi * penalty. Square, one_one only.
double kta_surrogate(const Matrix& K, const Matrix& L, const Matrix& Pi, double lambda_pi);
Matrix kta_surrogate_grad(const Matrix& K, const Matrix& L, const Matrix& Pi, double lambda_pi);

// G(Pi) = (1/2n) tr(diag(alpha) K Pi L Pi^T) - 1/2 - lambda_pi * penalty.
double smi_objective(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha,
                     double lambda_pi, PairingMode mode);
Matrix smi_objective_grad(const Matrix& K, const Matrix& L, const Matrix& Pi, const Vector& alpha,
                          double lambda_pi, PairingMode mode);

// Projected gradient descent on F with Pi >= 0.
PiStepResult pi_step_kta(const GramMatrix& K, const GramMatrix& L, const RelaxedPermutation& Pi,
                         const PiSolverConfig& cfg);

// Projected gradient ascent on G with alpha frozen and Pi >= 0.
PiStepResult pi_step_smi(const GramMatrix& K, const GramMatrix& L, const RelaxedPermutation& Pi,
                         const Vector& alpha, const PiSolverConfig& cfg);

// Exact maximum-weight perfect matching on a square Pi (Hungarian method).
HardAssignment round_permutation(const RelaxedPermutation& Pi);

// Row-wise argmax; ties go to the lowest column index.
HardAssignment round_many_one(const RelaxedPermutation& Pi);

// Dispatches on Pi.mode.
HardAssignment round_assignment(const RelaxedPermutation& Pi);

// 1/m per entry plus uniform jitter in +-1e-3/m, clamped at 0.
RelaxedPermutation init_pi(std::size_t n, std::size_t m, PairingMode mode, std::uint64_t seed);

struct PiCheckpoint {
  RelaxedPermutation pi;
  std::int64_t iterations = 0;
};

void write_pi(std::ostream& out, const RelaxedPermutation& pi, std::int64_t iterations);
PiCheckpoint read_pi(std::istream& in);

}  // namespace dmae
