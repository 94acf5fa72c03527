#include "dmae/errors.hpp"
#include "dmae/matching.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

using namespace dmae;
using dmae::testing::all_permutations;
using dmae::testing::perm_matrix;
using dmae::testing::random_matrix;
using dmae::testing::random_uniform;

namespace {

double max_rel(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    worst = std::max(worst, std::abs(x - y) / std::max(1e-8, std::abs(x) + std::abs(y)));
  }
  return worst;
}

Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix P, double eps) {
  Matrix g(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    const double keep = P.data()[i];
    P.data()[i] = keep + eps;
    const double up = f(P);
    P.data()[i] = keep - eps;
    const double dn = f(P);
    P.data()[i] = keep;
    g.data()[i] = (up - dn) / (2.0 * eps);
  }
  return g;
}

double assignment_value(const Matrix& W, const std::vector<std::size_t>& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a[i]));
  return s;
}

RelaxedPermutation relaxed(Matrix v, PairingMode m = PairingMode::one_one) { return {std::move(v), m}; }

// Rank (1 = best) of a permutation's trace among all n! permutations.
std::size_t trace_rank(const Matrix& K, const Matrix& L, const std::vector<std::size_t>& p) {
  const double mine = trace_perm(K, L, perm_matrix(p));
  std::size_t better = 0;
  for (const auto& q : all_permutations(p.size())) {
    if (trace_perm(K, L, perm_matrix(q)) > mine + 1e-12) ++better;
  }
  return better + 1;
}

}  // namespace

TEST(Penalty, HandValues) {
  Matrix P(2, 2);
  P << 1.0, 0.5, 0.0, 0.0;
  // rows 1.5, 0 ; cols 1, 0.5
  EXPECT_DOUBLE_EQ(assignment_penalty(P, PairingMode::one_one), 0.25 + 1.0 + 0.0 + 0.25);
  EXPECT_DOUBLE_EQ(assignment_penalty(P, PairingMode::many_one), 1.25);
  EXPECT_EQ(assignment_penalty(Matrix::Identity(4, 4), PairingMode::one_one), 0.0);
}

TEST(Penalty, GradientMatchesFiniteDifferences) {
  const Matrix P = random_uniform(4, 3, 1);
  for (PairingMode m : {PairingMode::one_one, PairingMode::many_one}) {
    const Matrix num = numeric_grad([&](const Matrix& q) { return assignment_penalty(q, m); }, P, 1e-6);
    EXPECT_LT(max_rel(assignment_penalty_grad(P, m), num), 1e-6);
  }
}

TEST(KtaSurrogate, GradientMatchesFiniteDifferences) {
  for (int s = 0; s < 5; ++s) {
    const Matrix K = dmae::testing::random_gram(5, 2, 1.0, s);
    const Matrix L = dmae::testing::random_gram(5, 2, 1.0, 10 + s);
    const Matrix P = random_uniform(5, 5, 20 + s) / 2.5;
    const Matrix num = numeric_grad([&](const Matrix& q) { return kta_surrogate(K, L, q, 1.0); }, P, 1e-6);
    EXPECT_LT(max_rel(kta_surrogate_grad(K, L, P, 1.0), num), 1e-4);
  }
}

TEST(SmiObjective, GradientMatchesFiniteDifferences) {
  for (int s = 0; s < 5; ++s) {
    for (PairingMode m : {PairingMode::one_one, PairingMode::many_one}) {
      const Eigen::Index cols = m == PairingMode::one_one ? 5 : 3;
      const Matrix K = dmae::testing::random_gram(5, 2, 1.0, s);
      const Matrix L = dmae::testing::random_gram(cols, 2, 1.0, 10 + s);
      const Matrix P = random_uniform(5, cols, 20 + s) / 2.5;
      const Vector a = random_matrix(5, 1, 30 + s).col(0);
      const Matrix num = numeric_grad([&](const Matrix& q) { return smi_objective(K, L, q, a, 1.0, m); }, P, 1e-6);
      EXPECT_LT(max_rel(smi_objective_grad(K, L, P, a, 1.0, m), num), 1e-4);
    }
  }
}

TEST(SmiObjective, OnesAlphaGradientIsTraceGradient) {
  const Matrix K = dmae::testing::random_gram(6, 2, 1.0, 1);
  const Matrix L = dmae::testing::random_gram(6, 2, 1.0, 2);
  const Matrix P = random_uniform(6, 6, 3);
  const Matrix tr_grad = K * P * L + K.transpose() * P * L.transpose();
  const Matrix want = tr_grad / 12.0 - assignment_penalty_grad(P, PairingMode::one_one);
  EXPECT_LT((smi_objective_grad(K, L, P, Vector::Ones(6), 1.0, PairingMode::one_one) - want).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(PiStepSmi, OnesAlphaStepIsTraceAscentStep) {
  const Matrix K = dmae::testing::random_gram(6, 2, 1.0, 4);
  const Matrix L = dmae::testing::random_gram(6, 2, 1.0, 5);
  const RelaxedPermutation P0 = init_pi(6, 6, PairingMode::one_one, 6);
  PiSolverConfig cfg;
  cfg.max_iters = 1;
  const PiStepResult r = pi_step_smi({K, 1.0}, {L, 1.0}, P0, Vector::Ones(6), cfg);

  // Hand-rolled projected Armijo ascent on tr/(2n) - 1/2 - penalty.
  auto g_of = [&](const Matrix& P) {
    return trace_perm(K, L, P) / 12.0 - 0.5 - assignment_penalty(P, PairingMode::one_one);
  };
  const Matrix grad = (K * P0.values * L + K.transpose() * P0.values * L.transpose()) / 12.0 -
                      assignment_penalty_grad(P0.values, PairingMode::one_one);
  double step = cfg.step_init;
  Matrix next;
  while (true) {
    next = (P0.values + step * grad).cwiseMax(0.0);
    const double gain = g_of(next) - g_of(P0.values);
    if (gain >= cfg.sufficient_decrease * grad.cwiseProduct(next - P0.values).sum() && gain >= 0.0) break;
    step *= cfg.backtrack_factor;
  }
  EXPECT_LT((r.pi.values - next).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(r.trace.back(), g_of(next), 1e-14);
}

TEST(PiStepKta, IdentityIsStationaryWhenGramsMatch) {
  const Matrix K = dmae::testing::random_gram(6, 2, 1.0, 8);
  const PiStepResult r = pi_step_kta({K, 1.0}, {K, 1.0}, relaxed(Matrix::Identity(6, 6)), {});
  EXPECT_LT((r.pi.values - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(r.penalty, 1e-16);
}

TEST(PiStepKta, ZeroPenaltyWeightCollapses) {
  const Matrix K = dmae::testing::random_gram(5, 2, 1.0, 1);
  const Matrix L = dmae::testing::random_gram(5, 2, 1.0, 2);
  PiSolverConfig cfg;
  cfg.lambda_pi = 0.0;
  cfg.max_iters = 5000;
  cfg.tol = 1e-12;
  const PiStepResult r = pi_step_kta({K, 1.0}, {L, 1.0}, init_pi(5, 5, PairingMode::one_one, 3), cfg);
  EXPECT_TRUE(r.degenerate);
  EXPECT_LT(r.pi.values.sum(), 0.5);
}

TEST(PiStepKta, RejectsManyOne) {
  const Matrix K = dmae::testing::random_gram(4, 2, 1.0, 1);
  const Matrix L = dmae::testing::random_gram(3, 2, 1.0, 2);
  EXPECT_THROW(pi_step_kta({K, 1.0}, {L, 1.0}, init_pi(4, 3, PairingMode::many_one, 1), {}), ShapeError);
}

TEST(PiStepKta, ExhaustiveOptimumAtN4) {
  int hits = 0;
  for (int s = 0; s < 10; ++s) {
    const Matrix X = random_matrix(4, 2, 100 + s);
    const auto truth = dmae::testing::random_permutation(4, 200 + s);
    const Matrix P = perm_matrix(truth);
    const Matrix K = gram_gaussian(X, 1.0).values;
    const Matrix L = gram_gaussian(P.transpose() * X + 0.05 * random_matrix(4, 2, 300 + s), 1.0).values;
    const PiStepResult r = pi_step_kta({K, 1.0}, {L, 1.0}, init_pi(4, 4, PairingMode::one_one, s), {});
    hits += trace_rank(K, L, round_permutation(r.pi).assignment) == 1;
  }
  EXPECT_GE(hits, 9);
}

// Grams of random points and of a noisy, shuffled copy of them.
TEST(PiStepKta, TopOneAmong120AtN5) {
  int hits = 0;
  for (int s = 0; s < 10; ++s) {
    const Matrix X = random_matrix(5, 2, 400 + s);
    const Matrix P = perm_matrix(dmae::testing::random_permutation(5, 500 + s));
    const Matrix K = gram_gaussian(X, 1.0).values;
    const Matrix L = gram_gaussian(P.transpose() * X + 0.05 * random_matrix(5, 2, 600 + s), 1.0).values;
    const PiStepResult r = pi_step_kta({K, 1.0}, {L, 1.0}, init_pi(5, 5, PairingMode::one_one, s), {});
    hits += trace_rank(K, L, round_permutation(r.pi).assignment) == 1;
  }
  EXPECT_GE(hits, 9) << hits << "/10 seeds reached the best permutation";
}

TEST(PiStepSmi, JitterBreaksSymmetricStart) {
  for (int s = 0; s < 10; ++s) {
    const Matrix K = dmae::testing::random_gram(6, 2, 1.0, 600 + s);
    const RelaxedPermutation start = init_pi(6, 6, PairingMode::one_one, s);
    PiSolverConfig cfg;
    cfg.max_iters = 2000;
    cfg.tol = 1e-12;
    const PiStepResult r = pi_step_smi({K, 1.0}, {K, 1.0}, start, Vector::Ones(6), cfg);
    const HardAssignment a = round_permutation(r.pi);
    ASSERT_TRUE(a.valid(6));
    for (Eigen::Index i = 0; i < 6; ++i) {
      EXPECT_GT(r.pi.values(i, static_cast<Eigen::Index>(a.assignment[static_cast<std::size_t>(i)])), 0.5) << "seed " << s;
    }
  }
}

TEST(PiStep, TracesAreMonotoneAndIterateNonnegative) {
  for (int s = 0; s < 5; ++s) {
    const Matrix K = dmae::testing::random_gram(8, 2, 1.0, s);
    const Matrix L = dmae::testing::random_gram(8, 2, 1.0, 70 + s);
    const RelaxedPermutation P0 = init_pi(8, 8, PairingMode::one_one, s);
    const PiStepResult kta = pi_step_kta({K, 1.0}, {L, 1.0}, P0, {});
    const PiStepResult smi = pi_step_smi({K, 1.0}, {L, 1.0}, P0, random_uniform(8, 1, s).col(0), {});
    for (std::size_t t = 1; t < kta.trace.size(); ++t) EXPECT_LE(kta.trace[t], kta.trace[t - 1]);
    for (std::size_t t = 1; t < smi.trace.size(); ++t) EXPECT_GE(smi.trace[t], smi.trace[t - 1]);
    EXPECT_GE(kta.pi.values.minCoeff(), 0.0);
    EXPECT_GE(smi.pi.values.minCoeff(), 0.0);
  }
}

TEST(RoundPermutation, HardInputIsFixedPoint) {
  const auto p = dmae::testing::random_permutation(7, 3);
  EXPECT_EQ(round_permutation(relaxed(perm_matrix(p))).assignment, p);
}

TEST(RoundPermutation, DominantDiagonal) {
  Matrix P(2, 2);
  P << 0.9, 0.1, 0.2, 0.8;
  const HardAssignment a = round_permutation(relaxed(P));
  EXPECT_EQ(a.assignment, (std::vector<std::size_t>{0, 1}));
}

TEST(RoundPermutation, MatchesExhaustiveSearchAtN6) {
  const auto perms = all_permutations(6);
  for (int s = 0; s < 10; ++s) {
    const Matrix W = random_uniform(6, 6, 40 + s);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> arg;
    for (const auto& p : perms) {
      const double v = assignment_value(W, p);
      if (v > best) {
        best = v;
        arg = p;
      }
    }
    const HardAssignment a = round_permutation(relaxed(W));
    EXPECT_TRUE(a.valid(6));
    EXPECT_EQ(a.assignment, arg);
    EXPECT_NEAR(assignment_value(W, a.assignment), best, 1e-12);
  }
}

TEST(RoundPermutation, RejectsRectangular) {
  EXPECT_THROW(round_permutation(relaxed(Matrix::Ones(3, 2))), ShapeError);
}

TEST(RoundManyOne, OneHotRows) {
  Matrix P = Matrix::Zero(4, 3);
  P(0, 2) = P(1, 0) = P(2, 2) = P(3, 1) = 1.0;
  EXPECT_EQ(round_many_one(relaxed(P, PairingMode::many_one)).assignment, (std::vector<std::size_t>{2, 0, 2, 1}));
}

TEST(RoundManyOne, UniformRowPicksColumnZero) {
  EXPECT_EQ(round_many_one(relaxed(Matrix::Constant(2, 4, 0.25), PairingMode::many_one)).assignment,
            (std::vector<std::size_t>{0, 0}));
}

TEST(RoundManyOne, MatchesRowScan) {
  const Matrix P = random_uniform(5, 3, 9);
  const HardAssignment a = round_many_one(relaxed(P, PairingMode::many_one));
  for (Eigen::Index i = 0; i < 5; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 0; j < 3; ++j)
      if (P(i, static_cast<Eigen::Index>(j)) > P(i, static_cast<Eigen::Index>(best))) best = j;
    EXPECT_EQ(a.assignment[static_cast<std::size_t>(i)], best);
  }
  EXPECT_EQ(round_assignment(relaxed(P, PairingMode::many_one)).mode, PairingMode::many_one);
}

TEST(InitPi, DeterministicNearUniformDistinct) {
  const RelaxedPermutation a = init_pi(10, 10, PairingMode::one_one, 5);
  EXPECT_EQ(a.values, init_pi(10, 10, PairingMode::one_one, 5).values);
  EXPECT_NE(a.values, init_pi(10, 10, PairingMode::one_one, 6).values);
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(a.values.row(i).sum(), 1.0, 1e-3);
  EXPECT_GE(a.values.minCoeff(), 0.0);
  const RelaxedPermutation b = init_pi(7, 3, PairingMode::many_one, 1);
  EXPECT_EQ(b.values.cols(), 3);
  EXPECT_THROW(init_pi(7, 3, PairingMode::one_one, 1), ShapeError);
}

TEST(HardAssignment, Validity) {
  EXPECT_TRUE((HardAssignment{{1, 0, 2}, PairingMode::one_one}).valid(3));
  EXPECT_FALSE((HardAssignment{{1, 1, 2}, PairingMode::one_one}).valid(3));
  EXPECT_TRUE((HardAssignment{{1, 1, 2}, PairingMode::many_one}).valid(3));
  EXPECT_FALSE((HardAssignment{{1, 3}, PairingMode::many_one}).valid(3));
  EXPECT_EQ((HardAssignment{{2, 0, 1}, PairingMode::one_one}).to_matrix(3), perm_matrix({2, 0, 1}));
}

TEST(PiCheckpoint, RoundTripIsExact) {
  const RelaxedPermutation p = init_pi(6, 4, PairingMode::many_one, 11);
  std::stringstream ss;
  write_pi(ss, p, 1234);
  const PiCheckpoint cp = read_pi(ss);
  EXPECT_EQ(cp.pi.values, p.values);
  EXPECT_EQ(cp.pi.mode, PairingMode::many_one);
  EXPECT_EQ(cp.iterations, 1234);
  std::stringstream bad("dmae-pi 1\n2 2 one_one 0\n0.5 0.5\n0.5\n");
  EXPECT_THROW(read_pi(bad), DataError);
}

TEST(PiSolverConfig, Validation) {
  PiSolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.backtrack_factor = 1.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.lambda_pi = -1.0;
  EXPECT_THROW(c.validate(), ParameterError);
}
