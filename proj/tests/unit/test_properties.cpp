// Seeded property sweeps over the core invariants.
#include "dmae/autoencoder.hpp"
#include "dmae/dataio.hpp"
#include "dmae/dependence.hpp"
#include "dmae/matching.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cstring>
#include <random>

using namespace dmae;
using dmae::testing::perm_matrix;
using dmae::testing::random_matrix;
using dmae::testing::random_permutation;
using dmae::testing::random_uniform;

class Seeded : public ::testing::TestWithParam<int> {};

TEST_P(Seeded, TraceRelabelInvariance) {
  const int s = GetParam();
  const Eigen::Index n = 3 + s % 6;
  const Matrix K = dmae::testing::random_gram(n, 2, 1.0, s);
  const Matrix L = dmae::testing::random_gram(n, 2, 0.5, 100 + s);
  const Matrix Pi = random_uniform(n, n, 200 + s);
  const Matrix P = perm_matrix(random_permutation(static_cast<std::size_t>(n), 300 + s));
  EXPECT_NEAR(trace_perm(P * K * P.transpose(), L, P * Pi), trace_perm(K, L, Pi), 1e-10);
}

TEST_P(Seeded, GramIsPositiveSemidefinite) {
  const int s = GetParam();
  const Matrix K = dmae::testing::random_gram(12, 3, 0.5 + s * 0.2, s);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
}

TEST_P(Seeded, SmiReductionWithOnes) {
  const int s = GetParam();
  const Eigen::Index n = 2 + (s * 7) % 31;
  const Matrix K = dmae::testing::random_gram(n, 3, 2.5, s);
  const Matrix L = dmae::testing::random_gram(n, 3, 0.5, 50 + s);
  const Matrix Pi = random_uniform(n, n, 70 + s);
  const double u = trace_perm(K, L, Pi);
  EXPECT_NEAR(smi_with_alpha(K, L, Pi, Vector::Ones(n)), u / (2.0 * n) - 0.5, 1e-10);
}

TEST_P(Seeded, HungarianBeatsRandomPermutations) {
  const int s = GetParam();
  const Matrix W = random_uniform(9, 9, s);
  const HardAssignment a = round_permutation({W, PairingMode::one_one});
  ASSERT_TRUE(a.valid(9));
  double best = 0.0;
  for (std::size_t i = 0; i < 9; ++i) best += W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a.assignment[i]));
  for (int t = 0; t < 200; ++t) {
    const auto p = random_permutation(9, 1000 * s + t);
    double v = 0.0;
    for (std::size_t i = 0; i < 9; ++i) v += W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p[i]));
    EXPECT_LE(v, best + 1e-12);
  }
}

TEST_P(Seeded, SolverIteratesStayFeasible) {
  const int s = GetParam();
  const Matrix K = dmae::testing::random_gram(7, 2, 2.5, s);
  const Matrix L = dmae::testing::random_gram(5, 2, 0.5, 40 + s);
  const RelaxedPermutation P0 = init_pi(7, 5, PairingMode::many_one, s);
  PiSolverConfig cfg;
  cfg.max_iters = 50;
  const Vector a = random_uniform(7, 1, s).col(0);
  const PiStepResult r = pi_step_smi({K, 2.5}, {L, 0.5}, P0, a, cfg);
  EXPECT_GE(r.pi.values.minCoeff(), 0.0);
  for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_GE(r.trace[t], r.trace[t - 1]);
  EXPECT_TRUE(round_assignment(r.pi).valid(5));
}

TEST_P(Seeded, SplitPartitionsRows) {
  const int s = GetParam();
  SyntheticSpec spec;
  spec.n = 10 + static_cast<std::size_t>(s);
  spec.seed = static_cast<std::uint64_t>(s);
  const double fp = 0.1 * (s % 4), fu = 0.5;
  const SplitDataset d = split(synth_two_view(spec), {fp, fu, 1.0 - fp - fu}, s);
  EXPECT_EQ(d.n_paired() + d.n_unpaired_x() + static_cast<std::size_t>(d.test_x.rows()), spec.n);
  EXPECT_EQ(d.n_unpaired_x(), d.n_unpaired_y());
  HardAssignment t{d.unpaired_truth, PairingMode::one_one};
  EXPECT_TRUE(t.valid(d.n_unpaired_y()));
}

TEST_P(Seeded, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  for (int i = 0; i < 200; ++i) {
    std::uint64_t bits = rng();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
}

TEST_P(Seeded, AutoencoderGradientAcrossShapes) {
  const int s = GetParam();
  ArchitectureOptions arch;
  arch.input_dim = 2 + s % 4;
  arch.latent_dim = 1 + s % 3;
  arch.depth = 1 + s % 3;
  const AutoencoderParams p = make_autoencoder(arch, s);
  const Matrix X = random_matrix(5, arch.input_dim, 10 + s);
  const Matrix G = random_matrix(5, arch.latent_dim, 20 + s);
  EXPECT_LT(grad_check(p, X, G, 1.0, 1e-5), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, Seeded, ::testing::Range(0, 12));
