// Hot paths: Gram construction, one Pi solve, rounding, one training round.
#include "dmae/dataio.hpp"
#include "dmae/dependence.hpp"
#include "dmae/linalg.hpp"
#include "dmae/matching.hpp"
#include "dmae/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dmae;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

void BM_GramGaussian(benchmark::State& state) {
  const Matrix Z = gaussian(state.range(0), 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(gram_gaussian(Z, 2.5));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GramGaussian)->RangeMultiplier(2)->Range(32, 512)->Complexity();

void BM_PiStepKta(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const GramMatrix K = gram_gaussian(gaussian(n, 3, 2), 2.5);
  const GramMatrix L = gram_gaussian(gaussian(n, 3, 3), 0.5);
  const RelaxedPermutation pi0 = init_pi(static_cast<std::size_t>(n), static_cast<std::size_t>(n), PairingMode::one_one, 4);
  PiSolverConfig cfg;
  cfg.max_iters = 50;
  for (auto _ : state) benchmark::DoNotOptimize(pi_step_kta(K, L, pi0, cfg));
}
BENCHMARK(BM_PiStepKta)->Arg(30)->Arg(100)->Arg(200);

void BM_PiStepSmi(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const GramMatrix K = gram_gaussian(gaussian(n, 3, 2), 2.5);
  const GramMatrix L = gram_gaussian(gaussian(n, 3, 3), 0.5);
  const RelaxedPermutation pi0 = init_pi(static_cast<std::size_t>(n), static_cast<std::size_t>(n), PairingMode::one_one, 4);
  const Vector alpha = fit_smi(K, L, pi0.values, 0.1).alpha;
  PiSolverConfig cfg;
  cfg.max_iters = 50;
  for (auto _ : state) benchmark::DoNotOptimize(pi_step_smi(K, L, pi0, alpha, cfg));
}
BENCHMARK(BM_PiStepSmi)->Arg(30)->Arg(100)->Arg(200);

void BM_Hungarian(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const RelaxedPermutation pi{gaussian(n, n, 5).cwiseAbs(), PairingMode::one_one};
  for (auto _ : state) benchmark::DoNotOptimize(round_permutation(pi));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(16, 512)->Complexity();

// One outer round (Theta-step plus Pi-step) on the default synthetic task.
void BM_TrainRound(benchmark::State& state) {
  SyntheticSpec spec;
  spec.n = static_cast<std::size_t>(state.range(0));
  const TwoViewData v = synth_two_view(spec);
  SplitDataset raw;
  raw.unpaired_x = v.X;
  raw.unpaired_y = v.Y;
  TrainConfig cfg;
  cfg.hidden_widths = {64, 64};
  cfg.pretrain_epochs = 0;
  cfg.outer_rounds = 1;
  DmaeModel model = train(raw, cfg);
  const SplitDataset data = prepare(model, raw);
  for (auto _ : state) {
    theta_step(model, data, cfg);
    benchmark::DoNotOptimize(pi_step(model, data, cfg));
  }
}
BENCHMARK(BM_TrainRound)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
