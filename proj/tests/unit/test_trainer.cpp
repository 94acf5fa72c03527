#include "dmae/errors.hpp"
#include "dmae/trainer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace dmae;
using dmae::testing::identity_net;
using dmae::testing::random_matrix;
using dmae::testing::small_net;

namespace {

SplitDataset make_data(Eigen::Index nu, Eigen::Index np, Eigen::Index d, std::uint64_t seed) {
  SplitDataset d_;
  d_.unpaired_x = random_matrix(nu, d, seed);
  d_.unpaired_y = random_matrix(nu, d, seed + 1);
  d_.paired_x = random_matrix(np, d, seed + 2);
  d_.paired_y = random_matrix(np, d, seed + 3);
  return d_;
}

DmaeModel make_model(const AutoencoderParams& ax, const AutoencoderParams& ay, const TrainConfig& cfg,
                     std::size_t nu, std::uint64_t seed) {
  DmaeModel m;
  m.theta_x = ax;
  m.theta_y = ay;
  m.opt_x = make_adam_state(ax);
  m.opt_y = make_adam_state(ay);
  m.scaler_x = FeatureScaler::identity(ax.input_dim());
  m.scaler_y = FeatureScaler::identity(ay.input_dim());
  m.dependence = cfg.dependence();
  if (cfg.mode != TrainMode::supervised && nu > 0) m.pi = init_pi(nu, nu, cfg.pairing, seed);
  return m;
}

TrainConfig small_config(Measure measure, TrainMode mode) {
  TrainConfig cfg;
  cfg.measure = measure;
  cfg.mode = mode;
  cfg.sigma2_x = 1.5;
  cfg.sigma2_y = 0.8;
  return cfg;
}

// Central differences of objective_frozen over every parameter of both views.
double full_gradient_error(DmaeModel model, const SplitDataset& data, const TrainConfig& cfg, double eps) {
  const FrozenAlphas alphas = fit_alphas(model, data, cfg);
  const ObjectiveGradient g = objective_gradient(model, data, cfg, alphas);
  double worst = 0.0;
  auto probe = [&](auto& block, const auto& grad) {
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double keep = block.data()[i];
      block.data()[i] = keep + eps;
      const double up = objective_frozen(model, data, cfg, alphas);
      block.data()[i] = keep - eps;
      const double dn = objective_frozen(model, data, cfg, alphas);
      block.data()[i] = keep;
      const double num = (up - dn) / (2.0 * eps);
      const double a = grad.data()[i];
      worst = std::max(worst, std::abs(a - num) / std::max(1e-8, std::abs(a) + std::abs(num)));
    }
  };
  auto layers = [&](std::vector<Layer>& ls, const std::vector<LayerGrad>& gs) {
    for (std::size_t k = 0; k < ls.size(); ++k) {
      probe(ls[k].weights, gs[k].weights);
      probe(ls[k].bias, gs[k].bias);
    }
  };
  layers(model.theta_x.encoder, g.x.encoder);
  layers(model.theta_x.decoder, g.x.decoder);
  layers(model.theta_y.encoder, g.y.encoder);
  layers(model.theta_y.decoder, g.y.decoder);
  return worst;
}

SplitDataset synthetic_split(std::uint64_t seed, double paired) {
  SyntheticSpec spec;
  spec.n = 20;
  spec.seed = seed;
  return split(synth_two_view(spec), {paired, 1.0 - paired, 0.0}, seed);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.latent_dim = 4;
  cfg.depth = 2;
  cfg.hidden_widths = {8};
  cfg.pretrain_epochs = 20;
  cfg.outer_rounds = 3;
  cfg.theta_epochs_per_round = 2;
  cfg.pi_solver.max_iters = 30;
  return cfg;
}

}  // namespace

TEST(Objective, ZeroAtReconstructionOptimumWithoutDependence) {
  TrainConfig cfg = small_config(Measure::smi, TrainMode::semisupervised);
  cfg.lambda_dep = 0.0;
  cfg.lambda_dep_paired = 0.0;
  const SplitDataset data = make_data(5, 4, 3, 1);
  const DmaeModel m = make_model(identity_net(3), identity_net(3), cfg, 5, 1);
  EXPECT_EQ(objective(m, data, cfg), 0.0);
}

TEST(Objective, SupervisedHasNoPiTerm) {
  TrainConfig cfg = small_config(Measure::ukta, TrainMode::supervised);
  const SplitDataset data = make_data(0, 6, 3, 2);
  const DmaeModel m = make_model(small_net(3, 2, 1), small_net(3, 2, 2), cfg, 0, 1);
  EXPECT_FALSE(m.pi.has_value());
  const ObjectiveTerms t = objective_terms(m, data, cfg);
  EXPECT_EQ(t.dependence_unpaired, 0.0);
  const GramMatrix K = gram_gaussian(encode(m.theta_x, data.paired_x), cfg.sigma2_x);
  const GramMatrix L = gram_gaussian(encode(m.theta_y, data.paired_y), cfg.sigma2_y);
  const double want = recon_loss(m.theta_x, data.paired_x) + recon_loss(m.theta_y, data.paired_y) -
                      cfg.lambda_dep * ukta(K, L, Matrix::Identity(6, 6));
  EXPECT_NEAR(t.total, want, 1e-12);
}

TEST(Objective, TermByTermAssembly) {
  for (Measure meas : {Measure::ukta, Measure::smi}) {
    TrainConfig cfg = small_config(meas, TrainMode::semisupervised);
    cfg.lambda_dep_paired = 0.3;
    const SplitDataset data = make_data(5, 4, 3, 3);
    const DmaeModel m = make_model(small_net(3, 2, 4), small_net(3, 2, 5), cfg, 5, 6);

    const Matrix ux = encode(m.theta_x, data.unpaired_x), uy = encode(m.theta_y, data.unpaired_y);
    const Matrix px = encode(m.theta_x, data.paired_x), py = encode(m.theta_y, data.paired_y);
    const GramMatrix Ku = gram_gaussian(ux, cfg.sigma2_x), Lu = gram_gaussian(uy, cfg.sigma2_y);
    const GramMatrix Kp = gram_gaussian(px, cfg.sigma2_x), Lp = gram_gaussian(py, cfg.sigma2_y);
    const Matrix I = Matrix::Identity(4, 4);
    double du = 0.0, dp = 0.0;
    if (meas == Measure::ukta) {
      du = ukta(Ku, Lu, m.pi->values);
      dp = ukta(Kp, Lp, I);
    } else {
      du = smi(Ku, Lu, m.pi->values, fit_smi(Ku, Lu, m.pi->values, cfg.lambda_ridge));
      dp = smi(Kp, Lp, I, fit_smi(Kp, Lp, I, cfg.lambda_ridge));
    }
    const double recon = recon_loss(m.theta_x, data.train_x()) + recon_loss(m.theta_y, data.train_y());
    const ObjectiveTerms t = objective_terms(m, data, cfg);
    EXPECT_NEAR(t.dependence_unpaired, du, 1e-12);
    EXPECT_NEAR(t.dependence_paired, dp, 1e-12);
    EXPECT_NEAR(t.total, recon - 0.7 * du - 0.3 * dp, 1e-10);
  }
}

TEST(ObjectiveGradient, MatchesFiniteDifferences) {
  for (Measure meas : {Measure::ukta, Measure::smi}) {
    for (TrainMode mode : {TrainMode::unsupervised, TrainMode::semisupervised}) {
      TrainConfig cfg = small_config(meas, mode);
      const SplitDataset data = make_data(8, mode == TrainMode::unsupervised ? 0 : 4, 4, 7);
      const DmaeModel m = make_model(small_net(4, 3, 8), small_net(4, 3, 9), cfg, 8, 10);
      EXPECT_LT(full_gradient_error(m, data, cfg, 1e-5), 1e-4) << to_string(meas) << " " << to_string(mode);
    }
  }
}

TEST(ThetaStep, NoDependenceIsPlainReconstructionAdam) {
  TrainConfig cfg = small_config(Measure::smi, TrainMode::unsupervised);
  cfg.lambda_dep = 0.0;
  cfg.theta_epochs_per_round = 4;
  cfg.lr = 1e-2;
  const SplitDataset data = make_data(6, 0, 3, 11);
  DmaeModel m = make_model(small_net(3, 2, 12), small_net(3, 2, 13), cfg, 6, 14);
  AutoencoderParams ax = m.theta_x, ay = m.theta_y;
  AdamState sx = m.opt_x, sy = m.opt_y;
  theta_step(m, data, cfg);
  for (int e = 0; e < 4; ++e) {
    adam_step(ax, backward(ax, data.unpaired_x, Matrix::Zero(6, 2), 1.0), cfg.lr, sx);
    adam_step(ay, backward(ay, data.unpaired_y, Matrix::Zero(6, 2), 1.0), cfg.lr, sy);
  }
  EXPECT_TRUE(m.theta_x == ax);
  EXPECT_TRUE(m.theta_y == ay);
}

TEST(ThetaStep, ZeroEpochsLeavesModel) {
  TrainConfig cfg = small_config(Measure::smi, TrainMode::unsupervised);
  cfg.theta_epochs_per_round = 0;
  const SplitDataset data = make_data(6, 0, 3, 15);
  DmaeModel m = make_model(small_net(3, 2, 16), small_net(3, 2, 17), cfg, 6, 18);
  const DmaeModel before = m;
  theta_step(m, data, cfg);
  EXPECT_TRUE(m.theta_x == before.theta_x);
  EXPECT_TRUE(m.theta_y == before.theta_y);
  EXPECT_EQ(m.opt_x.step, before.opt_x.step);
}

TEST(ThetaStep, GuardNeverRaisesObjective) {
  for (ThetaGuard g : {ThetaGuard::round, ThetaGuard::epoch}) {
    TrainConfig cfg = small_config(Measure::smi, TrainMode::unsupervised);
    cfg.theta_guard = g;
    cfg.lr = 0.05;
    const SplitDataset data = make_data(8, 0, 3, 19);
    DmaeModel m = make_model(small_net(3, 2, 20), small_net(3, 2, 21), cfg, 8, 22);
    for (int r = 0; r < 5; ++r) {
      const double before = objective(m, data, cfg);
      theta_step(m, data, cfg);
      EXPECT_LE(objective(m, data, cfg), before) << to_string(g);
    }
  }
}

TEST(PiStep, SupervisedIsNoOp) {
  TrainConfig cfg = small_config(Measure::smi, TrainMode::supervised);
  const SplitDataset data = make_data(0, 5, 3, 23);
  DmaeModel m = make_model(small_net(3, 2, 24), small_net(3, 2, 25), cfg, 0, 26);
  const PiStepResult r = pi_step(m, data, cfg);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_FALSE(m.pi.has_value());
  EXPECT_TRUE(m.pi_traces.empty());
}

TEST(PiStep, SurrogateImproves) {
  for (Measure meas : {Measure::ukta, Measure::smi}) {
    TrainConfig cfg = small_config(meas, TrainMode::unsupervised);
    const SplitDataset data = make_data(7, 0, 3, 27);
    DmaeModel m = make_model(small_net(3, 2, 28), small_net(3, 2, 29), cfg, 7, 30);
    const PiStepResult r = pi_step(m, data, cfg);
    ASSERT_GE(r.trace.size(), 2u);
    if (meas == Measure::ukta) {
      EXPECT_LT(r.trace.back(), r.trace.front());
    } else {
      EXPECT_GT(r.trace.back(), r.trace.front());
    }
    EXPECT_EQ(m.pi->values, r.pi.values);
    EXPECT_EQ(m.pi_traces.size(), 1u);
  }
}

TEST(PiStep, RecoversPlantedPermutationOnIdenticalViews) {
  for (Measure meas : {Measure::ukta, Measure::smi}) {
    for (int s = 0; s < 5; ++s) {
      const int n = 8;
      TrainConfig cfg = small_config(meas, TrainMode::unsupervised);
      cfg.sigma2_x = cfg.sigma2_y = 1.0;
      cfg.pi_solver.max_iters = 1000;
      const auto sigma = dmae::testing::random_permutation(n, 31 + s);
      SplitDataset data;
      data.unpaired_x = random_matrix(n, 3, 40 + s, 0.8);
      data.unpaired_y.resize(n, 3);
      for (int i = 0; i < n; ++i) data.unpaired_y.row(static_cast<Eigen::Index>(sigma[i])) = data.unpaired_x.row(i);
      DmaeModel m = make_model(identity_net(3), identity_net(3), cfg, n, 50 + s);
      for (int r = 0; r < 5; ++r) pi_step(m, data, cfg);
      EXPECT_EQ(round_permutation(*m.pi).assignment, sigma) << to_string(meas) << " seed " << s;
    }
  }
}

TEST(Train, OneRoundWithoutDependenceIsPretrainPlusPiSolve) {
  const SplitDataset data = synthetic_split(3, 0.0);
  TrainConfig a = quick_config();
  a.lambda_dep = 0.0;
  a.outer_rounds = 1;
  TrainConfig b = a;
  b.pretrain_epochs = a.pretrain_epochs + a.theta_epochs_per_round;
  b.theta_epochs_per_round = 0;
  const DmaeModel ma = train(data, a);
  const DmaeModel mb = train(data, b);
  EXPECT_TRUE(ma.theta_x == mb.theta_x);
  EXPECT_TRUE(ma.theta_y == mb.theta_y);
  EXPECT_EQ(ma.pi->values, mb.pi->values);
  ASSERT_EQ(ma.history.size(), 1u);
  EXPECT_EQ(ma.history[0].objective, ma.history[0].recon_x + ma.history[0].recon_y);
  EXPECT_GT(ma.pi_traces.size(), 0u);
}

TEST(Train, DeterministicHistoryAndCheckpoint) {
  const SplitDataset data = synthetic_split(5, 0.3);
  TrainConfig cfg = quick_config();
  cfg.mode = TrainMode::semisupervised;
  std::string h[2], c[2];
  for (int i = 0; i < 2; ++i) {
    const DmaeModel m = train(data, cfg);
    std::ostringstream hs, cs;
    write_history(hs, m.history);
    write_model(cs, m);
    write_pi(cs, *m.pi, m.pi_iterations);
    h[i] = hs.str();
    c[i] = cs.str();
  }
  EXPECT_EQ(h[0], h[1]);
  EXPECT_EQ(c[0], c[1]);
}

TEST(Train, SeedChangesResult) {
  const SplitDataset data = synthetic_split(5, 0.0);
  TrainConfig cfg = quick_config();
  const DmaeModel a = train(data, cfg);
  cfg.seed = 1;
  const DmaeModel b = train(data, cfg);
  EXPECT_FALSE(a.theta_x == b.theta_x);
}

TEST(Train, ModesAndManyOne) {
  TrainConfig cfg = quick_config();
  cfg.mode = TrainMode::supervised;
  const DmaeModel sup = train(synthetic_split(7, 1.0), cfg);
  EXPECT_FALSE(sup.pi.has_value());
  EXPECT_GT(sup.history.front().dependence_paired, 0.0);

  SyntheticSpec spec;
  spec.n = 24;
  const TwoViewData mo = synth_many_one(spec, 4);
  SplitDataset d;
  d.mode = PairingMode::many_one;
  d.unpaired_x = mo.X;
  d.unpaired_y = mo.Y;
  d.unpaired_truth = mo.truth.assignment;
  cfg = quick_config();
  cfg.pairing = PairingMode::many_one;
  for (Measure meas : {Measure::smi, Measure::ukta}) {
    cfg.measure = meas;
    const DmaeModel m = train(d, cfg);
    ASSERT_TRUE(m.pi.has_value());
    EXPECT_EQ(m.pi->values.rows(), 24);
    EXPECT_EQ(m.pi->values.cols(), 4);
    EXPECT_TRUE(round_assignment(*m.pi).valid(4));
  }
}

TEST(Train, ValidationAgainstData) {
  TrainConfig cfg = quick_config();
  EXPECT_THROW(train(synthetic_split(1, 0.5), cfg), ParameterError);  // unsupervised with pairs
  cfg.mode = TrainMode::semisupervised;
  EXPECT_THROW(train(synthetic_split(1, 0.0), cfg), ParameterError);
  cfg.mode = TrainMode::unsupervised;
  cfg.pairing = PairingMode::many_one;
  EXPECT_THROW(train(synthetic_split(1, 0.0), cfg), ParameterError);  // pairing mismatch
  cfg = quick_config();
  cfg.sigma2_x = -1.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = quick_config();
  cfg.outer_rounds = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Train, DivergenceRaisesTrainingError) {
  TrainConfig cfg = quick_config();
  cfg.lr = 1e300;
  cfg.pretrain_epochs = 50;
  EXPECT_THROW(train(synthetic_split(2, 0.0), cfg), TrainingError);
}

TEST(ModelCheckpoint, RoundTripReproducesLatents) {
  const SplitDataset data = synthetic_split(9, 0.0);
  const DmaeModel m = train(data, quick_config());
  std::stringstream ss;
  write_model(ss, m);
  const DmaeModel r = read_model(ss);
  EXPECT_TRUE(r.theta_x == m.theta_x);
  EXPECT_TRUE(r.theta_y == m.theta_y);
  EXPECT_EQ(r.embed_x(data.unpaired_x), m.embed_x(data.unpaired_x));
  EXPECT_EQ(r.dependence.sigma2_x, m.dependence.sigma2_x);
  std::stringstream again;
  write_model(again, r);
  std::stringstream first;
  write_model(first, m);
  EXPECT_EQ(again.str(), first.str());
}

TEST(History, HeaderAndColumns) {
  RoundRecord r;
  r.round = 2;
  r.objective = 1.5;
  r.pi_iterations = 7;
  std::ostringstream os;
  write_history(os, {r});
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "round\trecon_x\trecon_y\tdep_unpaired\tdep_paired\tsurrogate\tpenalty\tobjective\tpi_iters");
  EXPECT_NE(text.find("2\t0\t0\t0\t0\t0\t0\t1.5\t7\n"), std::string::npos);
}
