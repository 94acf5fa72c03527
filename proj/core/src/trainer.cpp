#include "dmae/trainer.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace dmae {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t { theta_x = 1, theta_y = 2, pi = 3 };

std::uint64_t derive_seed(std::uint64_t seed, Stream s) {
  return splitmix64(seed ^ (static_cast<std::uint64_t>(s) * 0xD1B54A32D192ED03ULL));
}

bool unpaired_active(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg) {
  return cfg.mode != TrainMode::supervised && model.pi.has_value() && data.n_unpaired_x() > 0;
}

bool paired_active(const SplitDataset& data, const TrainConfig& cfg) {
  return cfg.mode != TrainMode::unsupervised && data.n_paired() > 0;
}

Matrix identity_pi(std::size_t n) {
  return Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

struct Latents {
  Matrix ux, uy, px, py;
};

Latents latents_of(const DmaeModel& model, const SplitDataset& data) {
  Latents z;
  if (data.n_unpaired_x() > 0) z.ux = encode(model.theta_x, data.unpaired_x);
  if (data.n_unpaired_y() > 0) z.uy = encode(model.theta_y, data.unpaired_y);
  if (data.n_paired() > 0) {
    z.px = encode(model.theta_x, data.paired_x);
    z.py = encode(model.theta_y, data.paired_y);
  }
  return z;
}

Matrix vstack(const Matrix& top, const Matrix& bottom, Eigen::Index cols) {
  Matrix out(top.rows() + bottom.rows(), cols);
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  if (bottom.rows() > 0) out.bottomRows(bottom.rows()) = bottom;
  return out;
}

const Vector* alpha_ptr(const std::optional<Vector>& a) { return a ? &*a : nullptr; }

double rel_change(double prev, double cur) {
  return std::abs(cur - prev) / std::max(std::abs(prev), 1e-12);
}

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::unsupervised:
      return "unsupervised";
    case TrainMode::semisupervised:
      return "semisupervised";
    case TrainMode::supervised:
      return "supervised";
  }
  return "unsupervised";
}

TrainMode train_mode_from_string(std::string_view s) {
  if (s == "unsupervised") return TrainMode::unsupervised;
  if (s == "semisupervised") return TrainMode::semisupervised;
  if (s == "supervised") return TrainMode::supervised;
  throw ParameterError("unknown training mode '" + std::string(s) + "'");
}

std::string_view to_string(ThetaGuard g) {
  switch (g) {
    case ThetaGuard::off:
      return "off";
    case ThetaGuard::round:
      return "round";
    case ThetaGuard::epoch:
      return "epoch";
  }
  return "off";
}

ThetaGuard theta_guard_from_string(std::string_view s) {
  if (s == "off") return ThetaGuard::off;
  if (s == "round") return ThetaGuard::round;
  if (s == "epoch") return ThetaGuard::epoch;
  throw ParameterError("unknown theta_guard '" + std::string(s) + "'");
}

DependenceConfig TrainConfig::dependence() const {
  return {measure, sigma2_x, sigma2_y, lambda_ridge};
}

PiSolverConfig TrainConfig::solver() const {
  PiSolverConfig s = pi_solver;
  s.lambda_pi = lambda_pi;
  return s;
}

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* key) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError(std::string(key) + " must be nonnegative");
  };
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string(key) + " must be positive");
  };
  nonneg(lambda_dep, "lambda_dep");
  if (lambda_dep_paired >= 0.0) nonneg(lambda_dep_paired, "lambda_dep_paired");
  nonneg(lambda_pi, "lambda_pi");
  positive(sigma2_x, "sigma2_x");
  positive(sigma2_y, "sigma2_y");
  nonneg(lambda_ridge, "lambda_ridge");
  nonneg(lr, "lr");
  positive(tol, "tol");
  if (latent_dim < 1) throw ParameterError("latent_dim must be positive");
  if (depth < 1) throw ParameterError("depth must be positive");
  if (pretrain_epochs < 0) throw ParameterError("pretrain_epochs must be nonnegative");
  if (outer_rounds < 1) throw ParameterError("outer_rounds must be at least 1");
  if (theta_epochs_per_round < 0) throw ParameterError("theta_epochs_per_round must be nonnegative");
  solver().validate();
}

void TrainConfig::validate_for(const SplitDataset& data) const {
  validate();
  if (data.mode != pairing) {
    throw ParameterError("dataset pairing mode does not match config pairing");
  }
  const std::size_t nu = data.n_unpaired_x();
  const std::size_t mu = data.n_unpaired_y();
  const std::size_t np = data.n_paired();
  switch (mode) {
    case TrainMode::unsupervised:
      if (np != 0) throw ParameterError("unsupervised mode requires no paired rows");
      if (nu == 0 || mu == 0) throw ParameterError("unsupervised mode requires unpaired rows in both views");
      break;
    case TrainMode::semisupervised:
      if (np == 0) throw ParameterError("semisupervised mode requires paired rows");
      if (nu == 0 || mu == 0) throw ParameterError("semisupervised mode requires unpaired rows in both views");
      break;
    case TrainMode::supervised:
      if (nu != 0 || mu != 0) throw ParameterError("supervised mode requires no unpaired rows");
      if (np == 0) throw ParameterError("supervised mode requires paired rows");
      break;
  }
  if (pairing == PairingMode::one_one && nu != mu) {
    throw ParameterError("one_one pairing needs equal unpaired pool sizes (got " + std::to_string(nu) +
                         " and " + std::to_string(mu) + "); use many_one for unequal pools");
  }
  if (data.paired_x.rows() != data.paired_y.rows()) {
    throw ShapeError("paired pools must have the same number of rows");
  }
}

Matrix DmaeModel::embed_x(const Matrix& raw) const { return encode(theta_x, scaler_x.apply(raw)); }
Matrix DmaeModel::embed_y(const Matrix& raw) const { return encode(theta_y, scaler_y.apply(raw)); }

SplitDataset prepare(const DmaeModel& model, const SplitDataset& raw) {
  SplitDataset d = raw;
  auto scale = [](Matrix& m, const FeatureScaler& s) {
    if (m.rows() > 0) m = s.apply(m);
  };
  scale(d.paired_x, model.scaler_x);
  scale(d.unpaired_x, model.scaler_x);
  scale(d.test_x, model.scaler_x);
  scale(d.paired_y, model.scaler_y);
  scale(d.unpaired_y, model.scaler_y);
  scale(d.test_y, model.scaler_y);
  return d;
}

FrozenAlphas fit_alphas(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg) {
  FrozenAlphas out;
  if (model.dependence.measure != Measure::smi) return out;
  const Latents z = latents_of(model, data);
  const DependenceConfig& dep = model.dependence;
  if (unpaired_active(model, data, cfg)) {
    const GramMatrix K = gram_gaussian(z.ux, dep.sigma2_x);
    const GramMatrix L = gram_gaussian(z.uy, dep.sigma2_y);
    out.unpaired = fit_smi(K, L, model.pi->values, dep.lambda_ridge).alpha;
  }
  if (paired_active(data, cfg)) {
    const GramMatrix K = gram_gaussian(z.px, dep.sigma2_x);
    const GramMatrix L = gram_gaussian(z.py, dep.sigma2_y);
    out.paired = fit_smi(K, L, identity_pi(data.n_paired()), dep.lambda_ridge).alpha;
  }
  return out;
}

namespace {

ObjectiveTerms terms_with(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg,
                          const FrozenAlphas& alphas) {
  ObjectiveTerms t;
  t.recon_x = recon_loss(model.theta_x, data.train_x());
  t.recon_y = recon_loss(model.theta_y, data.train_y());
  const Latents z = latents_of(model, data);
  if (unpaired_active(model, data, cfg)) {
    t.dependence_unpaired =
        dependence_value(model.dependence, z.ux, z.uy, model.pi->values, alpha_ptr(alphas.unpaired));
  }
  if (paired_active(data, cfg)) {
    t.dependence_paired = dependence_value(model.dependence, z.px, z.py, identity_pi(data.n_paired()),
                                           alpha_ptr(alphas.paired));
  }
  t.total = t.recon_x + t.recon_y - cfg.lambda_dep * t.dependence_unpaired -
            cfg.paired_weight() * t.dependence_paired;
  return t;
}

}  // namespace

ObjectiveTerms objective_terms(const DmaeModel& model, const SplitDataset& data,
                               const TrainConfig& cfg) {
  return terms_with(model, data, cfg, fit_alphas(model, data, cfg));
}

double objective(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg) {
  return objective_terms(model, data, cfg).total;
}

double objective_frozen(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg,
                        const FrozenAlphas& alphas) {
  return terms_with(model, data, cfg, alphas).total;
}

ObjectiveGradient objective_gradient(const DmaeModel& model, const SplitDataset& data,
                                     const TrainConfig& cfg, const FrozenAlphas& alphas) {
  const Latents z = latents_of(model, data);
  const Eigen::Index dz_x = model.theta_x.latent_dim();
  const Eigen::Index dz_y = model.theta_y.latent_dim();
  Matrix gux = Matrix::Zero(static_cast<Eigen::Index>(data.n_unpaired_x()), dz_x);
  Matrix guy = Matrix::Zero(static_cast<Eigen::Index>(data.n_unpaired_y()), dz_y);
  Matrix gpx = Matrix::Zero(static_cast<Eigen::Index>(data.n_paired()), dz_x);
  Matrix gpy = Matrix::Zero(static_cast<Eigen::Index>(data.n_paired()), dz_y);

  if (unpaired_active(model, data, cfg) && cfg.lambda_dep != 0.0) {
    const LatentGradients g =
        dep_grad_latent(model.dependence, z.ux, z.uy, model.pi->values, alpha_ptr(alphas.unpaired));
    gux = -cfg.lambda_dep * g.dx;
    guy = -cfg.lambda_dep * g.dy;
  }
  if (paired_active(data, cfg) && cfg.paired_weight() != 0.0) {
    const LatentGradients g = dep_grad_latent(model.dependence, z.px, z.py,
                                              identity_pi(data.n_paired()), alpha_ptr(alphas.paired));
    gpx = -cfg.paired_weight() * g.dx;
    gpy = -cfg.paired_weight() * g.dy;
  }
  ObjectiveGradient out;
  out.x = backward(model.theta_x, data.train_x(), vstack(gux, gpx, dz_x), 1.0);
  out.y = backward(model.theta_y, data.train_y(), vstack(guy, gpy, dz_y), 1.0);
  return out;
}

void theta_step(DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg) {
  const bool dep_active = (unpaired_active(model, data, cfg) && cfg.lambda_dep != 0.0) ||
                          (paired_active(data, cfg) && cfg.paired_weight() != 0.0);
  const ThetaGuard guard = dep_active ? cfg.theta_guard : ThetaGuard::off;
  const DmaeModel start = guard == ThetaGuard::round ? model : DmaeModel{};
  double before = guard == ThetaGuard::off ? 0.0 : objective(model, data, cfg);
  for (int epoch = 0; epoch < cfg.theta_epochs_per_round; ++epoch) {
    const FrozenAlphas alphas = fit_alphas(model, data, cfg);
    const ObjectiveGradient g = objective_gradient(model, data, cfg, alphas);
    if (guard == ThetaGuard::epoch) {
      const auto tx = model.theta_x, ty = model.theta_y;
      const auto ox = model.opt_x, oy = model.opt_y;
      adam_step(model.theta_x, g.x, cfg.lr, model.opt_x);
      adam_step(model.theta_y, g.y, cfg.lr, model.opt_y);
      const double after = objective(model, data, cfg);
      if (after > before) {
        model.theta_x = tx; model.theta_y = ty; model.opt_x = ox; model.opt_y = oy;
        return;
      }
      before = after;
    } else {
      adam_step(model.theta_x, g.x, cfg.lr, model.opt_x);
      adam_step(model.theta_y, g.y, cfg.lr, model.opt_y);
    }
  }
  if (guard == ThetaGuard::round && objective(model, data, cfg) > before) {
    model.theta_x = start.theta_x;
    model.theta_y = start.theta_y;
    model.opt_x = start.opt_x;
    model.opt_y = start.opt_y;
  }
}

PiStepResult pi_step(DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg) {
  PiStepResult result;
  if (!unpaired_active(model, data, cfg)) return result;
  const Matrix zx = encode(model.theta_x, data.unpaired_x);
  const Matrix zy = encode(model.theta_y, data.unpaired_y);
  const GramMatrix K = gram_gaussian(zx, model.dependence.sigma2_x);
  const GramMatrix L = gram_gaussian(zy, model.dependence.sigma2_y);
  const PiSolverConfig solver = cfg.solver();

  if (model.dependence.measure == Measure::ukta) {
    if (model.pi->mode == PairingMode::one_one) {
      result = pi_step_kta(K, L, *model.pi, solver);
    } else {
      // The Frobenius surrogate is square-only; rectangular uKTA ascends the
      // trace form directly (alpha = 1).
      result = pi_step_smi(K, L, *model.pi, Vector::Ones(K.size()), solver);
    }
  } else {
    const DensityRatioModel ratio = fit_smi(K, L, model.pi->values, model.dependence.lambda_ridge);
    result = pi_step_smi(K, L, *model.pi, ratio.alpha, solver);
  }
  model.pi = result.pi;
  model.pi_iterations += result.iterations;
  model.pi_traces.push_back(result.trace);
  return result;
}

DmaeModel train(const SplitDataset& raw, const TrainConfig& cfg) {
  cfg.validate_for(raw);
  const auto t0 = std::chrono::steady_clock::now();

  DmaeModel model;
  const Matrix train_x = raw.train_x();
  const Matrix train_y = raw.train_y();
  model.scaler_x = cfg.standardize ? FeatureScaler::fit(train_x) : FeatureScaler::identity(train_x.cols());
  model.scaler_y = cfg.standardize ? FeatureScaler::fit(train_y) : FeatureScaler::identity(train_y.cols());
  const SplitDataset data = prepare(model, raw);

  ArchitectureOptions arch_x;
  arch_x.input_dim = data.d_x();
  arch_x.latent_dim = cfg.latent_dim;
  arch_x.depth = cfg.depth;
  arch_x.hidden_activation = cfg.hidden_activation;
  arch_x.hidden_widths = cfg.hidden_widths;
  ArchitectureOptions arch_y = arch_x;
  arch_y.input_dim = data.d_y();

  PretrainOptions pre;
  pre.epochs = cfg.pretrain_epochs;
  pre.lr = cfg.lr;
  try {
    PretrainResult px = pretrain(make_autoencoder(arch_x, derive_seed(cfg.seed, Stream::theta_x)),
                                 data.train_x(), pre);
    PretrainResult py = pretrain(make_autoencoder(arch_y, derive_seed(cfg.seed, Stream::theta_y)),
                                 data.train_y(), pre);
    model.theta_x = std::move(px.params);
    model.opt_x = std::move(px.optimizer);
    model.theta_y = std::move(py.params);
    model.opt_y = std::move(py.optimizer);
  } catch (const NumericalError& e) {
    throw TrainingError(std::string("pretraining diverged: ") + e.what(), {});
  }

  model.dependence = cfg.dependence();
  if (cfg.median_heuristic) {
    model.dependence.sigma2_x = median_sigma2(encode(model.theta_x, data.train_x()));
    model.dependence.sigma2_y = median_sigma2(encode(model.theta_y, data.train_y()));
    spdlog::info("median heuristic widths: sigma2_x={:.6g} sigma2_y={:.6g}", model.dependence.sigma2_x,
                 model.dependence.sigma2_y);
  }

  if (cfg.mode != TrainMode::supervised) {
    model.pi = init_pi(data.n_unpaired_x(), data.n_unpaired_y(), cfg.pairing,
                       derive_seed(cfg.seed, Stream::pi));
  }

  double prev = objective(model, data, cfg);
  for (int round = 1; round <= cfg.outer_rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    try {
      theta_step(model, data, cfg);
      const PiStepResult pr = pi_step(model, data, cfg);
      const ObjectiveTerms terms = objective_terms(model, data, cfg);
      rec.recon_x = terms.recon_x;
      rec.recon_y = terms.recon_y;
      rec.dependence_unpaired = terms.dependence_unpaired;
      rec.dependence_paired = terms.dependence_paired;
      rec.objective = terms.total;
      rec.surrogate = pr.trace.empty() ? 0.0 : pr.trace.back();
      rec.penalty = pr.penalty;
      rec.pi_iterations = pr.iterations;
    } catch (const NumericalError& e) {
      throw TrainingError("round " + std::to_string(round) + ": " + e.what(), model.history);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.objective)) {
      model.history.push_back(rec);
      throw TrainingError("round " + std::to_string(round) + ": objective is not finite", model.history);
    }
    model.history.push_back(rec);
    const double change = rel_change(prev, rec.objective);
    prev = rec.objective;
    if (change < cfg.tol) break;
  }
  return model;
}

void write_history(std::ostream& out, const std::vector<RoundRecord>& history) {
  out << "round\trecon_x\trecon_y\tdep_unpaired\tdep_paired\tsurrogate\tpenalty\tobjective\tpi_iters\n";
  for (const RoundRecord& r : history) {
    out << r.round << '\t' << format_double(r.recon_x) << '\t' << format_double(r.recon_y) << '\t'
        << format_double(r.dependence_unpaired) << '\t' << format_double(r.dependence_paired) << '\t'
        << format_double(r.surrogate) << '\t' << format_double(r.penalty) << '\t'
        << format_double(r.objective) << '\t' << r.pi_iterations << '\n';
  }
}

void write_model(std::ostream& out, const DmaeModel& model) {
  out << "dmae-model 1\n";
  out << "measure " << to_string(model.dependence.measure) << '\n';
  out << "sigma2_x " << format_double(model.dependence.sigma2_x) << '\n';
  out << "sigma2_y " << format_double(model.dependence.sigma2_y) << '\n';
  out << "lambda_ridge " << format_double(model.dependence.lambda_ridge) << '\n';
  out << "view x\n";
  write_scaler(out, model.scaler_x);
  write_autoencoder(out, model.theta_x);
  out << "view y\n";
  write_scaler(out, model.scaler_y);
  write_autoencoder(out, model.theta_y);
}

DmaeModel read_model(std::istream& in) {
  auto expect = [&in](const char* want) {
    std::string tok;
    if (!(in >> tok) || tok != want) {
      throw DataError(std::string("model checkpoint: expected '") + want + "', found '" + tok + "'");
    }
  };
  auto read_real = [&in, &expect](const char* key) {
    expect(key);
    std::string tok;
    if (!(in >> tok)) throw DataError("model checkpoint truncated");
    return parse_double(tok);
  };
  expect("dmae-model");
  int version = 0;
  if (!(in >> version) || version != 1) throw DataError("model checkpoint: unsupported version");
  DmaeModel model;
  expect("measure");
  std::string measure;
  in >> measure;
  model.dependence.measure = measure_from_string(measure);
  model.dependence.sigma2_x = read_real("sigma2_x");
  model.dependence.sigma2_y = read_real("sigma2_y");
  model.dependence.lambda_ridge = read_real("lambda_ridge");
  expect("view");
  expect("x");
  model.scaler_x = read_scaler(in);
  model.theta_x = read_autoencoder(in);
  expect("view");
  expect("y");
  model.scaler_y = read_scaler(in);
  model.theta_y = read_autoencoder(in);
  model.opt_x = make_adam_state(model.theta_x);
  model.opt_y = make_adam_state(model.theta_y);
  return model;
}

}  // namespace dmae
