#pragma once

#include "dmae/autoencoder.hpp"
#include "dmae/dataio.hpp"
#include "dmae/dependence.hpp"
#include "dmae/errors.hpp"
#include "dmae/matching.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace dmae {

enum class TrainMode { unsupervised, semisupervised, supervised };

// Safeguard on the Theta-step: with a dependence term active, an update that
// raises the objective (SMI coefficients refit) is undone. "round" checks
// once per Theta-step, "epoch" after every epoch and stops at the first rise.
enum class ThetaGuard { off, round, epoch };

std::string_view to_string(ThetaGuard g);
ThetaGuard theta_guard_from_string(std::string_view s);

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);

struct TrainConfig {
  Measure measure = Measure::smi;
  TrainMode mode = TrainMode::unsupervised;
  PairingMode pairing = PairingMode::one_one;

  // Weight of the dependence term on unpaired latents.
  double lambda_dep = 0.7;
  // Weight of the dependence term on paired latents; negative means lambda_dep.
  double lambda_dep_paired = -1.0;
  double lambda_pi = 1.0;
  double sigma2_x = 2.5;
  double sigma2_y = 0.5;
  // Replace sigma2_x / sigma2_y by the median heuristic on pretrained latents.
  bool median_heuristic = false;
  double lambda_ridge = 0.1;

  int latent_dim = 64;
  int depth = 3;
  // Encoder hidden widths (depth - 1 entries); empty selects geometric widths.
  std::vector<Eigen::Index> hidden_widths;
  Activation hidden_activation = Activation::tanh;
  bool standardize = true;

  int pretrain_epochs = 500;
  int outer_rounds = 50;
  int theta_epochs_per_round = 5;
  double lr = 1e-3;
  double tol = 1e-5;
  ThetaGuard theta_guard = ThetaGuard::epoch;
  std::uint64_t seed = 0;

  // lambda_pi above overrides pi_solver.lambda_pi.
  PiSolverConfig pi_solver;

  [[nodiscard]] double paired_weight() const {
    return lambda_dep_paired < 0.0 ? lambda_dep : lambda_dep_paired;
  }
  [[nodiscard]] DependenceConfig dependence() const;
  [[nodiscard]] PiSolverConfig solver() const;

  // Range checks on every field.
  void validate() const;
  // Consistency between mode, pairing and the pools actually present.
  void validate_for(const SplitDataset& data) const;
};

struct RoundRecord {
  int round = 0;
  double recon_x = 0.0;
  double recon_y = 0.0;
  double dependence_unpaired = 0.0;
  double dependence_paired = 0.0;
  // Final F (uKTA) or G (SMI) of the round's Pi-step; 0 when Pi is absent.
  double surrogate = 0.0;
  double objective = 0.0;
  double penalty = 0.0;
  int pi_iterations = 0;
  double wall_seconds = 0.0;
};

struct DmaeModel {
  AutoencoderParams theta_x;
  AutoencoderParams theta_y;
  FeatureScaler scaler_x;
  FeatureScaler scaler_y;
  AdamState opt_x;
  AdamState opt_y;
  // Effective widths and ridge (after any median heuristic).
  DependenceConfig dependence;
  std::optional<RelaxedPermutation> pi;
  std::int64_t pi_iterations = 0;
  std::vector<RoundRecord> history;
  // Every Pi-step objective trace, in order.
  std::vector<std::vector<double>> pi_traces;

  // Raw features -> latent codes, applying the stored standardization.
  [[nodiscard]] Matrix embed_x(const Matrix& raw) const;
  [[nodiscard]] Matrix embed_y(const Matrix& raw) const;
};

// Raised when training diverges; carries the rounds completed so far.
class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, std::vector<RoundRecord> history)
      : NumericalError(what), history_(std::move(history)) {}
  [[nodiscard]] const std::vector<RoundRecord>& history() const { return history_; }

 private:
  std::vector<RoundRecord> history_;
};

// Applies the model's scalers to every pool. objective, theta_step and
// pi_step expect data in this standardized form.
SplitDataset prepare(const DmaeModel& model, const SplitDataset& raw);

struct ObjectiveTerms {
  double recon_x = 0.0;
  double recon_y = 0.0;
  double dependence_unpaired = 0.0;
  double dependence_paired = 0.0;
  double total = 0.0;
};

// recon_x + recon_y - lambda_dep * D_Pi(unpaired) - lambda_paired * D(paired, identity).
// SMI coefficients are fitted against the current latents.
ObjectiveTerms objective_terms(const DmaeModel& model, const SplitDataset& data,
                               const TrainConfig& cfg);
double objective(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg);

// theta_epochs_per_round full-batch Adam steps on both views with Pi frozen.
void theta_step(DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg);

// One Pi solve on the unpaired block with the autoencoders frozen. Returns the
// solver result (empty trace in supervised mode, where this is a no-op).
PiStepResult pi_step(DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg);

// Gradient of the full objective with respect to every autoencoder parameter,
// with SMI coefficients frozen at `alpha_*` (fitted when null).
struct ObjectiveGradient {
  GradientBundle x;
  GradientBundle y;
};
struct FrozenAlphas {
  std::optional<Vector> unpaired;
  std::optional<Vector> paired;
};
FrozenAlphas fit_alphas(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg);
ObjectiveGradient objective_gradient(const DmaeModel& model, const SplitDataset& data,
                                     const TrainConfig& cfg, const FrozenAlphas& alphas);
double objective_frozen(const DmaeModel& model, const SplitDataset& data, const TrainConfig& cfg,
                        const FrozenAlphas& alphas);

// Pretrain both views, initialize Pi, then alternate theta_step and pi_step
// until the relative objective change drops below tol or outer_rounds.
DmaeModel train(const SplitDataset& raw, const TrainConfig& cfg);

// Tab-separated per-round history (deterministic columns only).
void write_history(std::ostream& out, const std::vector<RoundRecord>& history);
void write_model(std::ostream& out, const DmaeModel& model);
DmaeModel read_model(std::istream& in);

}  // namespace dmae
