#pragma once

#include "dmae/linalg.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dmae {

enum class Activation { tanh, relu, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

// One affine layer followed by an elementwise activation: act(X W + b).
// weights is (in x out) so that a batch multiplies from the left.
struct Layer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::identity;

  [[nodiscard]] Eigen::Index in_dim() const { return weights.rows(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weights.cols(); }
};

// Encoder g and decoder f of one view. The decoder mirrors the encoder so the
// reconstruction lives in the input space.
struct AutoencoderParams {
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;

  [[nodiscard]] Eigen::Index input_dim() const;
  [[nodiscard]] Eigen::Index latent_dim() const;
  [[nodiscard]] std::size_t parameter_count() const;

  // Throws ShapeError/DataError when layers do not chain or hold non-finite values.
  void validate() const;

  friend bool operator==(const AutoencoderParams&, const AutoencoderParams&);
};

struct ArchitectureOptions {
  Eigen::Index input_dim = 0;
  Eigen::Index latent_dim = 64;
  // Encoder depth; hidden widths are geometric between input_dim and latent_dim
  // unless hidden_widths is given (depth - 1 entries).
  int depth = 3;
  std::vector<Eigen::Index> hidden_widths;
  Activation hidden_activation = Activation::tanh;
  Activation latent_activation = Activation::identity;
  Activation output_activation = Activation::identity;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
AutoencoderParams make_autoencoder(const ArchitectureOptions& arch, std::uint64_t seed);

// Widths of every encoder boundary, input first and latent last.
std::vector<Eigen::Index> geometric_widths(Eigen::Index input_dim, Eigen::Index latent_dim,
                                           int depth);

Matrix encode(const AutoencoderParams& params, const Matrix& X);
Matrix decode(const AutoencoderParams& params, const Matrix& Z);

// sum_i |x_i - f(g(x_i))|^2
double recon_loss(const AutoencoderParams& params, const Matrix& X);

struct LayerGrad {
  Matrix weights;
  Vector bias;
};

struct GradientBundle {
  std::vector<LayerGrad> encoder;
  std::vector<LayerGrad> decoder;
  // d objective / d g(x_i), rows aligned with the input batch.
  Matrix latent_grad;
};

// Gradient of  recon_weight * recon_loss(X) + <latent_grad, encode(X)>.
// The dependence term enters only through latent_grad.
GradientBundle backward(const AutoencoderParams& params, const Matrix& X,
                        const Matrix& latent_grad, double recon_weight);

using BackwardFn = std::function<GradientBundle(const AutoencoderParams&, const Matrix&,
                                                const Matrix&, double)>;

// Scalar whose gradient backward() returns; used by grad_check.
double linearized_objective(const AutoencoderParams& params, const Matrix& X,
                            const Matrix& latent_grad, double recon_weight);

// Max over parameters of |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
// using central differences with step eps.
double grad_check(const AutoencoderParams& params, const Matrix& X, const Matrix& latent_grad,
                  double recon_weight, double eps, const BackwardFn& grad_fn = backward);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<LayerGrad> m_enc, v_enc, m_dec, v_dec;
};

AdamState make_adam_state(const AutoencoderParams& params);

// One Adam update in place. A non-finite gradient throws NumericalError and
// leaves params and state untouched.
void adam_step(AutoencoderParams& params, const GradientBundle& grads, double lr,
               AdamState& state);

struct PretrainOptions {
  int epochs = 0;
  double lr = 1e-3;
  // When set, any epoch whose loss exceeds the previous one by more than
  // monotone_tol * max(1, loss) throws NumericalError with the trace.
  bool check_monotone = false;
  double monotone_tol = 1e-9;
};

struct PretrainResult {
  AutoencoderParams params;
  AdamState optimizer;
  // Loss before the first epoch followed by the loss after each epoch.
  std::vector<double> loss_trace;
};

// Full-batch Adam on the reconstruction loss alone.
PretrainResult pretrain(AutoencoderParams params, const Matrix& X, const PretrainOptions& opts);

// Per-feature standardization fitted on a training pool.
struct FeatureScaler {
  Vector mean;
  Vector scale;

  static FeatureScaler fit(const Matrix& X);
  static FeatureScaler identity(Eigen::Index dim);
  [[nodiscard]] Matrix apply(const Matrix& X) const;
};

// Plain-text checkpoints using shortest round-trip decimal formatting.
void write_autoencoder(std::ostream& out, const AutoencoderParams& params);
AutoencoderParams read_autoencoder(std::istream& in);
void write_scaler(std::ostream& out, const FeatureScaler& scaler);
FeatureScaler read_scaler(std::istream& in);

// Shared helpers for the text formats.
std::string format_double(double v);
double parse_double(std::string_view token);

}  // namespace dmae
