#include "dmae/autoencoder.hpp"

#include "dmae/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace dmae {

namespace {

Matrix apply_activation(Matrix pre, Activation a) {
  switch (a) {
    case Activation::tanh:
      return pre.array().tanh().matrix();
    case Activation::relu:
      return pre.cwiseMax(0.0);
    case Activation::identity:
      return pre;
  }
  return pre;
}

// d act / d pre, expressed through the activation output where possible.
Matrix activation_derivative(const Matrix& pre, const Matrix& out, Activation a) {
  switch (a) {
    case Activation::tanh:
      return (1.0 - out.array().square()).matrix();
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::identity:
      return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

struct LayerCache {
  Matrix input;
  Matrix pre;
  Matrix out;
};

Matrix forward_layers(const std::vector<Layer>& layers, const Matrix& X,
                      std::vector<LayerCache>* cache) {
  Matrix h = X;
  for (const Layer& layer : layers) {
    if (h.cols() != layer.in_dim()) {
      std::ostringstream msg;
      msg << "layer expects " << layer.in_dim() << " inputs, got " << h.cols();
      throw ShapeError(msg.str());
    }
    Matrix pre = h * layer.weights;
    pre.rowwise() += layer.bias.transpose();
    Matrix out = apply_activation(pre, layer.activation);
    if (cache != nullptr) {
      cache->push_back({std::move(h), std::move(pre), out});
    }
    h = std::move(out);
  }
  return h;
}

// Back-propagates d/d(output) through cached layers, filling grads and
// returning d/d(input).
Matrix backward_layers(const std::vector<Layer>& layers, const std::vector<LayerCache>& cache,
                       Matrix upstream, std::vector<LayerGrad>& grads) {
  grads.resize(layers.size());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const LayerCache& c = cache[k];
    const Matrix delta =
        upstream.cwiseProduct(activation_derivative(c.pre, c.out, layers[k].activation));
    grads[k].weights = c.input.transpose() * delta;
    grads[k].bias = delta.colwise().sum().transpose();
    upstream = delta * layers[k].weights.transpose();
  }
  return upstream;
}

template <typename ParamsT, typename Fn>
void for_each_block(ParamsT& params, Fn&& fn) {
  for (auto& layer : params.encoder) {
    fn(layer.weights);
    fn(layer.bias);
  }
  for (auto& layer : params.decoder) {
    fn(layer.weights);
    fn(layer.bias);
  }
}

std::vector<LayerGrad> zeros_like(const std::vector<Layer>& layers) {
  std::vector<LayerGrad> out;
  out.reserve(layers.size());
  for (const Layer& l : layers) {
    out.push_back({Matrix::Zero(l.in_dim(), l.out_dim()), Vector::Zero(l.out_dim())});
  }
  return out;
}

bool grads_finite(const std::vector<LayerGrad>& g) {
  return std::all_of(g.begin(), g.end(), [](const LayerGrad& lg) {
    return lg.weights.allFinite() && lg.bias.allFinite();
  });
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ParameterError("unknown activation '" + std::string(s) + "'");
}

Eigen::Index AutoencoderParams::input_dim() const {
  return encoder.empty() ? 0 : encoder.front().in_dim();
}

Eigen::Index AutoencoderParams::latent_dim() const {
  return encoder.empty() ? 0 : encoder.back().out_dim();
}

std::size_t AutoencoderParams::parameter_count() const {
  std::size_t count = 0;
  for_each_block(*this, [&](const auto& block) { count += static_cast<std::size_t>(block.size()); });
  return count;
}

void AutoencoderParams::validate() const {
  if (encoder.empty() || decoder.empty()) {
    throw ShapeError("autoencoder needs at least one encoder and one decoder layer");
  }
  auto check_chain = [](const std::vector<Layer>& layers, const char* which) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].bias.size() != layers[k].out_dim()) {
        throw ShapeError(std::string(which) + ": bias length does not match layer width");
      }
      if (k > 0 && layers[k].in_dim() != layers[k - 1].out_dim()) {
        throw ShapeError(std::string(which) + ": consecutive layers do not chain");
      }
      if (!layers[k].weights.allFinite() || !layers[k].bias.allFinite()) {
        throw DataError(std::string(which) + ": non-finite parameter");
      }
    }
  };
  check_chain(encoder, "encoder");
  check_chain(decoder, "decoder");
  if (decoder.front().in_dim() != latent_dim()) {
    throw ShapeError("decoder input does not match latent dimension");
  }
  if (decoder.back().out_dim() != input_dim()) {
    throw ShapeError("decoder output does not match encoder input dimension");
  }
}

bool operator==(const AutoencoderParams& a, const AutoencoderParams& b) {
  auto same = [](const std::vector<Layer>& x, const std::vector<Layer>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k].activation != y[k].activation || x[k].weights.rows() != y[k].weights.rows() ||
          x[k].weights.cols() != y[k].weights.cols() || x[k].weights != y[k].weights ||
          x[k].bias != y[k].bias) {
        return false;
      }
    }
    return true;
  };
  return same(a.encoder, b.encoder) && same(a.decoder, b.decoder);
}

std::vector<Eigen::Index> geometric_widths(Eigen::Index input_dim, Eigen::Index latent_dim,
                                           int depth) {
  if (input_dim < 1 || latent_dim < 1 || depth < 1) {
    throw ParameterError("geometric_widths: dimensions and depth must be positive");
  }
  std::vector<Eigen::Index> widths(static_cast<std::size_t>(depth) + 1);
  widths.front() = input_dim;
  widths.back() = latent_dim;
  const double lin = std::log(static_cast<double>(input_dim));
  const double lout = std::log(static_cast<double>(latent_dim));
  for (int k = 1; k < depth; ++k) {
    const double t = static_cast<double>(k) / depth;
    widths[static_cast<std::size_t>(k)] = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::lround(std::exp((1.0 - t) * lin + t * lout))));
  }
  return widths;
}

AutoencoderParams make_autoencoder(const ArchitectureOptions& arch, std::uint64_t seed) {
  std::vector<Eigen::Index> widths;
  if (arch.hidden_widths.empty()) {
    widths = geometric_widths(arch.input_dim, arch.latent_dim, arch.depth);
  } else {
    if (static_cast<int>(arch.hidden_widths.size()) != arch.depth - 1) {
      throw ParameterError("hidden_widths must have depth - 1 entries");
    }
    widths.push_back(arch.input_dim);
    widths.insert(widths.end(), arch.hidden_widths.begin(), arch.hidden_widths.end());
    widths.push_back(arch.latent_dim);
  }
  for (Eigen::Index w : widths) {
    if (w < 1) throw ParameterError("layer widths must be positive");
  }

  std::mt19937_64 rng(seed);
  auto make_layer = [&](Eigen::Index in, Eigen::Index out, Activation act) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer;
    layer.weights.resize(in, out);
    for (Eigen::Index i = 0; i < in; ++i) {
      for (Eigen::Index j = 0; j < out; ++j) layer.weights(i, j) = dist(rng);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = act;
    return layer;
  };

  AutoencoderParams params;
  const std::size_t depth = widths.size() - 1;
  for (std::size_t k = 0; k < depth; ++k) {
    const Activation act = (k + 1 == depth) ? arch.latent_activation : arch.hidden_activation;
    params.encoder.push_back(make_layer(widths[k], widths[k + 1], act));
  }
  for (std::size_t k = depth; k > 0; --k) {
    const Activation act = (k == 1) ? arch.output_activation : arch.hidden_activation;
    params.decoder.push_back(make_layer(widths[k], widths[k - 1], act));
  }
  return params;
}

Matrix encode(const AutoencoderParams& params, const Matrix& X) {
  if (X.cols() != params.input_dim()) {
    throw ShapeError("encode: input has " + std::to_string(X.cols()) + " columns, network expects " +
                     std::to_string(params.input_dim()));
  }
  return forward_layers(params.encoder, X, nullptr);
}

Matrix decode(const AutoencoderParams& params, const Matrix& Z) {
  if (Z.cols() != params.latent_dim()) {
    throw ShapeError("decode: latent has " + std::to_string(Z.cols()) + " columns, network expects " +
                     std::to_string(params.latent_dim()));
  }
  return forward_layers(params.decoder, Z, nullptr);
}

double recon_loss(const AutoencoderParams& params, const Matrix& X) {
  if (X.rows() == 0) return 0.0;
  return (X - decode(params, encode(params, X))).squaredNorm();
}

double linearized_objective(const AutoencoderParams& params, const Matrix& X,
                            const Matrix& latent_grad, double recon_weight) {
  if (X.rows() == 0) return 0.0;
  const Matrix Z = encode(params, X);
  if (latent_grad.rows() != Z.rows() || latent_grad.cols() != Z.cols()) {
    throw ShapeError("linearized_objective: latent_grad shape mismatch");
  }
  const double rec = (X - decode(params, Z)).squaredNorm();
  return recon_weight * rec + latent_grad.cwiseProduct(Z).sum();
}

GradientBundle backward(const AutoencoderParams& params, const Matrix& X,
                        const Matrix& latent_grad, double recon_weight) {
  if (X.cols() != params.input_dim()) {
    throw ShapeError("backward: input width does not match the network");
  }
  if (latent_grad.rows() != X.rows() || latent_grad.cols() != params.latent_dim()) {
    throw ShapeError("backward: latent_grad must be n x latent_dim");
  }
  GradientBundle grads;
  if (X.rows() == 0) {
    grads.encoder = zeros_like(params.encoder);
    grads.decoder = zeros_like(params.decoder);
    grads.latent_grad = latent_grad;
    return grads;
  }

  std::vector<LayerCache> enc_cache;
  std::vector<LayerCache> dec_cache;
  const Matrix Z = forward_layers(params.encoder, X, &enc_cache);
  const Matrix Xhat = forward_layers(params.decoder, Z, &dec_cache);

  const Matrix d_out = -2.0 * recon_weight * (X - Xhat);
  Matrix d_latent = backward_layers(params.decoder, dec_cache, d_out, grads.decoder);
  d_latent += latent_grad;
  grads.latent_grad = d_latent;
  backward_layers(params.encoder, enc_cache, d_latent, grads.encoder);
  return grads;
}

double grad_check(const AutoencoderParams& params, const Matrix& X, const Matrix& latent_grad,
                  double recon_weight, double eps, const BackwardFn& grad_fn) {
  if (!(eps > 0.0 && eps < 1e-2)) {
    throw ParameterError("grad_check: eps must lie in (0, 1e-2)");
  }
  const GradientBundle analytic = grad_fn(params, X, latent_grad, recon_weight);
  AutoencoderParams probe = params;

  double worst = 0.0;
  auto check_block = [&](auto& block, const auto& grad_block) {
    for (Eigen::Index idx = 0; idx < block.size(); ++idx) {
      double& p = block.data()[idx];
      const double saved = p;
      p = saved + eps;
      const double up = linearized_objective(probe, X, latent_grad, recon_weight);
      p = saved - eps;
      const double down = linearized_objective(probe, X, latent_grad, recon_weight);
      p = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad_block.data()[idx];
      const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  };
  auto check_layers = [&](std::vector<Layer>& layers, const std::vector<LayerGrad>& g) {
    if (g.size() != layers.size()) throw ShapeError("grad_check: gradient bundle shape mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (g[k].weights.rows() != layers[k].weights.rows() ||
          g[k].weights.cols() != layers[k].weights.cols() ||
          g[k].bias.size() != layers[k].bias.size()) {
        throw ShapeError("grad_check: gradient bundle shape mismatch");
      }
      check_block(layers[k].weights, g[k].weights);
      check_block(layers[k].bias, g[k].bias);
    }
  };
  check_layers(probe.encoder, analytic.encoder);
  check_layers(probe.decoder, analytic.decoder);
  return worst;
}

AdamState make_adam_state(const AutoencoderParams& params) {
  AdamState s;
  s.m_enc = zeros_like(params.encoder);
  s.v_enc = zeros_like(params.encoder);
  s.m_dec = zeros_like(params.decoder);
  s.v_dec = zeros_like(params.decoder);
  return s;
}

void adam_step(AutoencoderParams& params, const GradientBundle& grads, double lr,
               AdamState& state) {
  if (grads.encoder.size() != params.encoder.size() ||
      grads.decoder.size() != params.decoder.size()) {
    throw ShapeError("adam_step: gradient bundle does not match parameters");
  }
  if (!grads_finite(grads.encoder) || !grads_finite(grads.decoder)) {
    throw NumericalError("adam_step: non-finite gradient, step aborted");
  }
  if (state.m_enc.size() != params.encoder.size()) {
    // Lazily shaped state, e.g. default-constructed.
    const AdamState fresh = make_adam_state(params);
    state.m_enc = fresh.m_enc;
    state.v_enc = fresh.v_enc;
    state.m_dec = fresh.m_dec;
    state.v_dec = fresh.v_dec;
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const auto mhat = m.array() / c1;
    const auto vhat = v.array() / c2;
    param.array() -= lr * mhat / (vhat.sqrt() + state.epsilon);
  };
  auto update_layers = [&](std::vector<Layer>& layers, const std::vector<LayerGrad>& g,
                           std::vector<LayerGrad>& m, std::vector<LayerGrad>& v) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      update(layers[k].weights, g[k].weights, m[k].weights, v[k].weights);
      update(layers[k].bias, g[k].bias, m[k].bias, v[k].bias);
    }
  };
  update_layers(params.encoder, grads.encoder, state.m_enc, state.v_enc);
  update_layers(params.decoder, grads.decoder, state.m_dec, state.v_dec);
}

PretrainResult pretrain(AutoencoderParams params, const Matrix& X, const PretrainOptions& opts) {
  if (opts.epochs < 0) throw ParameterError("pretrain: epochs must be nonnegative");
  if (!(opts.lr >= 0.0)) throw ParameterError("pretrain: lr must be nonnegative");
  PretrainResult result;
  result.optimizer = make_adam_state(params);
  const Matrix no_latent = Matrix::Zero(X.rows(), params.latent_dim());
  result.loss_trace.push_back(recon_loss(params, X));
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const GradientBundle g = backward(params, X, no_latent, 1.0);
    adam_step(params, g, opts.lr, result.optimizer);
    const double loss = recon_loss(params, X);
    if (!std::isfinite(loss)) {
      throw NumericalError("pretrain: reconstruction loss diverged at epoch " +
                           std::to_string(epoch + 1));
    }
    const double prev = result.loss_trace.back();
    result.loss_trace.push_back(loss);
    if (opts.check_monotone && loss > prev + opts.monotone_tol * std::max(1.0, loss)) {
      std::ostringstream msg;
      msg << "pretrain: loss increased at epoch " << epoch + 1 << " (" << format_double(prev)
          << " -> " << format_double(loss) << ", lr=" << opts.lr << ")";
      throw NumericalError(msg.str());
    }
  }
  result.params = std::move(params);
  return result;
}

FeatureScaler FeatureScaler::fit(const Matrix& X) {
  if (X.rows() == 0) throw DataError("FeatureScaler::fit: empty pool");
  FeatureScaler s;
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(X.rows());
    const double sd = std::sqrt(var);
    // Constant features pass through centred but unscaled.
    s.scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

FeatureScaler FeatureScaler::identity(Eigen::Index dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

Matrix FeatureScaler::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw ShapeError("FeatureScaler::apply: width mismatch");
  Matrix out = X;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= scale.transpose().array();
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
  double v = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw DataError("cannot parse '" + std::string(token) + "' as a real number");
  }
  return v;
}

namespace {

void write_block(std::ostream& out, const double* data, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    out << (i == 0 ? "" : " ") << format_double(data[i]);
  }
  out << '\n';
}

void read_block(std::istream& in, double* data, Eigen::Index count) {
  std::string tok;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!(in >> tok)) throw DataError("checkpoint truncated");
    data[i] = parse_double(tok);
  }
}

void expect_token(std::istream& in, std::string_view want) {
  std::string tok;
  if (!(in >> tok) || tok != want) {
    throw DataError("checkpoint: expected '" + std::string(want) + "', found '" + tok + "'");
  }
}

}  // namespace

void write_autoencoder(std::ostream& out, const AutoencoderParams& params) {
  out << "dmae-autoencoder 1\n";
  auto write_layers = [&](const std::vector<Layer>& layers, const char* tag) {
    out << tag << ' ' << layers.size() << '\n';
    for (const Layer& l : layers) {
      out << "layer " << l.in_dim() << ' ' << l.out_dim() << ' ' << to_string(l.activation) << '\n';
      write_block(out, l.weights.data(), l.weights.size());
      write_block(out, l.bias.data(), l.bias.size());
    }
  };
  write_layers(params.encoder, "encoder");
  write_layers(params.decoder, "decoder");
  out << "end\n";
}

AutoencoderParams read_autoencoder(std::istream& in) {
  expect_token(in, "dmae-autoencoder");
  int version = 0;
  if (!(in >> version) || version != 1) throw DataError("checkpoint: unsupported version");
  auto read_layers = [&](const char* tag) {
    expect_token(in, tag);
    std::size_t count = 0;
    if (!(in >> count) || count > 1024) throw DataError("checkpoint: bad layer count");
    std::vector<Layer> layers(count);
    for (Layer& l : layers) {
      expect_token(in, "layer");
      Eigen::Index rows = 0;
      Eigen::Index cols = 0;
      std::string act;
      if (!(in >> rows >> cols >> act) || rows < 1 || cols < 1) {
        throw DataError("checkpoint: bad layer header");
      }
      l.activation = activation_from_string(act);
      l.weights.resize(rows, cols);
      l.bias.resize(cols);
      read_block(in, l.weights.data(), l.weights.size());
      read_block(in, l.bias.data(), l.bias.size());
    }
    return layers;
  };
  AutoencoderParams params;
  params.encoder = read_layers("encoder");
  params.decoder = read_layers("decoder");
  expect_token(in, "end");
  params.validate();
  return params;
}

void write_scaler(std::ostream& out, const FeatureScaler& scaler) {
  out << "dmae-scaler 1 " << scaler.mean.size() << '\n';
  write_block(out, scaler.mean.data(), scaler.mean.size());
  write_block(out, scaler.scale.data(), scaler.scale.size());
}

FeatureScaler read_scaler(std::istream& in) {
  expect_token(in, "dmae-scaler");
  int version = 0;
  Eigen::Index dim = 0;
  if (!(in >> version >> dim) || version != 1 || dim < 1) {
    throw DataError("scaler: bad header");
  }
  FeatureScaler s{Vector(dim), Vector(dim)};
  read_block(in, s.mean.data(), dim);
  read_block(in, s.scale.data(), dim);
  return s;
}

}  // namespace dmae
