#include "dmae/dataio.hpp"

#include "dmae/autoencoder.hpp"
#include "dmae/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace dmae {

namespace {

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\r' || c == '\t' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

char detect_delimiter(const std::string& line) {
  return line.find('\t') != std::string::npos && line.find(',') == std::string::npos ? '\t' : ',';
}

std::size_t parse_index(std::string_view cell, std::string_view source, std::size_t line) {
  const std::string_view t = trim(cell);
  std::size_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw DataError(where(source, line) + ": expected a nonnegative integer, found '" +
                    std::string(t) + "'");
  }
  return v;
}

Matrix orthonormal_columns(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd G(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    for (Eigen::Index j = 0; j < G.cols(); ++j) G(i, j) = normal(rng);
  }
  if (rows < cols) return G / std::sqrt(static_cast<double>(cols));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(G.rows(), G.cols());
  return Q;
}

Matrix project(const Matrix& S, const Matrix& A, Nonlinearity nl) {
  Matrix out = S * A.transpose();
  if (nl == Nonlinearity::tanh_mix) out = out.array().tanh().matrix();
  return out;
}

void add_noise(Matrix& M, double std_dev, std::mt19937_64& rng) {
  if (std_dev == 0.0) return;
  std::normal_distribution<double> normal(0.0, std_dev);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) += normal(rng);
  }
}

int quadrant_label(const Eigen::Ref<const Eigen::RowVectorXd>& s) {
  int label = s(0) >= 0.0 ? 1 : 0;
  if (s.size() > 1) label += s(1) >= 0.0 ? 2 : 0;
  return label;
}

Matrix gather_rows(const Matrix& M, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), M.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = M.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

Matrix parse_features(std::istream& in, const LoadOptions& opts, std::string_view source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  char delim = opts.delimiter;
  bool header_pending = opts.has_header;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    if (delim == 0) delim = detect_delimiter(line);
    const auto cells = split_line(line, delim);
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw DataError(where(source, line_no) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto cell : cells) {
      double v = 0.0;
      try {
        v = parse_double(trim(cell));
      } catch (const DataError&) {
        throw DataError(where(source, line_no) + ": non-numeric cell '" + std::string(trim(cell)) + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(where(source, line_no) + ": non-finite cell '" + std::string(trim(cell)) + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(std::string(source) + ": no data rows");
  Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return M;
}

Matrix load_features(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  return parse_features(in, opts, path.string());
}

void write_features(std::ostream& out, const Matrix& M, char delimiter) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) out << delimiter;
      out << format_double(M(i, j));
    }
    out << '\n';
  }
}

void write_features(const std::filesystem::path& path, const Matrix& M, char delimiter) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature file " + path.string());
  write_features(out, M, delimiter);
}

bool PairingFile::has_labels() const {
  return !rows.empty() &&
         std::all_of(rows.begin(), rows.end(), [](const PairingRow& r) { return r.label.has_value(); });
}

void PairingFile::validate(std::size_t n_x, std::size_t n_y, PairingMode mode) const {
  std::vector<bool> seen_x(n_x, false);
  std::vector<bool> seen_y(n_y, false);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const PairingRow& r = rows[k];
    if (r.x_index >= n_x || r.y_index >= n_y) {
      throw DataError("pairing row " + std::to_string(k + 1) + ": index out of range");
    }
    if (seen_x[r.x_index]) {
      throw DataError("pairing row " + std::to_string(k + 1) + ": duplicate x_index " +
                      std::to_string(r.x_index));
    }
    seen_x[r.x_index] = true;
    if (mode == PairingMode::one_one) {
      if (seen_y[r.y_index]) {
        throw DataError("pairing row " + std::to_string(k + 1) + ": duplicate y_index " +
                        std::to_string(r.y_index));
      }
      seen_y[r.y_index] = true;
    }
  }
}

PairingFile parse_pairing(std::istream& in, std::string_view source) {
  PairingFile pf;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = split_line(t, detect_delimiter(line));
    if (cells.size() != 2 && cells.size() != 3) {
      throw DataError(where(source, line_no) + ": expected x_index,y_index[,label]");
    }
    PairingRow row;
    row.x_index = parse_index(cells[0], source, line_no);
    row.y_index = parse_index(cells[1], source, line_no);
    if (cells.size() == 3) row.label = static_cast<int>(parse_index(cells[2], source, line_no));
    pf.rows.push_back(row);
  }
  return pf;
}

PairingFile load_pairing(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pairing file " + path.string());
  return parse_pairing(in, path.string());
}

void write_pairing(std::ostream& out, const PairingFile& pairing) {
  for (const PairingRow& r : pairing.rows) {
    out << r.x_index << ',' << r.y_index;
    if (r.label) out << ',' << *r.label;
    out << '\n';
  }
}

void write_pairing(const std::filesystem::path& path, const PairingFile& pairing) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pairing file " + path.string());
  write_pairing(out, pairing);
}

PairingFile pairing_from_assignment(const HardAssignment& a, const std::vector<int>* labels) {
  PairingFile pf;
  pf.rows.reserve(a.assignment.size());
  for (std::size_t i = 0; i < a.assignment.size(); ++i) {
    PairingRow r{i, a.assignment[i], std::nullopt};
    if (labels != nullptr && i < labels->size()) r.label = (*labels)[i];
    pf.rows.push_back(r);
  }
  return pf;
}

std::string_view to_string(Nonlinearity n) { return n == Nonlinearity::linear ? "linear" : "tanh_mix"; }

Nonlinearity nonlinearity_from_string(std::string_view s) {
  if (s == "linear") return Nonlinearity::linear;
  if (s == "tanh_mix") return Nonlinearity::tanh_mix;
  throw ParameterError("unknown nonlinearity '" + std::string(s) + "'");
}

void SyntheticSpec::validate() const {
  if (n < 1 || latent_dim_true < 1 || d_x < 1 || d_y < 1) {
    throw ParameterError("synthetic data: dimensions must be positive");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    throw ParameterError("synthetic data: noise_std must be nonnegative");
  }
  if (identity_projection && (d_x != latent_dim_true || d_y != latent_dim_true)) {
    throw ParameterError("synthetic data: identity_projection needs d_x == d_y == latent_dim_true");
  }
}

TwoViewData synth_two_view(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto k = static_cast<Eigen::Index>(spec.latent_dim_true);

  std::normal_distribution<double> normal(0.0, 1.0);
  TwoViewData data;
  data.sources.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) data.sources(i, j) = normal(rng);
  }

  Matrix A;
  Matrix B;
  if (spec.identity_projection) {
    A = Matrix::Identity(k, k);
    B = Matrix::Identity(k, k);
  } else {
    A = orthonormal_columns(spec.d_x, spec.latent_dim_true, rng);
    B = orthonormal_columns(spec.d_y, spec.latent_dim_true, rng);
  }

  // y_j comes from source sigma(j).
  std::vector<std::size_t> sigma(spec.n);
  std::iota(sigma.begin(), sigma.end(), 0);
  if (spec.planted_permutation) std::shuffle(sigma.begin(), sigma.end(), rng);

  data.X = project(data.sources, A, spec.nonlinearity);
  Matrix shuffled(n, k);
  for (Eigen::Index j = 0; j < n; ++j) shuffled.row(j) = data.sources.row(static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(j)]));
  data.Y = project(shuffled, B, spec.nonlinearity);
  add_noise(data.X, spec.noise_std, rng);
  add_noise(data.Y, spec.noise_std, rng);

  data.truth.mode = PairingMode::one_one;
  data.truth.assignment.assign(spec.n, 0);
  for (std::size_t j = 0; j < spec.n; ++j) data.truth.assignment[sigma[j]] = j;

  data.labels.resize(spec.n);
  for (Eigen::Index i = 0; i < n; ++i) data.labels[static_cast<std::size_t>(i)] = quadrant_label(data.sources.row(i));
  return data;
}

TwoViewData synth_many_one(const SyntheticSpec& spec, std::size_t categories) {
  spec.validate();
  if (categories < 1) throw ParameterError("synth_many_one: need at least one category");
  std::mt19937_64 rng(spec.seed);
  const auto k = static_cast<Eigen::Index>(spec.latent_dim_true);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix prototypes(static_cast<Eigen::Index>(categories), k);
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    for (Eigen::Index j = 0; j < k; ++j) prototypes(c, j) = normal(rng);
  }
  const Matrix A = orthonormal_columns(spec.d_x, spec.latent_dim_true, rng);
  const Matrix B = orthonormal_columns(spec.d_y, spec.latent_dim_true, rng);

  TwoViewData data;
  data.truth.mode = PairingMode::many_one;
  data.truth.assignment.resize(spec.n);
  data.labels.resize(spec.n);
  data.sources.resize(static_cast<Eigen::Index>(spec.n), k);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t c = i % categories;
    data.truth.assignment[i] = c;
    data.labels[i] = static_cast<int>(c);
    data.sources.row(static_cast<Eigen::Index>(i)) = prototypes.row(static_cast<Eigen::Index>(c));
  }
  data.X = project(data.sources, A, spec.nonlinearity);
  add_noise(data.X, spec.noise_std, rng);
  data.Y = project(prototypes, B, spec.nonlinearity);
  return data;
}

void SplitFractions::validate() const {
  for (double f : {paired, unpaired, test}) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ParameterError("split fractions must be nonnegative");
  }
  if (paired + unpaired + test > 1.0 + 1e-12) {
    throw ParameterError("split fractions sum to more than 1");
  }
}

Eigen::Index SplitDataset::d_x() const {
  for (const Matrix* m : {&unpaired_x, &paired_x, &test_x}) {
    if (m->cols() > 0) return m->cols();
  }
  return 0;
}

Eigen::Index SplitDataset::d_y() const {
  for (const Matrix* m : {&unpaired_y, &paired_y, &test_y}) {
    if (m->cols() > 0) return m->cols();
  }
  return 0;
}

Matrix SplitDataset::train_x() const { return vstack(unpaired_x, paired_x); }
Matrix SplitDataset::train_y() const { return vstack(unpaired_y, paired_y); }

SplitDataset split(const TwoViewData& data, const SplitFractions& fractions, std::uint64_t seed) {
  fractions.validate();
  const std::size_t n = static_cast<std::size_t>(data.X.rows());
  if (data.truth.assignment.size() != n) {
    throw DataError("split: ground-truth alignment must cover every x row");
  }
  const std::size_t n_paired = static_cast<std::size_t>(std::floor(fractions.paired * static_cast<double>(n) + 1e-9));
  const std::size_t n_unpaired = static_cast<std::size_t>(std::floor(fractions.unpaired * static_cast<double>(n) + 1e-9));
  if (n_paired + n_unpaired > n) throw ParameterError("split: pool sizes exceed sample count");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<std::size_t> paired(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_paired));
  const std::vector<std::size_t> unpaired(order.begin() + static_cast<std::ptrdiff_t>(n_paired),
                                          order.begin() + static_cast<std::ptrdiff_t>(n_paired + n_unpaired));
  const std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_paired + n_unpaired), order.end());

  const bool labelled = data.labels.size() == n;
  auto partners = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(data.truth.assignment[i]);
    return out;
  };
  auto labels_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    if (!labelled) return out;
    for (std::size_t i : rows) out.push_back(data.labels[i]);
    return out;
  };

  SplitDataset ds;
  ds.mode = data.truth.mode;
  ds.paired_x = gather_rows(data.X, paired);
  ds.paired_y = gather_rows(data.Y, partners(paired));
  ds.test_x = gather_rows(data.X, test);
  ds.test_y = gather_rows(data.Y, partners(test));
  ds.paired_labels = labels_of(paired);
  ds.test_labels = labels_of(test);
  ds.unpaired_labels = labels_of(unpaired);
  ds.unpaired_x = gather_rows(data.X, unpaired);

  if (unpaired.empty()) {
    ds.unpaired_y.resize(0, data.Y.cols());
    return ds;
  }

  if (ds.mode == PairingMode::one_one) {
    // Hide the alignment: unpaired y rows are shuffled.
    std::vector<std::size_t> y_order = partners(unpaired);
    std::vector<std::size_t> perm(y_order.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> y_rows(perm.size());
    ds.unpaired_truth.assign(perm.size(), 0);
    ds.unpaired_y_labels.assign(perm.size(), 0);
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
      y_rows[pos] = y_order[perm[pos]];
      ds.unpaired_truth[perm[pos]] = pos;
      if (labelled) ds.unpaired_y_labels[pos] = data.labels[unpaired[perm[pos]]];
    }
    if (!labelled) ds.unpaired_y_labels.clear();
    ds.unpaired_y = gather_rows(data.Y, y_rows);
  } else {
    // Every category stays available to the unpaired pool, in shuffled order.
    std::vector<std::size_t> perm(static_cast<std::size_t>(data.Y.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> position(perm.size());
    for (std::size_t pos = 0; pos < perm.size(); ++pos) position[perm[pos]] = pos;
    ds.unpaired_y = gather_rows(data.Y, perm);
    ds.unpaired_y_labels.assign(perm.size(), 0);
    for (std::size_t pos = 0; pos < perm.size(); ++pos) ds.unpaired_y_labels[pos] = static_cast<int>(perm[pos]);
    for (std::size_t i : unpaired) ds.unpaired_truth.push_back(position[data.truth.assignment[i]]);
  }
  return ds;
}

}  // namespace dmae
