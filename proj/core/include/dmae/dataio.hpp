#pragma once

#include "dmae/linalg.hpp"
#include "dmae/matching.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace dmae {

struct LoadOptions {
  // 0 selects comma or tab from the first data line.
  char delimiter = 0;
  bool has_header = false;
};

// One sample per line. Ragged rows, non-numeric cells and empty input raise
// DataError naming the offending line.
Matrix parse_features(std::istream& in, const LoadOptions& opts, std::string_view source = "<stream>");
Matrix load_features(const std::filesystem::path& path, const LoadOptions& opts = {});
void write_features(std::ostream& out, const Matrix& M, char delimiter = ',');
void write_features(const std::filesystem::path& path, const Matrix& M, char delimiter = ',');

struct PairingRow {
  std::size_t x_index = 0;
  std::size_t y_index = 0;
  std::optional<int> label;
};

// Rows of "x_index,y_index[,label]".
struct PairingFile {
  std::vector<PairingRow> rows;

  [[nodiscard]] bool has_labels() const;
  // Checks index ranges and, in one_one mode, duplicate x or y indices.
  void validate(std::size_t n_x, std::size_t n_y, PairingMode mode) const;
};

PairingFile parse_pairing(std::istream& in, std::string_view source = "<stream>");
PairingFile load_pairing(const std::filesystem::path& path);
void write_pairing(std::ostream& out, const PairingFile& pairing);
void write_pairing(const std::filesystem::path& path, const PairingFile& pairing);
PairingFile pairing_from_assignment(const HardAssignment& a,
                                    const std::vector<int>* labels = nullptr);

enum class Nonlinearity { linear, tanh_mix };

std::string_view to_string(Nonlinearity n);
Nonlinearity nonlinearity_from_string(std::string_view s);

struct SyntheticSpec {
  std::size_t n = 30;
  std::size_t latent_dim_true = 3;
  std::size_t d_x = 3;
  std::size_t d_y = 3;
  double noise_std = 0.05;
  Nonlinearity nonlinearity = Nonlinearity::linear;
  std::uint64_t seed = 0;
  // Use identity projections (requires d_x == d_y == latent_dim_true).
  bool identity_projection = false;
  // Shuffle the y-view with a seeded permutation; off leaves it aligned.
  bool planted_permutation = true;

  void validate() const;
};

struct TwoViewData {
  Matrix X;
  Matrix Y;
  // truth.assignment[i] = row of Y generated from the same source as X row i.
  HardAssignment truth;
  // Per-x-row class label (sign quadrant of the first two source coordinates).
  std::vector<int> labels;
  Matrix sources;
};

// x_i = phi(A s_i) + noise,  y_j = phi(B s_sigma(j)) + noise, with A and B having
// orthonormal columns (distance preserving on the sources).
TwoViewData synth_two_view(const SyntheticSpec& spec);

// Many-one variant: m category prototypes c_k; x_i is generated from the
// prototype of its class and Y holds one row per category.
TwoViewData synth_many_one(const SyntheticSpec& spec, std::size_t categories);

struct SplitFractions {
  double paired = 0.0;
  double unpaired = 1.0;
  double test = 0.0;

  void validate() const;
};

// Paired, unpaired and test pools for one run. Paired and test rows are
// aligned; the unpaired y-pool is shuffled and its alignment hidden in
// unpaired_truth (empty when unknown).
struct SplitDataset {
  PairingMode mode = PairingMode::one_one;
  Matrix paired_x;
  Matrix paired_y;
  Matrix unpaired_x;
  Matrix unpaired_y;
  Matrix test_x;
  Matrix test_y;
  std::vector<std::size_t> unpaired_truth;
  std::vector<int> paired_labels;
  std::vector<int> unpaired_labels;
  std::vector<int> test_labels;
  // Class of every unpaired y row when known (many_one: the category index).
  std::vector<int> unpaired_y_labels;

  [[nodiscard]] std::size_t n_paired() const { return static_cast<std::size_t>(paired_x.rows()); }
  [[nodiscard]] std::size_t n_unpaired_x() const { return static_cast<std::size_t>(unpaired_x.rows()); }
  [[nodiscard]] std::size_t n_unpaired_y() const { return static_cast<std::size_t>(unpaired_y.rows()); }
  [[nodiscard]] Eigen::Index d_x() const;
  [[nodiscard]] Eigen::Index d_y() const;

  // Training pool of each view: unpaired rows first, then paired rows.
  [[nodiscard]] Matrix train_x() const;
  [[nodiscard]] Matrix train_y() const;
};

// Pool sizes are floor(f * n) for paired and unpaired; everything left goes
// to the test pool. Requires data.truth to be known.
SplitDataset split(const TwoViewData& data, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace dmae
