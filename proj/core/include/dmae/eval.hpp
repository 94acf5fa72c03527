#pragma once

#include "dmae/linalg.hpp"
#include "dmae/matching.hpp"

#include <map>
#include <string_view>
#include <vector>

namespace dmae {

enum class Direction { x_to_y, y_to_x };

std::string_view to_string(Direction d);

struct RetrievalResult {
  Direction direction = Direction::x_to_y;
  std::map<int, double> recall_at;
};

// For each query row i, ranks every candidate row by cosine similarity
// (descending, ties to the lower index) and reports the fraction of queries
// whose truth[i] lands in the top K. Zero-norm rows have similarity 0.
RetrievalResult recall_at_k(const Matrix& queries, const Matrix& candidates,
                            const std::vector<std::size_t>& truth, const std::vector<int>& ks,
                            Direction direction = Direction::x_to_y);

// Both directions for row-aligned test pools (truth = identity).
std::vector<RetrievalResult> retrieval_both(const Matrix& Zx, const Matrix& Zy, const std::vector<int>& ks);

// Rank (1-based) of the true candidate for every query.
std::vector<std::size_t> true_ranks(const Matrix& queries, const Matrix& candidates,
                                    const std::vector<std::size_t>& truth);

// Represents each latent row by its Gaussian kernel similarity to a set of
// aligned anchor latents, centred per row. Rows from the two views become
// comparable because anchor a of each view refers to the same pair.
Matrix anchor_profile(const Matrix& Z, const Matrix& anchors, double sigma2);

struct ClassPR {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t assigned = 0;
  std::size_t actual = 0;
  std::size_t true_positive = 0;
};

struct MatchReport {
  std::map<int, ClassPR> per_class;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  std::size_t true_positive_total = 0;
};

// Per class c: precision = |assigned to c and truly c| / |assigned to c| (0 when
// none), recall = same numerator / |truly c|. Means are unweighted over
// classes that occur in the truth or in the assignment.
MatchReport pi_precision_recall(const HardAssignment& assign, const std::vector<int>& truth_labels,
                                const std::vector<int>& class_of_column);

// Fraction of rows with assign[i] == truth[i].
double matching_accuracy(const HardAssignment& assign, const std::vector<std::size_t>& truth);

// One-vs-rest ridge classifier on standardized features with an unpenalized
// intercept, solved in closed form.
struct ClassifierParams {
  Vector mean;
  Vector scale;
  Matrix weights;  // d x C
  Vector bias;     // C
  std::vector<int> classes;
};

ClassifierParams train_label_classifier(const Matrix& X, const std::vector<int>& labels, double reg);
std::vector<int> classify(const ClassifierParams& params, const Matrix& X);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace dmae
