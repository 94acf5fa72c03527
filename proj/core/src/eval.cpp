#include "dmae/eval.hpp"

#include "dmae/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace dmae {

namespace {

Matrix normalized_rows(const Matrix& Z, const char* what) {
  Matrix out = Z;
  std::size_t zero = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double norm = Z.row(i).norm();
    if (norm > 0.0) {
      out.row(i) /= norm;
    } else {
      out.row(i).setZero();
      ++zero;
    }
  }
  if (zero > 0) spdlog::warn("{}: {} zero-norm rows, similarity set to 0", what, zero);
  return out;
}

Matrix cosine(const Matrix& queries, const Matrix& candidates) {
  if (queries.cols() != candidates.cols()) {
    throw ShapeError("retrieval: query dim " + std::to_string(queries.cols()) +
                     " != candidate dim " + std::to_string(candidates.cols()));
  }
  require_finite(queries, "retrieval queries");
  require_finite(candidates, "retrieval candidates");
  return normalized_rows(queries, "queries") * normalized_rows(candidates, "candidates").transpose();
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::x_to_y ? "x_to_y" : "y_to_x"; }

std::vector<std::size_t> true_ranks(const Matrix& queries, const Matrix& candidates,
                                    const std::vector<std::size_t>& truth) {
  if (truth.size() != static_cast<std::size_t>(queries.rows())) {
    throw ShapeError("retrieval: truth has " + std::to_string(truth.size()) + " entries for " +
                     std::to_string(queries.rows()) + " queries");
  }
  const Matrix S = cosine(queries, candidates);
  std::vector<std::size_t> ranks(truth.size());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const std::size_t t = truth[static_cast<std::size_t>(i)];
    if (t >= static_cast<std::size_t>(S.cols())) throw ShapeError("retrieval: truth index out of range");
    const double st = S(i, static_cast<Eigen::Index>(t));
    // Candidates ahead of t: strictly more similar, or equal with a lower index.
    std::size_t ahead = 0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      const double s = S(i, j);
      if (s > st || (s == st && static_cast<std::size_t>(j) < t)) ++ahead;
    }
    ranks[static_cast<std::size_t>(i)] = ahead + 1;
  }
  return ranks;
}

RetrievalResult recall_at_k(const Matrix& queries, const Matrix& candidates,
                            const std::vector<std::size_t>& truth, const std::vector<int>& ks,
                            Direction direction) {
  for (int k : ks) {
    if (k < 1) throw ParameterError("recall K must be at least 1");
  }
  if (queries.rows() == 0) throw ShapeError("retrieval: empty query set");
  const std::vector<std::size_t> ranks = true_ranks(queries, candidates, truth);
  RetrievalResult r;
  r.direction = direction;
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                    [k](std::size_t rank) { return rank <= static_cast<std::size_t>(k); });
    r.recall_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return r;
}

std::vector<RetrievalResult> retrieval_both(const Matrix& Zx, const Matrix& Zy, const std::vector<int>& ks) {
  if (Zx.rows() != Zy.rows()) throw ShapeError("retrieval: test pools differ in size");
  std::vector<std::size_t> identity(static_cast<std::size_t>(Zx.rows()));
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  return {recall_at_k(Zx, Zy, identity, ks, Direction::x_to_y),
          recall_at_k(Zy, Zx, identity, ks, Direction::y_to_x)};
}

Matrix anchor_profile(const Matrix& Z, const Matrix& anchors, double sigma2) {
  if (!(sigma2 > 0.0)) throw ParameterError("anchor_profile: sigma2 must be positive");
  if (Z.cols() != anchors.cols()) throw ShapeError("anchor_profile: latent dims differ");
  if (anchors.rows() == 0) throw ShapeError("anchor_profile: no anchors");
  Matrix P(Z.rows(), anchors.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index a = 0; a < anchors.rows(); ++a) {
      P(i, a) = std::exp(-(Z.row(i) - anchors.row(a)).squaredNorm() / (2.0 * sigma2));
    }
    P.row(i).array() -= P.row(i).mean();
  }
  return P;
}

MatchReport pi_precision_recall(const HardAssignment& assign, const std::vector<int>& truth_labels,
                                const std::vector<int>& class_of_column) {
  if (assign.assignment.size() != truth_labels.size()) {
    throw ShapeError("precision/recall: assignment and truth label counts differ");
  }
  MatchReport rep;
  std::set<int> classes(truth_labels.begin(), truth_labels.end());
  std::vector<int> predicted(truth_labels.size());
  for (std::size_t i = 0; i < assign.assignment.size(); ++i) {
    const std::size_t col = assign.assignment[i];
    if (col >= class_of_column.size()) throw ShapeError("precision/recall: column out of range");
    predicted[i] = class_of_column[col];
    classes.insert(predicted[i]);
  }
  for (int c : classes) rep.per_class[c] = ClassPR{};
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++rep.per_class[predicted[i]].assigned;
    ++rep.per_class[truth_labels[i]].actual;
    if (predicted[i] == truth_labels[i]) {
      ++rep.per_class[predicted[i]].true_positive;
      ++rep.true_positive_total;
    }
  }
  for (auto& [c, pr] : rep.per_class) {
    pr.precision = pr.assigned ? static_cast<double>(pr.true_positive) / static_cast<double>(pr.assigned) : 0.0;
    pr.recall = pr.actual ? static_cast<double>(pr.true_positive) / static_cast<double>(pr.actual) : 0.0;
    rep.mean_precision += pr.precision;
    rep.mean_recall += pr.recall;
  }
  if (!rep.per_class.empty()) {
    rep.mean_precision /= static_cast<double>(rep.per_class.size());
    rep.mean_recall /= static_cast<double>(rep.per_class.size());
  }
  return rep;
}

double matching_accuracy(const HardAssignment& assign, const std::vector<std::size_t>& truth) {
  if (assign.assignment.size() != truth.size()) throw ShapeError("matching accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += assign.assignment[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ClassifierParams train_label_classifier(const Matrix& X, const std::vector<int>& labels, double reg) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw ShapeError("classifier: label count mismatch");
  if (X.rows() == 0) throw ShapeError("classifier: no training rows");
  if (!(reg >= 0.0)) throw ParameterError("classifier: reg must be nonnegative");
  require_finite(X, "classifier features");

  ClassifierParams p;
  const std::set<int> cls(labels.begin(), labels.end());
  p.classes.assign(cls.begin(), cls.end());
  const double n = static_cast<double>(X.rows());
  p.mean = X.colwise().mean().transpose();
  Matrix Xc = X.rowwise() - p.mean.transpose();
  p.scale = (Xc.array().square().colwise().sum() / n).sqrt().matrix().transpose();
  for (Eigen::Index j = 0; j < p.scale.size(); ++j) {
    if (!(p.scale(j) > 1e-12)) p.scale(j) = 1.0;
  }
  Xc = Xc.array().rowwise() / p.scale.transpose().array();

  Matrix T = Matrix::Zero(X.rows(), static_cast<Eigen::Index>(p.classes.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = std::lower_bound(p.classes.begin(), p.classes.end(), labels[i]) - p.classes.begin();
    T(static_cast<Eigen::Index>(i), c) = 1.0;
  }
  // Centred features make the intercept the column mean of T.
  p.bias = T.colwise().mean().transpose();
  const Matrix Tc = T.rowwise() - p.bias.transpose();
  Matrix A = Xc.transpose() * Xc;
  A.diagonal().array() += std::max(reg, 1e-10) * n;
  p.weights = A.ldlt().solve(Xc.transpose() * Tc);
  return p;
}

std::vector<int> classify(const ClassifierParams& params, const Matrix& X) {
  if (X.cols() != params.mean.size()) throw ShapeError("classifier: feature dim mismatch");
  Matrix Xs = X.rowwise() - params.mean.transpose();
  Xs = Xs.array().rowwise() / params.scale.transpose().array();
  const Matrix scores = (Xs * params.weights).rowwise() + params.bias.transpose();
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = params.classes[static_cast<std::size_t>(best)];
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace dmae
