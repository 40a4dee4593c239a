#pragma once

#include "nemr/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nemr {

// Symmetric link score, higher means more likely an edge:
//   2N  -> -|phi_i - phi_j|
//   MLP -> -(|g(i,j)| + |g(j,i)|) / 2
//   VI  -> -(|mu(phi_i - phi_j)| + |mu(phi_j - phi_i)|) / 2
double score_pair(const ModelState& state, NodeId i, NodeId j);
// Batched form of score_pair.
std::vector<double> score_pairs(const ModelState& state, std::span<const Edge> pairs);

struct ScoredPair {
  Edge pair;
  double score = 0.0;
  bool positive = false;
};

using LinkScores = std::vector<ScoredPair>;

LinkScores score_link_split(const ModelState& state, std::span<const Edge> positives, std::span<const Edge> negatives);

// Probability that a random positive outscores a random negative, ties
// counted one half. Throws unless both labels are present.
double auc(const LinkScores& scores);

// Sum over positives of precision at their rank, divided by the positive
// count. Ranking is by descending score, ties broken by ascending pair.
double average_precision(const LinkScores& scores);

struct LinkMetrics {
  double auc = 0.0;
  double ap = 0.0;
};
LinkMetrics evaluate_links(const ModelState& state, std::span<const Edge> positives, std::span<const Edge> negatives);

// Binary L2-regularized logistic regression trained by damped Newton steps:
// minimizes sum_i logloss_i + l2/2 |w|^2 (intercept unpenalized).
struct LogisticModel {
  VectorXd weights;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = false;
};

LogisticModel fit_logistic(const MatrixXd& features, std::span<const int> targets, double l2 = 1.0,
                           double tolerance = 1e-6, int max_iterations = 1000);

struct OneVsRest {
  VectorXd feature_mean;
  VectorXd feature_scale;
  std::vector<LogisticModel> models;

  static OneVsRest fit(const MatrixXd& features, std::span<const int> labels, int num_classes, double l2 = 1.0);
  // Class with the highest decision value per row.
  std::vector<int> predict(const MatrixXd& features) const;
};

struct ClassifierReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class, averaged over repetitions
  std::vector<double> recall;
  double train_fraction = 0.0;
  int repetitions = 0;
};

// Micro/macro F1 of predictions against truth over `num_classes` classes.
ClassifierReport f1_scores(std::span<const int> truth, std::span<const int> predicted, int num_classes);

// One-vs-rest logistic regression on embeddings of a random train_fraction of
// the labeled nodes; metrics on the remaining labeled nodes, averaged over
// `repetitions` reseeded splits. Node selection depends only on each node's
// (embedding, label) content and the seed, so reordering nodes does not
// change the split.
ClassifierReport classify_nodes(const MatrixXd& embeddings, std::span<const int> labels, int num_classes,
                                double train_fraction, std::uint64_t seed, int repetitions = 10);

}  // namespace nemr
