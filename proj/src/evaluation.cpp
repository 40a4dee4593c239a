#include "nemr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

namespace nemr {

namespace {

double mean_head_norm(const MetricParams<double>& p, const VectorXd& diff) {
  VectorXd h = relu(p.enc_hidden.apply(diff));
  return p.enc_mean.apply(h).norm();
}

}  // namespace

double score_pair(const ModelState& state, NodeId i, NodeId j) {
  const auto a = state.embeddings.row(i).transpose();
  const auto b = state.embeddings.row(j).transpose();
  switch (state.backend) {
    case Backend::TwoNorm:
      return -g_2norm(a, b);
    case Backend::Mlp: {
      const double forward = g_mlp(a, b, state.metric).norm();
      const double reverse = g_mlp(b, a, state.metric).norm();
      return -0.5 * (forward + reverse);
    }
    case Backend::Variational: {
      VectorXd d = a - b;
      const double forward = mean_head_norm(state.metric, d);
      const double reverse = mean_head_norm(state.metric, -d);
      return -0.5 * (forward + reverse);
    }
  }
  throw ConfigError("unknown backend");
}

std::vector<double> score_pairs(const ModelState& state, std::span<const Edge> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const Edge& e : pairs) out.push_back(score_pair(state, e.u, e.v));
  return out;
}

LinkScores score_link_split(const ModelState& state, std::span<const Edge> positives, std::span<const Edge> negatives) {
  LinkScores scores;
  scores.reserve(positives.size() + negatives.size());
  for (const Edge& e : positives) scores.push_back({e, score_pair(state, e.u, e.v), true});
  for (const Edge& e : negatives) scores.push_back({e, score_pair(state, e.u, e.v), false});
  return scores;
}

double auc(const LinkScores& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]].score == scores[order[start]].score) ++end;
    // 1-based average rank of the tie block
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (scores[order[k]].positive) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw Error("auc needs both positive and negative pairs");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

double average_precision(const LinkScores& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return scores[a].pair < scores[b].pair;
  });
  const auto positives = std::count_if(scores.begin(), scores.end(), [](const auto& s) { return s.positive; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(scores.size())) {
    throw Error("average precision needs both positive and negative pairs");
  }
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!scores[order[k]].positive) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(positives);
}

LinkMetrics evaluate_links(const ModelState& state, std::span<const Edge> positives, std::span<const Edge> negatives) {
  auto scores = score_link_split(state, positives, negatives);
  return {auc(scores), average_precision(scores)};
}

LogisticModel fit_logistic(const MatrixXd& features, std::span<const int> targets, double l2, double tolerance,
                           int max_iterations) {
  const Eigen::Index n = features.rows(), d = features.cols();
  MatrixXd x(n, d + 1);
  x << features, MatrixXd::Ones(n, 1);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = targets[i] ? 1.0 : 0.0;
  VectorXd penalty = VectorXd::Constant(d + 1, l2);
  penalty(d) = 0.0;

  auto objective = [&](const VectorXd& theta) {
    VectorXd z = x * theta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + exp(z)) - y z, computed stably
      const double zi = z(i);
      loss += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - y(i) * zi;
    }
    return loss + 0.5 * (penalty.array() * theta.array().square()).sum();
  };

  LogisticModel model;
  VectorXd theta = VectorXd::Zero(d + 1);
  double current = objective(theta);
  for (int it = 0; it < max_iterations; ++it) {
    VectorXd z = x * theta;
    VectorXd p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    VectorXd grad = x.transpose() * (p - y) + penalty.cwiseProduct(theta);
    model.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < tolerance) {
      model.converged = true;
      break;
    }
    VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    MatrixXd hessian = x.transpose() * w.asDiagonal() * x;
    hessian.diagonal() += penalty;
    // Guards the unpenalized intercept direction on degenerate inputs.
    hessian.diagonal().array() += 1e-10;
    VectorXd step = hessian.ldlt().solve(grad);
    double t = 1.0;
    VectorXd next = theta - step;
    double value = objective(next);
    while (value > current - 1e-4 * t * grad.dot(step) && t > 1e-10) {
      t *= 0.5;
      next = theta - t * step;
      value = objective(next);
    }
    if (value >= current) {
      model.converged = grad.lpNorm<Eigen::Infinity>() < std::sqrt(tolerance);
      break;
    }
    theta = next;
    current = value;
  }
  model.weights = theta.head(d);
  model.intercept = theta(d);
  return model;
}

OneVsRest OneVsRest::fit(const MatrixXd& features, std::span<const int> labels, int num_classes, double l2) {
  OneVsRest clf;
  const auto n = static_cast<double>(features.rows());
  clf.feature_mean = features.colwise().mean().transpose();
  MatrixXd centered = features.rowwise() - clf.feature_mean.transpose();
  clf.feature_scale = (centered.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Eigen::Index c = 0; c < clf.feature_scale.size(); ++c) {
    if (!(clf.feature_scale(c) > 1e-12)) clf.feature_scale(c) = 1.0;
  }
  MatrixXd standardized = centered.array().rowwise() / clf.feature_scale.transpose().array();
  std::vector<int> targets(labels.size());
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] == c ? 1 : 0;
    clf.models.push_back(fit_logistic(standardized, targets, l2));
  }
  return clf;
}

std::vector<int> OneVsRest::predict(const MatrixXd& features) const {
  MatrixXd standardized = (features.rowwise() - feature_mean.transpose()).array().rowwise() /
                          feature_scale.transpose().array();
  std::vector<int> out(features.rows(), 0);
  for (Eigen::Index i = 0; i < standardized.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < models.size(); ++c) {
      const double s = standardized.row(i).dot(models[c].weights) + models[c].intercept;
      if (s > best) {
        best = s;
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

ClassifierReport f1_scores(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  std::vector<double> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::set<int> seen;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    seen.insert(truth[i]);
    seen.insert(predicted[i]);
    if (truth[i] == predicted[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  ClassifierReport r;
  r.precision.assign(num_classes, 0.0);
  r.recall.assign(num_classes, 0.0);
  double tp_all = 0, fp_all = 0, fn_all = 0, macro = 0;
  for (int c = 0; c < num_classes; ++c) {
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
    if (tp[c] + fp[c] > 0) r.precision[c] = tp[c] / (tp[c] + fp[c]);
    if (tp[c] + fn[c] > 0) r.recall[c] = tp[c] / (tp[c] + fn[c]);
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    if (seen.count(c) && denom > 0) macro += 2 * tp[c] / denom;
  }
  const double micro_denom = 2 * tp_all + fp_all + fn_all;
  r.micro_f1 = micro_denom > 0 ? 2 * tp_all / micro_denom : 0.0;
  r.macro_f1 = seen.empty() ? 0.0 : macro / static_cast<double>(seen.size());
  r.repetitions = 1;
  return r;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the row's bytes and its label.
std::uint64_t content_key(const MatrixXd& embeddings, Eigen::Index row, int label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < size; ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  };
  for (Eigen::Index c = 0; c < embeddings.cols(); ++c) {
    const double v = embeddings(row, c);
    feed(&v, sizeof v);
  }
  feed(&label, sizeof label);
  return h;
}

}  // namespace

ClassifierReport classify_nodes(const MatrixXd& embeddings, std::span<const int> labels, int num_classes,
                                double train_fraction, std::uint64_t seed, int repetitions) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) throw ConfigError("train_fraction must lie in (0, 1)");
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  std::vector<Eigen::Index> labeled;
  std::vector<std::uint64_t> keys;
  std::set<int> classes;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0) continue;
    if (labels[v] >= num_classes) throw Error("label id out of range");
    labeled.push_back(static_cast<Eigen::Index>(v));
    keys.push_back(content_key(embeddings, static_cast<Eigen::Index>(v), labels[v]));
    classes.insert(labels[v]);
  }
  if (labeled.size() < 2) throw Error("classify_nodes needs at least two labeled nodes");
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(labeled.size()))), 1,
      labeled.size() - 1);

  ClassifierReport total;
  total.precision.assign(num_classes, 0.0);
  total.recall.assign(num_classes, 0.0);
  std::uint64_t salt = 0;
  for (int rep = 0; rep < repetitions; ++rep) {
    std::vector<std::size_t> order;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt, ++salt) {
      const std::uint64_t s = splitmix(seed ^ splitmix(salt));
      order.resize(labeled.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ka = splitmix(keys[a] ^ s), kb = splitmix(keys[b] ^ s);
        return ka != kb ? ka < kb : keys[a] < keys[b];
      });
      std::set<int> in_train;
      for (std::size_t k = 0; k < n_train; ++k) in_train.insert(labels[labeled[order[k]]]);
      ok = in_train == classes;
    }
    if (!ok) throw Error("a class is missing from every sampled training split (10 attempts)");

    MatrixXd train_x(n_train, embeddings.cols()), test_x(labeled.size() - n_train, embeddings.cols());
    std::vector<int> train_y, test_y;
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      const Eigen::Index v = labeled[order[k]];
      if (k < n_train) {
        train_x.row(static_cast<Eigen::Index>(k)) = embeddings.row(v);
        train_y.push_back(labels[v]);
      } else {
        test_x.row(static_cast<Eigen::Index>(k - n_train)) = embeddings.row(v);
        test_y.push_back(labels[v]);
      }
    }
    auto clf = OneVsRest::fit(train_x, train_y, num_classes);
    auto report = f1_scores(test_y, clf.predict(test_x), num_classes);
    total.micro_f1 += report.micro_f1;
    total.macro_f1 += report.macro_f1;
    for (int c = 0; c < num_classes; ++c) {
      total.precision[c] += report.precision[c];
      total.recall[c] += report.recall[c];
    }
  }
  const auto reps = static_cast<double>(repetitions);
  total.micro_f1 /= reps;
  total.macro_f1 /= reps;
  for (int c = 0; c < num_classes; ++c) {
    total.precision[c] /= reps;
    total.recall[c] /= reps;
  }
  total.train_fraction = train_fraction;
  total.repetitions = repetitions;
  return total;
}

}  // namespace nemr
