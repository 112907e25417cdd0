#pragma once

// End-to-end score transformation: estimate the original score and the
// probabilities defining the constraint features, solve the dual, transform
// scores, emit the weighted pre-processing dataset and pick a threshold.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fst/constraints.hpp"
#include "fst/core_transform.hpp"
#include "fst/dual_solver.hpp"
#include "fst/estimators.hpp"

namespace fst {

enum class Mode { PostProcess, PreProcess, Batch };

inline const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::PostProcess: return "post";
    case Mode::PreProcess: return "pre";
    case Mode::Batch: return "batch";
  }
  return "unknown";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "post") return Mode::PostProcess;
  if (s == "pre") return Mode::PreProcess;
  if (s == "batch") return Mode::Batch;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

enum class Decomposition { Multiplier, Auxiliary };

/// Samples (x_i, a_i, y_i) with optional precomputed scores and weights.
/// features always has one row per sample (possibly zero columns); groups
/// and labels are empty when unavailable.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> groups;
  std::vector<int> labels;
  std::optional<Eigen::VectorXd> base_scores;
  std::optional<Eigen::VectorXd> weights;
  std::map<std::string, Eigen::VectorXd> event_columns;
  int num_groups = 0;

  Eigen::Index size() const { return features.rows(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(size());
    if (n == 0) throw std::invalid_argument("dataset is empty");
    if (!groups.empty() && groups.size() != n) {
      throw std::invalid_argument("protected column length does not match the dataset");
    }
    for (int a : groups) {
      if (a < 0 || a >= num_groups) throw std::invalid_argument("group id outside the declared alphabet");
    }
    if (!labels.empty() && labels.size() != n) {
      throw std::invalid_argument("label column length does not match the dataset");
    }
    for (int y : labels) {
      if (y != 0 && y != 1) throw std::invalid_argument("labels must be binary");
    }
    if (base_scores) {
      if (static_cast<std::size_t>(base_scores->size()) != n) {
        throw std::invalid_argument("score column length does not match the dataset");
      }
      if ((base_scores->array() < 0.0).any() || (base_scores->array() > 1.0).any() ||
          !base_scores->allFinite()) {
        throw std::invalid_argument("base scores must lie in [0,1]");
      }
    }
    if (weights) {
      if (static_cast<std::size_t>(weights->size()) != n || (weights->array() < 0.0).any()) {
        throw std::invalid_argument("weights must be non-negative with one per sample");
      }
    }
    for (const auto& [name, col] : event_columns) {
      if (static_cast<std::size_t>(col.size()) != n) {
        throw std::invalid_argument("event column '" + name + "' has the wrong length");
      }
    }
  }
};

struct FitOptions {
  double delta = kDefaultDelta;
  double l2_reg = 1.0;
  // false: A is inferred through a group model at transform time.
  bool groups_observed = true;
  Decomposition decomposition = Decomposition::Multiplier;
  bool select_threshold = true;
  AdmmConfig admm;
};

struct FstModel {
  ConstraintSpec spec;  // general-linear terms keep coefficients, marginals and column names
  Mode mode = Mode::PostProcess;
  int num_groups = 0;
  ProbabilityEstimates estimates;
  std::optional<LogisticModel> score_model;  // absent: scores must be supplied
  bool groups_observed = true;
  std::optional<MultinomialModel> group_model;  // p(A|X) for MSP, p(A|X,Y) for GEO
  Decomposition decomposition = Decomposition::Multiplier;
  AdmmConfig admm;
  DualSolution dual;
  std::optional<double> threshold;
};

struct TransformResult {
  Eigen::VectorXd original;
  Eigen::VectorXd mu;
  Eigen::VectorXd transformed;
};

/// Source row i yields (x_i, 0, 1 - r'_i) then (x_i, 1, r'_i).
struct WeightedDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  Eigen::VectorXd weights;
};

struct ThresholdChoice {
  double threshold = 0.5;
  double accuracy = 0.0;
};

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Candidates are 0, 1 and midpoints between consecutive distinct scores;
/// the smallest candidate maximizing the accuracy of 1(score > t) wins.
inline ThresholdChoice select_threshold(std::span<const double> scores,
                                        std::span<const int> labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw std::invalid_argument("select_threshold needs equal-length, non-empty inputs");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());

  // Sweep candidates upward, counting correct predictions incrementally.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += static_cast<std::size_t>((scores[i] > candidates.front() ? 1 : 0) == labels[i]);
  }
  std::size_t next = 0;
  while (next < order.size() && scores[order[next]] <= candidates.front()) ++next;

  ThresholdChoice best{candidates.front(), static_cast<double>(correct)};
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    while (next < order.size() && scores[order[next]] <= candidates[c]) {
      // Sample flips from predicted 1 to predicted 0.
      correct = labels[order[next]] == 0 ? correct + 1 : correct - 1;
      ++next;
    }
    if (static_cast<double>(correct) > best.accuracy) {
      best = {candidates[c], static_cast<double>(correct)};
    }
  }
  best.accuracy /= static_cast<double>(scores.size());
  return best;
}

namespace detail {

inline Eigen::MatrixXd with_label_column(const Eigen::MatrixXd& x, double y) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setConstant(y);
  return out;
}

inline Eigen::VectorXd sample_weights(const Dataset& d) {
  return d.weights ? *d.weights : Eigen::VectorXd::Ones(d.size());
}

inline ConstraintSpec bind_general_spec(const ConstraintSpec& spec, const Dataset& data) {
  ConstraintSpec bound = spec;
  for (auto& row : bound.general) {
    for (auto& term : row.terms) {
      if (term.posterior_column.empty()) {
        term.posterior = Eigen::VectorXd::Ones(data.size());
        continue;
      }
      const auto it = data.event_columns.find(term.posterior_column);
      if (it == data.event_columns.end()) {
        throw std::invalid_argument("missing event posterior column '" + term.posterior_column + "'");
      }
      term.posterior = it->second;
    }
  }
  return bound;
}

inline void strip_posteriors(ConstraintSpec& spec) {
  for (auto& row : spec.general) {
    for (auto& term : row.terms) term.posterior.resize(0);
  }
}

inline DualSolution solve(const ConstraintFeatures& features, const Eigen::VectorXd& scores,
                          const FstModel& model) {
  if (model.decomposition == Decomposition::Auxiliary &&
      model.spec.kind != ConstraintKind::GeneralLinear) {
    return solve_dual_admm_alt(features, scores, model.spec.epsilon, model.estimates, model.admm);
  }
  return solve_dual_admm(features, scores, model.spec.epsilon, model.admm);
}

}  // namespace detail

/// Original scores r(x_i): supplied base scores win over the internal model.
inline Eigen::VectorXd original_scores(const FstModel& model, const Dataset& data) {
  if (data.base_scores) return detail::clamp_scores(*data.base_scores);
  if (!model.score_model) {
    throw std::invalid_argument("model expects external scores but the data has none");
  }
  return predict_proba(*model.score_model, data.features);
}

/// Constraint features of data under the model's recipe and estimates.
inline ConstraintFeatures constraint_features(const FstModel& model, const Dataset& data,
                                              const Eigen::VectorXd& scores) {
  const ProbabilityEstimates& est = model.estimates;
  switch (model.spec.kind) {
    case ConstraintKind::GeneralLinear:
      return build_features_general(detail::bind_general_spec(model.spec, data));
    case ConstraintKind::MeanScoreParity:
      if (model.groups_observed) {
        if (data.groups.empty()) {
          throw std::invalid_argument("protected attribute missing and no group model was fitted");
        }
        return build_features_msp(data.groups, est);
      }
      return build_features_msp(predict_proba(*model.group_model, data.features), est);
    case ConstraintKind::GeneralizedEqualizedOdds:
      if (model.groups_observed) {
        if (data.groups.empty()) {
          throw std::invalid_argument("protected attribute missing and no group model was fitted");
        }
        return build_features_geo(scores, data.groups, est);
      }
      return build_features_geo(
          scores, predict_proba(*model.group_model, detail::with_label_column(data.features, 0.0)),
          predict_proba(*model.group_model, detail::with_label_column(data.features, 1.0)), est);
  }
  throw std::logic_error("unhandled constraint kind");
}

/// Transformed scores r*(lambda^T f(x_i); r_i) with the intermediate values.
inline TransformResult transform_detailed(const FstModel& model, const Dataset& data) {
  data.validate();
  TransformResult out;
  out.original = original_scores(model, data);
  const ConstraintFeatures f = constraint_features(model, data, out.original);
  if (f.dim() != model.dual.lambda.size()) {
    throw std::invalid_argument("model dual dimension does not match the data's constraint features");
  }
  out.mu = f.matrix * model.dual.lambda;
  out.transformed.resize(out.mu.size());
  for (Eigen::Index i = 0; i < out.mu.size(); ++i) {
    out.transformed(i) = std::clamp(transform_score(out.mu(i), out.original(i)), 0.0, 1.0);
  }
  return out;
}

inline Eigen::VectorXd transform(const FstModel& model, const Dataset& data) {
  return transform_detailed(model, data).transformed;
}

/// Estimates scores and probabilities on train, builds constraint features
/// and solves the dual.
inline FstModel fit(const Dataset& train, const ConstraintSpec& spec, Mode mode,
                    const FitOptions& options = {}) {
  train.validate();
  if (spec.kind == ConstraintKind::GeneralLinear) {
    detail::bind_general_spec(spec, train).validate();
  } else {
    spec.validate();
  }
  options.admm.validate();
  if (train.labels.empty()) throw std::invalid_argument("training data needs labels");
  if (train.groups.empty() && spec.kind != ConstraintKind::GeneralLinear) {
    throw std::invalid_argument("training data needs the protected attribute");
  }

  FstModel model;
  model.spec = spec;
  detail::strip_posteriors(model.spec);
  model.mode = mode;
  model.num_groups = train.num_groups;
  model.groups_observed = options.groups_observed;
  model.decomposition = options.decomposition;
  model.admm = options.admm;

  const Eigen::VectorXd w = detail::sample_weights(train);
  if (!train.base_scores) {
    if (train.features.cols() == 0) {
      throw std::invalid_argument("no score column and no feature columns to fit a score model");
    }
    model.score_model = fit_logistic(train.features, train.labels, w, options.l2_reg);
  }
  const Eigen::VectorXd scores = original_scores(model, train);

  if (spec.kind != ConstraintKind::GeneralLinear) {
    model.estimates = estimate_marginals(train.groups, train.labels, train.num_groups, options.delta);
    if (!options.groups_observed) {
      if (train.features.cols() == 0) {
        throw std::invalid_argument("inferring the protected attribute needs feature columns");
      }
      const Eigen::MatrixXd x = spec.kind == ConstraintKind::MeanScoreParity
                                    ? train.features
                                    : [&] {
                                        Eigen::MatrixXd xy(train.size(), train.features.cols() + 1);
                                        xy.leftCols(train.features.cols()) = train.features;
                                        for (Eigen::Index i = 0; i < train.size(); ++i) {
                                          xy(i, train.features.cols()) = train.labels[static_cast<std::size_t>(i)];
                                        }
                                        return xy;
                                      }();
      model.group_model = fit_multinomial(x, train.groups, train.num_groups, w, options.l2_reg);
    }
  }

  const ConstraintFeatures f = constraint_features(model, train, scores);
  model.dual = detail::solve(f, scores, model);

  if (options.select_threshold) {
    Eigen::VectorXd transformed(scores.size());
    const Eigen::VectorXd mu = f.matrix * model.dual.lambda;
    for (Eigen::Index i = 0; i < mu.size(); ++i) transformed(i) = transform_score(mu(i), scores(i));
    model.threshold = select_threshold(as_span(transformed), train.labels).threshold;
  }
  return model;
}

/// Weighted dataset of twice the size: (x_i, 0, 1 - r'_i), (x_i, 1, r'_i).
inline WeightedDataset preprocess(const FstModel& model, const Dataset& train) {
  if (model.mode != Mode::PreProcess) {
    throw std::invalid_argument("preprocess needs a model fitted in pre-processing mode");
  }
  const Eigen::VectorXd r = transform(model, train);
  const Eigen::Index n = train.size();
  WeightedDataset out;
  out.features.resize(2 * n, train.features.cols());
  out.labels.resize(static_cast<std::size_t>(2 * n));
  out.weights.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.features.row(2 * i) = train.features.row(i);
    out.features.row(2 * i + 1) = train.features.row(i);
    out.labels[static_cast<std::size_t>(2 * i)] = 0;
    out.labels[static_cast<std::size_t>(2 * i + 1)] = 1;
    out.weights(2 * i) = 1.0 - r(i);
    out.weights(2 * i + 1) = r(i);
  }
  return out;
}

/// Re-solves the dual on (unlabelled) test rows with the score model fixed.
/// For MSP the group marginal p_A is re-estimated from the test rows; label
/// dependent estimates are kept from training.
inline FstModel fit_batch(const FstModel& model, const Dataset& test) {
  test.validate();
  FstModel out = model;
  out.mode = Mode::Batch;
  const Eigen::VectorXd scores = original_scores(model, test);

  if (model.spec.kind == ConstraintKind::MeanScoreParity) {
    std::vector<double> p(static_cast<std::size_t>(model.num_groups), 0.0);
    if (model.groups_observed) {
      if (test.groups.empty()) {
        throw std::invalid_argument("protected attribute missing and no group model was fitted");
      }
      for (int a : test.groups) p[static_cast<std::size_t>(a)] += 1.0;
      for (double& v : p) v /= static_cast<double>(test.size());
    } else {
      const Eigen::VectorXd mean = predict_proba(*model.group_model, test.features).colwise().mean();
      for (std::size_t a = 0; a < p.size(); ++a) p[a] = mean(static_cast<Eigen::Index>(a));
    }
    if (model.num_groups > 1) detail::floor_and_normalize(p, model.estimates.delta);
    out.estimates.p_group = p;
  }

  const ConstraintFeatures f = constraint_features(out, test, scores);
  out.dual = detail::solve(f, scores, out);
  return out;
}

}  // namespace fst
