#pragma once

// Constraint features: for each sample the vector f(x) such that the
// per-sample multiplier is mu(x) = lambda^T f(x). Covers mean score parity
// (MSP), generalized equalized odds (GEO) and general linear constraints on
// conditional mean scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fst {

enum class ConstraintKind { MeanScoreParity, GeneralizedEqualizedOdds, GeneralLinear };

inline const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::MeanScoreParity: return "msp";
    case ConstraintKind::GeneralizedEqualizedOdds: return "geo";
    case ConstraintKind::GeneralLinear: return "general";
  }
  return "unknown";
}

inline ConstraintKind constraint_kind_from_string(const std::string& s) {
  if (s == "msp") return ConstraintKind::MeanScoreParity;
  if (s == "geo") return ConstraintKind::GeneralizedEqualizedOdds;
  if (s == "general") return ConstraintKind::GeneralLinear;
  throw std::invalid_argument("unknown constraint kind '" + s + "'");
}

/// One conditioning event E_lj inside a linear constraint: coefficient b_lj,
/// marginal Pr(E_lj) and per-sample posteriors Pr(E_lj | X = x_i).
struct EventTerm {
  double coefficient = 0.0;
  double marginal = 1.0;
  Eigen::VectorXd posterior;
  // Data column holding the posterior; empty means the whole sample space.
  std::string posterior_column;
};

/// sum_j b_lj E[r'(X) | E_lj] <= bound.
struct LinearConstraint {
  double bound = 0.0;
  std::vector<EventTerm> terms;
};

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::MeanScoreParity;
  double epsilon = 0.05;
  std::vector<LinearConstraint> general;  // only for GeneralLinear

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw std::invalid_argument("epsilon must be positive and finite");
    }
    if (kind != ConstraintKind::GeneralLinear) return;
    if (general.empty()) {
      throw std::invalid_argument("general linear constraint set is empty");
    }
    std::optional<Eigen::Index> n;
    for (const auto& row : general) {
      if (row.terms.empty()) {
        throw std::invalid_argument("general linear constraint without terms");
      }
      for (const auto& term : row.terms) {
        if (!(term.marginal > 0.0 && term.marginal <= 1.0)) {
          throw std::invalid_argument("event marginal must lie in (0,1]");
        }
        if (!n) n = term.posterior.size();
        if (term.posterior.size() != *n) {
          throw std::invalid_argument("event posteriors have inconsistent lengths");
        }
        if ((term.posterior.array() < 0.0).any() || (term.posterior.array() > 1.0).any()) {
          throw std::invalid_argument("event posteriors must lie in [0,1]");
        }
      }
    }
    if (*n == 0) throw std::invalid_argument("event posteriors are empty");
  }
};

/// Empirical probabilities used by the MSP/GEO features, floored at delta.
struct ProbabilityEstimates {
  int num_groups = 0;
  double delta = 1e-3;
  std::vector<double> p_group;                      // p_A(a)
  std::array<double, 2> p_label{0.5, 0.5};          // p_Y(y)
  std::vector<std::array<double, 2>> p_group_given_label;  // p_{A|Y}(a|y), [a][y]
  bool has_label_estimates = false;
};

inline constexpr double kDefaultDelta = 1e-3;

namespace detail {

// Raise every entry to at least delta and rescale the others so the total is
// one. Entries that fall under delta after rescaling are pinned as well.
inline void floor_and_normalize(std::span<double> p, double delta) {
  const std::size_t k = p.size();
  std::vector<bool> pinned(k, false);
  for (std::size_t pass = 0; pass <= k; ++pass) {
    double free_mass = 0.0;
    std::size_t num_pinned = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (pinned[i]) {
        ++num_pinned;
      } else {
        free_mass += p[i];
      }
    }
    const double target = 1.0 - delta * static_cast<double>(num_pinned);
    bool changed = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (pinned[i]) {
        p[i] = delta;
      } else if (free_mass > 0.0) {
        p[i] *= target / free_mass;
      }
      if (!pinned[i] && p[i] < delta) {
        pinned[i] = true;
        changed = true;
      }
    }
    if (!changed) return;
  }
}

}  // namespace detail

/// Empirical p_A, p_Y and p_{A|Y}, each floored at delta and renormalized.
/// labels may be empty, in which case only p_A is estimated.
inline ProbabilityEstimates estimate_marginals(std::span<const int> groups,
                                               std::span<const int> labels, int num_groups,
                                               double delta = kDefaultDelta) {
  if (groups.empty()) throw std::invalid_argument("cannot estimate marginals of an empty dataset");
  if (num_groups < 1) throw std::invalid_argument("need at least one group");
  if (!labels.empty() && labels.size() != groups.size()) {
    throw std::invalid_argument("groups and labels differ in length");
  }
  const double max_delta = 1.0 / std::max(num_groups, labels.empty() ? 1 : 2);
  if (!(delta > 0.0) || (num_groups > 1 && delta >= max_delta) ||
      (!labels.empty() && delta >= 0.5)) {
    throw std::invalid_argument("truncation floor delta must lie in (0, 1/categories)");
  }

  ProbabilityEstimates est;
  est.num_groups = num_groups;
  est.delta = delta;
  est.p_group.assign(static_cast<std::size_t>(num_groups), 0.0);
  std::vector<std::array<double, 2>> joint(static_cast<std::size_t>(num_groups), {0.0, 0.0});
  std::array<double, 2> label_count{0.0, 0.0};

  for (std::size_t i = 0; i < groups.size(); ++i) {
    const int a = groups[i];
    if (a < 0 || a >= num_groups) {
      throw std::invalid_argument("unknown group id " + std::to_string(a));
    }
    est.p_group[static_cast<std::size_t>(a)] += 1.0;
    if (!labels.empty()) {
      const int y = labels[i];
      if (y != 0 && y != 1) throw std::invalid_argument("labels must be binary");
      label_count[static_cast<std::size_t>(y)] += 1.0;
      joint[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)] += 1.0;
    }
  }
  const double n = static_cast<double>(groups.size());
  for (double& p : est.p_group) p /= n;
  if (num_groups > 1) detail::floor_and_normalize(est.p_group, delta);

  est.p_group_given_label.assign(static_cast<std::size_t>(num_groups), {0.0, 0.0});
  if (labels.empty()) {
    for (int a = 0; a < num_groups; ++a) {
      const double p = est.p_group[static_cast<std::size_t>(a)];
      est.p_group_given_label[static_cast<std::size_t>(a)] = {p, p};
    }
    return est;
  }

  est.has_label_estimates = true;
  est.p_label = {label_count[0] / n, label_count[1] / n};
  detail::floor_and_normalize(est.p_label, delta);
  for (std::size_t y = 0; y < 2; ++y) {
    std::vector<double> column(static_cast<std::size_t>(num_groups), 0.0);
    for (std::size_t a = 0; a < column.size(); ++a) {
      column[a] = label_count[y] > 0.0 ? joint[a][y] / label_count[y]
                                       : 1.0 / static_cast<double>(num_groups);
    }
    if (num_groups > 1) detail::floor_and_normalize(column, delta);
    for (std::size_t a = 0; a < column.size(); ++a) est.p_group_given_label[a][y] = column[a];
  }
  return est;
}

/// Rows f(x_i) of the dual-to-multiplier map, one column per dual coordinate.
struct ConstraintFeatures {
  ConstraintKind kind = ConstraintKind::MeanScoreParity;
  Eigen::MatrixXd matrix;            // n x d
  std::vector<std::string> labels;   // d column labels, e.g. "a=1" or "a=1,y=0"
  // General linear constraints keep lambda >= 0 with a linear cost
  // sum_l c_l lambda_l instead of the l1 penalty.
  bool nonnegative = false;
  Eigen::VectorXd linear_cost;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index dim() const { return matrix.cols(); }
};

namespace detail {

inline Eigen::MatrixXd one_hot(std::span<const int> groups, int num_groups) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups.size()), num_groups);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const int a = groups[i];
    if (a < 0 || a >= num_groups) {
      throw std::invalid_argument("unknown group id " + std::to_string(a));
    }
    out(static_cast<Eigen::Index>(i), a) = 1.0;
  }
  return out;
}

inline void check_posteriors(const Eigen::MatrixXd& post, int num_groups) {
  if (post.cols() != num_groups) {
    throw std::invalid_argument("group posterior width does not match the number of groups");
  }
  for (Eigen::Index i = 0; i < post.rows(); ++i) {
    if ((post.row(i).array() < 0.0).any() || std::abs(post.row(i).sum() - 1.0) > 1e-6) {
      throw std::invalid_argument("group posterior row " + std::to_string(i) +
                                  " is not a probability vector");
    }
  }
}

}  // namespace detail

/// MSP features from group posteriors p_{A|X}(a|x_i): f_a = post_a / p_A(a) - 1.
inline ConstraintFeatures build_features_msp(const Eigen::MatrixXd& group_posteriors,
                                             const ProbabilityEstimates& est) {
  detail::check_posteriors(group_posteriors, est.num_groups);
  ConstraintFeatures out;
  out.kind = ConstraintKind::MeanScoreParity;
  out.matrix.resize(group_posteriors.rows(), est.num_groups);
  for (int a = 0; a < est.num_groups; ++a) {
    out.matrix.col(a) = group_posteriors.col(a).array() / est.p_group[static_cast<std::size_t>(a)] - 1.0;
    out.labels.push_back("a=" + std::to_string(a));
  }
  return out;
}

/// MSP features with the protected attribute observed: f_a = 1(A_i = a) / p_A(a) - 1.
inline ConstraintFeatures build_features_msp(std::span<const int> groups,
                                             const ProbabilityEstimates& est) {
  return build_features_msp(detail::one_hot(groups, est.num_groups), est);
}

/// GEO features from p_{A|X,Y}(a | x_i, y) for y = 0, 1, with the score r_i
/// standing in for p_{Y|X}(1 | x_i). Columns are ordered (a, y=0) for all a,
/// then (a, y=1).
inline ConstraintFeatures build_features_geo(const Eigen::VectorXd& scores,
                                             const Eigen::MatrixXd& posteriors_y0,
                                             const Eigen::MatrixXd& posteriors_y1,
                                             const ProbabilityEstimates& est) {
  if (!est.has_label_estimates) {
    throw std::invalid_argument("GEO features need label-conditional estimates");
  }
  detail::check_posteriors(posteriors_y0, est.num_groups);
  detail::check_posteriors(posteriors_y1, est.num_groups);
  const Eigen::Index n = scores.size();
  if (posteriors_y0.rows() != n || posteriors_y1.rows() != n) {
    throw std::invalid_argument("scores and group posteriors differ in length");
  }
  if ((scores.array() < 0.0).any() || (scores.array() > 1.0).any()) {
    throw std::invalid_argument("scores must lie in [0,1]");
  }
  const int k = est.num_groups;
  ConstraintFeatures out;
  out.kind = ConstraintKind::GeneralizedEqualizedOdds;
  out.matrix.resize(n, 2 * k);
  const Eigen::ArrayXd w0 = (1.0 - scores.array()) / est.p_label[0];
  const Eigen::ArrayXd w1 = scores.array() / est.p_label[1];
  for (int y = 0; y < 2; ++y) {
    const Eigen::MatrixXd& post = y == 0 ? posteriors_y0 : posteriors_y1;
    const Eigen::ArrayXd& w = y == 0 ? w0 : w1;
    for (int a = 0; a < k; ++a) {
      const double p = est.p_group_given_label[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)];
      out.matrix.col(y * k + a) = w * (post.col(a).array() / p - 1.0);
      out.labels.push_back("a=" + std::to_string(a) + ",y=" + std::to_string(y));
    }
  }
  return out;
}

/// GEO features with the protected attribute observed.
inline ConstraintFeatures build_features_geo(const Eigen::VectorXd& scores,
                                             std::span<const int> groups,
                                             const ProbabilityEstimates& est) {
  if (static_cast<Eigen::Index>(groups.size()) != scores.size()) {
    throw std::invalid_argument("scores and groups differ in length");
  }
  const Eigen::MatrixXd hot = detail::one_hot(groups, est.num_groups);
  return build_features_geo(scores, hot, hot, est);
}

/// General linear constraints: f_l(x_i) = sum_j b_lj Pr(E_lj | x_i) / Pr(E_lj).
/// The resulting dual keeps lambda >= 0 with linear cost sum_l c_l lambda_l.
inline ConstraintFeatures build_features_general(const ConstraintSpec& spec) {
  if (spec.kind != ConstraintKind::GeneralLinear) {
    throw std::invalid_argument("build_features_general needs a general linear spec");
  }
  spec.validate();
  const Eigen::Index n = spec.general.front().terms.front().posterior.size();
  const auto d = static_cast<Eigen::Index>(spec.general.size());
  ConstraintFeatures out;
  out.kind = ConstraintKind::GeneralLinear;
  out.nonnegative = true;
  out.matrix = Eigen::MatrixXd::Zero(n, d);
  out.linear_cost.resize(d);
  for (Eigen::Index l = 0; l < d; ++l) {
    const auto& row = spec.general[static_cast<std::size_t>(l)];
    for (const auto& term : row.terms) {
      out.matrix.col(l) += (term.coefficient / term.marginal) * term.posterior;
    }
    out.linear_cost(l) = row.bound;
    out.labels.push_back("l=" + std::to_string(l));
  }
  return out;
}

}  // namespace fst
