#pragma once

// Utility and fairness metrics for probabilistic scores and their
// thresholded predictions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fst/core_transform.hpp"

namespace fst {

namespace detail {

inline void check_same_length(std::size_t a, std::size_t b) {
  if (a == 0) throw std::invalid_argument("metric of an empty input");
  if (a != b) throw std::invalid_argument("metric inputs differ in length");
}

inline int infer_num_groups(std::span<const int> groups) {
  int k = 0;
  for (int g : groups) {
    if (g < 0) throw std::invalid_argument("negative group id");
    k = std::max(k, g + 1);
  }
  return k;
}

}  // namespace detail

inline double brier_score(std::span<const double> scores, std::span<const int> labels) {
  detail::check_same_length(scores.size(), labels.size());
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double e = scores[i] - labels[i];
    s += e * e;
  }
  return s / static_cast<double>(scores.size());
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counted as 1/2.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_same_length(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j + 1);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        positives += 1.0;
        rank_sum += mid_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw std::invalid_argument("auc needs both classes present");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline std::vector<double> binarize(std::span<const double> scores, double threshold) {
  std::vector<double> out(scores.size());
  std::transform(scores.begin(), scores.end(), out.begin(),
                 [&](double s) { return s > threshold ? 1.0 : 0.0; });
  return out;
}

inline double accuracy(std::span<const double> scores, std::span<const int> labels,
                       double threshold) {
  detail::check_same_length(scores.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    hits += static_cast<std::size_t>((scores[i] > threshold ? 1 : 0) == labels[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

/// Per-group means and the largest |mean(scores | A=a) - mean(scores)|.
struct GroupMeans {
  std::vector<double> means;
  std::vector<std::size_t> counts;
  double overall = 0.0;
  double gap = 0.0;
};

inline GroupMeans group_means(std::span<const double> scores, std::span<const int> groups,
                              int num_groups = 0) {
  detail::check_same_length(scores.size(), groups.size());
  if (num_groups <= 0) num_groups = detail::infer_num_groups(groups);
  GroupMeans out;
  out.means.assign(static_cast<std::size_t>(num_groups), 0.0);
  out.counts.assign(static_cast<std::size_t>(num_groups), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = groups[i];
    if (a < 0 || a >= num_groups) throw std::invalid_argument("group id out of range");
    out.means[static_cast<std::size_t>(a)] += scores[i];
    out.counts[static_cast<std::size_t>(a)] += 1;
    out.overall += scores[i];
  }
  out.overall /= static_cast<double>(scores.size());
  for (std::size_t a = 0; a < out.means.size(); ++a) {
    if (out.counts[a] == 0) {
      throw std::invalid_argument("group " + std::to_string(a) + " has no samples");
    }
    out.means[a] /= static_cast<double>(out.counts[a]);
    out.gap = std::max(out.gap, std::abs(out.means[a] - out.overall));
  }
  return out;
}

/// Mean score parity gap: max_a |E[s | A=a] - E[s]|.
inline double msp_gap(std::span<const double> scores, std::span<const int> groups,
                      int num_groups = 0) {
  return group_means(scores, groups, num_groups).gap;
}

/// Cell means E[s | A=a, Y=y], stratum means E[s | Y=y] and the largest
/// deviation between them. Empty cells are skipped and flagged.
struct CellMeans {
  std::vector<std::array<double, 2>> means;  // [a][y], NaN for empty cells
  std::vector<std::array<std::size_t, 2>> counts;
  std::array<double, 2> stratum{0.0, 0.0};
  double gap = 0.0;
  bool skipped_empty_cells = false;
};

inline CellMeans cell_means(std::span<const double> scores, std::span<const int> groups,
                            std::span<const int> labels, int num_groups = 0) {
  detail::check_same_length(scores.size(), groups.size());
  detail::check_same_length(scores.size(), labels.size());
  if (num_groups <= 0) num_groups = detail::infer_num_groups(groups);
  const auto k = static_cast<std::size_t>(num_groups);
  CellMeans out;
  out.means.assign(k, {0.0, 0.0});
  out.counts.assign(k, {0, 0});
  std::array<std::size_t, 2> stratum_count{0, 0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = groups[i];
    const int y = labels[i];
    if (a < 0 || a >= num_groups) throw std::invalid_argument("group id out of range");
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be binary");
    const auto ai = static_cast<std::size_t>(a);
    const auto yi = static_cast<std::size_t>(y);
    out.means[ai][yi] += scores[i];
    out.counts[ai][yi] += 1;
    out.stratum[yi] += scores[i];
    stratum_count[yi] += 1;
  }
  for (std::size_t y = 0; y < 2; ++y) {
    if (stratum_count[y] == 0) {
      out.stratum[y] = std::nan("");
      out.skipped_empty_cells = true;
      for (std::size_t a = 0; a < k; ++a) out.means[a][y] = std::nan("");
      continue;
    }
    out.stratum[y] /= static_cast<double>(stratum_count[y]);
    for (std::size_t a = 0; a < k; ++a) {
      if (out.counts[a][y] == 0) {
        out.means[a][y] = std::nan("");
        out.skipped_empty_cells = true;
        continue;
      }
      out.means[a][y] /= static_cast<double>(out.counts[a][y]);
      out.gap = std::max(out.gap, std::abs(out.means[a][y] - out.stratum[y]));
    }
  }
  return out;
}

/// Generalized equalized odds gap: max_{a,y} |E[s | A=a, Y=y] - E[s | Y=y]|.
inline double geo_gap(std::span<const double> scores, std::span<const int> groups,
                      std::span<const int> labels, int num_groups = 0) {
  return cell_means(scores, groups, labels, num_groups).gap;
}

/// Statistical parity gap of binary predictions.
inline double sp_gap(std::span<const double> predictions, std::span<const int> groups,
                     int num_groups = 0) {
  return msp_gap(predictions, groups, num_groups);
}

/// Equalized odds gap of binary predictions.
inline double eo_gap(std::span<const double> predictions, std::span<const int> groups,
                     std::span<const int> labels, int num_groups = 0) {
  return geo_gap(predictions, groups, labels, num_groups);
}

/// mean_i H_b(r_i, r'_i).
inline double cross_entropy_utility(std::span<const double> original,
                                    std::span<const double> transformed) {
  detail::check_same_length(original.size(), transformed.size());
  double s = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    s += binary_cross_entropy(original[i], transformed[i]);
  }
  return s / static_cast<double>(original.size());
}

/// KL(Bernoulli(p) || Bernoulli(q)) with 0 log 0 = 0; q is clamped.
inline double bernoulli_kl(double p, double q) {
  const double qc = clamp_score(q);
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / qc);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - qc));
  return kl;
}

inline double mean_kl_divergence(std::span<const double> original,
                                 std::span<const double> transformed) {
  detail::check_same_length(original.size(), transformed.size());
  double s = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) s += bernoulli_kl(original[i], transformed[i]);
  return s / static_cast<double>(original.size());
}

struct MetricsReport {
  std::size_t samples = 0;
  double brier = 0.0;
  std::optional<double> auc;  // absent when only one class is present
  double threshold = 0.5;
  double accuracy = 0.0;
  std::optional<double> cross_entropy;  // when original scores are supplied
  double msp_gap = 0.0;
  double geo_gap = 0.0;
  double sp_gap = 0.0;
  double eo_gap = 0.0;
  bool geo_skipped_empty_cells = false;
  bool eo_skipped_empty_cells = false;
  GroupMeans score_groups;
  CellMeans score_cells;
  GroupMeans prediction_groups;
};

inline MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels,
                              std::span<const int> groups, int num_groups, double threshold,
                              std::span<const double> original_scores = {}) {
  detail::check_same_length(scores.size(), labels.size());
  MetricsReport r;
  r.samples = scores.size();
  r.threshold = threshold;
  r.brier = brier_score(scores, labels);
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives > 0 && static_cast<std::size_t>(positives) < labels.size()) {
    r.auc = auc(scores, labels);
  }
  r.accuracy = accuracy(scores, labels, threshold);
  if (!original_scores.empty()) r.cross_entropy = cross_entropy_utility(original_scores, scores);

  r.score_groups = group_means(scores, groups, num_groups);
  r.msp_gap = r.score_groups.gap;
  r.score_cells = cell_means(scores, groups, labels, num_groups);
  r.geo_gap = r.score_cells.gap;
  r.geo_skipped_empty_cells = r.score_cells.skipped_empty_cells;

  const std::vector<double> preds = binarize(scores, threshold);
  r.prediction_groups = group_means(preds, groups, num_groups);
  r.sp_gap = r.prediction_groups.gap;
  const CellMeans pred_cells = cell_means(preds, groups, labels, num_groups);
  r.eo_gap = pred_cells.gap;
  r.eo_skipped_empty_cells = pred_cells.skipped_empty_cells;
  return r;
}

}  // namespace fst
