#pragma once

// Scalar kernel of the fair score transform: binary cross-entropy, the
// closed-form optimal transformed score r*(mu; r), the dual integrand
// g(mu; r) = -H_b(r, r*) - mu * r*, and its first two derivatives in mu.
//
// All functions are pure and thread-safe.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fst {

/// Scores are clamped to [kScoreFloor, 1 - kScoreFloor] before any transform
/// or entropy evaluation.
inline constexpr double kScoreFloor = 1e-6;

inline double clamp_score(double r) {
  return std::clamp(r, kScoreFloor, 1.0 - kScoreFloor);
}

namespace detail {

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0,1], got " +
                                std::to_string(p));
  }
}

inline void check_multiplier(double mu) {
  if (!std::isfinite(mu)) {
    throw std::invalid_argument("multiplier must be finite");
  }
}

// (1+mu)^2 - 4 r mu, arranged so both summands are non-negative.
inline double discriminant(double mu, double r) {
  if (mu >= 0.0) {
    const double t = 1.0 - mu;
    return t * t + 4.0 * mu * (1.0 - r);
  }
  const double t = 1.0 + mu;
  return t * t - 4.0 * r * mu;
}

// r*(mu; r) for r already in (0,1). For 1 + mu >= 0 the conjugate form
// 2r / (1 + mu + sqrt(D)) has no cancellation; below that the direct root
// (1 + mu - sqrt(D)) / (2 mu) is the stable one.
inline double optimal_score(double mu, double r) {
  const double s = std::sqrt(discriminant(mu, r));
  const double shifted = 1.0 + mu;
  if (shifted >= 0.0) {
    return 2.0 * r / (shifted + s);
  }
  return (shifted - s) / (2.0 * mu);
}

// 1 - r*(mu; r), via the reflection 1 - r*(mu; r) = r*(-mu; 1 - r).
inline double optimal_score_complement(double mu, double r) {
  return optimal_score(-mu, 1.0 - r);
}

}  // namespace detail

/// -p log q - (1-p) log(1-q) in nats, with q clamped and 0 log 0 := 0.
inline double binary_cross_entropy(double p, double q) {
  detail::check_probability(p, "p");
  detail::check_probability(q, "q");
  q = clamp_score(q);
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(q);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-q);
  return h;
}

/// Optimal fairness-constrained score for multiplier mu and original score r.
/// Equals r at mu = 0, is strictly decreasing in mu and increasing in r.
inline double transform_score(double mu, double r) {
  detail::check_multiplier(mu);
  detail::check_probability(r, "score");
  if (mu == 0.0) return clamp_score(r);
  return std::clamp(detail::optimal_score(mu, clamp_score(r)), 0.0, 1.0);
}

/// g(mu; r) = -H_b(r, r*) - mu r*.
inline double g_value(double mu, double r) {
  detail::check_multiplier(mu);
  detail::check_probability(r, "score");
  r = clamp_score(r);
  const double q = detail::optimal_score(mu, r);
  const double q_bar = detail::optimal_score_complement(mu, r);
  return r * std::log(q) + (1.0 - r) * std::log(q_bar) - mu * q;
}

/// dg/dmu = -r*(mu; r).
inline double g_grad(double mu, double r) { return -transform_score(mu, r); }

/// d^2 g / dmu^2 = -dr*/dmu >= 0.
///
/// The textbook expression (1/(2 mu^2)) (1 - N / sqrt(D)) with
/// N = 1 + (1 - 2r) mu cancels badly near mu = 0. Since D - N^2 = 4 r (1-r) mu^2
/// it equals 2 r (1-r) / (sqrt(D) (sqrt(D) + N)), which is exact at mu = 0
/// (giving r (1-r)) and cancellation-free whenever N > 0. For N <= 0 the
/// textbook form has no cancellation and is used instead.
inline double g_hess(double mu, double r) {
  detail::check_multiplier(mu);
  detail::check_probability(r, "score");
  r = clamp_score(r);
  if (mu == 0.0) return r * (1.0 - r);
  const double s = std::sqrt(detail::discriminant(mu, r));
  const double n = 1.0 + (1.0 - 2.0 * r) * mu;
  if (n > 0.0) {
    return 2.0 * r * (1.0 - r) / (s * (s + n));
  }
  return (1.0 - n / s) / (2.0 * mu * mu);
}

}  // namespace fst
