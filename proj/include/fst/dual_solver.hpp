#pragma once

// Empirical dual of the fairness-constrained score problem,
//
//   min_lambda  (1/n) sum_i g(lambda^T f(x_i); r_i) + eps ||lambda||_1,
//
// (or + c^T lambda with lambda >= 0 for general linear constraints), solved
// by scaled ADMM. Two decompositions are provided: one splitting on the
// per-sample multipliers mu_i = lambda^T f(x_i), and one splitting on the
// auxiliary group-level variables lambda_tilde = M lambda. A grid-search
// oracle is included for testing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fst/constraints.hpp"
#include "fst/core_transform.hpp"

namespace fst {

struct AdmmConfig {
  // Penalty on the sample-sum scale, i.e. the augmented term is
  // (rho / 2n) ||mu - B lambda + c||^2 against the (1/n)-averaged objective.
  double rho = 1.0;
  int max_iter = 1000;
  double tol_abs = 1e-6;
  double tol_rel = 1e-4;
  int newton_max_iter = 50;
  double newton_tol = 1e-12;
  double cd_tol = 1e-10;
  int cd_max_iter = 10000;
  bool record_trace = false;

  void validate() const {
    if (!(rho > 0.0) || !(tol_abs > 0.0) || !(tol_rel > 0.0) || !(newton_tol > 0.0) ||
        !(cd_tol > 0.0)) {
      throw std::invalid_argument("ADMM penalty and tolerances must be positive");
    }
    if (max_iter < 1 || newton_max_iter < 1 || cd_max_iter < 1) {
      throw std::invalid_argument("ADMM iteration caps must be at least 1");
    }
  }
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double lambda_l1 = 0.0;
};

struct DualSolution {
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;         // per-sample multipliers of the returned iterate
  Eigen::VectorXd auxiliary;  // lambda_tilde, alternative decomposition only
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
};

/// Upper bound on ||lambda||_1 over the sub-level set {J(lambda) <= J(0)}.
inline double lambda_l1_bound(double epsilon) { return std::numbers::ln2 / epsilon; }

namespace detail {

inline void check_problem(const ConstraintFeatures& features, const Eigen::VectorXd& scores) {
  if (features.rows() < 1 || features.dim() < 1) {
    throw std::invalid_argument("dual problem needs n >= 1 samples and d >= 1 coordinates");
  }
  if (scores.size() != features.rows()) {
    throw std::invalid_argument("scores and constraint features differ in length");
  }
  if (!features.matrix.allFinite()) {
    throw std::invalid_argument("constraint features must be finite");
  }
  if ((scores.array() < 0.0).any() || (scores.array() > 1.0).any() || !scores.allFinite()) {
    throw std::invalid_argument("scores must lie in [0,1]");
  }
  if (features.nonnegative && features.linear_cost.size() != features.dim()) {
    throw std::invalid_argument("linear cost does not match the feature dimension");
  }
}

inline Eigen::VectorXd clamp_scores(const Eigen::VectorXd& scores) {
  return scores.unaryExpr([](double r) { return clamp_score(r); });
}

inline double mean_g(const Eigen::VectorXd& mu, const Eigen::VectorXd& r) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) s += g_value(mu(i), r(i));
  return s / static_cast<double>(mu.size());
}

}  // namespace detail

/// Penalty attached to the quadratic lambda subproblem.
struct Penalty {
  bool nonnegative = false;
  double l1_weight = 0.0;
  Eigen::VectorXd linear_cost;

  double operator()(const Eigen::VectorXd& lambda) const {
    return nonnegative ? linear_cost.dot(lambda) : l1_weight * lambda.lpNorm<1>();
  }
};

inline Penalty penalty_for(const ConstraintFeatures& features, double epsilon) {
  Penalty p;
  p.nonnegative = features.nonnegative;
  p.l1_weight = epsilon;
  if (features.nonnegative) p.linear_cost = features.linear_cost;
  return p;
}

/// (1/n) sum_i g(lambda^T f(x_i); r_i) + eps ||lambda||_1, or + c^T lambda for
/// general linear constraints.
inline double dual_objective(const Eigen::VectorXd& lambda, const ConstraintFeatures& features,
                             const Eigen::VectorXd& scores, double epsilon) {
  detail::check_problem(features, scores);
  if (lambda.size() != features.dim()) {
    throw std::invalid_argument("lambda dimension does not match the constraint features");
  }
  const Eigen::VectorXd mu = features.matrix * lambda;
  return detail::mean_g(mu, detail::clamp_scores(scores)) + penalty_for(features, epsilon)(lambda);
}

/// Minimizer of (1/n) g(mu; r) + (rho/2) (mu - a)^2.
///
/// The first-order condition mu = a + r*(mu; r) / (n rho) with r* in (0,1)
/// brackets the root in [a, a + 1/(n rho)]. Newton steps that leave the
/// bracket are replaced by bisection; if Newton has not converged after
/// max_iter steps the bracket is bisected to tolerance.
inline double mu_update(double r, double a, double rho, double n, int max_iter = 50,
                        double tol = 1e-12) {
  if (!(rho > 0.0) || !(n > 0.0) || !std::isfinite(a)) {
    throw std::invalid_argument("mu_update needs rho > 0, n > 0 and finite a");
  }
  r = clamp_score(r);
  const double w = 1.0 / n;
  double lo = a;
  double hi = a + w / rho;
  auto slope = [&](double mu) { return -w * detail::optimal_score(mu, r) + rho * (mu - a); };

  double mu = a + w * detail::optimal_score(a, r) / rho;
  for (int it = 0; it < max_iter; ++it) {
    const double h = slope(mu);
    if (h == 0.0) return mu;
    if (h > 0.0) {
      hi = std::min(hi, mu);
    } else {
      lo = std::max(lo, mu);
    }
    const double curvature = w * g_hess(mu, r) + rho;
    double next = mu - h / curvature;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - mu) <= tol * (1.0 + std::abs(mu))) return next;
    mu = next;
  }
  for (int it = 0; it < 200 && hi - lo > tol * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (slope(mid) > 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Cyclic coordinate descent for  penalty(lambda) + lambda^T v + lambda^T F lambda
/// with F symmetric PSD. Coordinates whose diagonal entry is below 1e-14 are
/// frozen at zero.
inline Eigen::VectorXd minimize_penalized_quadratic(const Eigen::VectorXd& v,
                                                    const Eigen::MatrixXd& F,
                                                    const Penalty& penalty,
                                                    Eigen::VectorXd start, double tol = 1e-10,
                                                    int max_iter = 10000) {
  const Eigen::Index d = v.size();
  if (F.rows() != d || F.cols() != d || start.size() != d) {
    throw std::invalid_argument("quadratic subproblem dimensions disagree");
  }
  Eigen::VectorXd lambda = std::move(start);
  for (int sweep = 0; sweep < max_iter; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double fjj = F(j, j);
      double next = 0.0;
      if (fjj >= 1e-14) {
        const double b = v(j) + 2.0 * (F.row(j).dot(lambda) - fjj * lambda(j));
        if (penalty.nonnegative) {
          next = std::max(0.0, -(b + penalty.linear_cost(j)) / (2.0 * fjj));
        } else {
          const double shrunk = std::max(std::abs(b) - penalty.l1_weight, 0.0);
          next = b > 0.0 ? -shrunk / (2.0 * fjj) : shrunk / (2.0 * fjj);
        }
      }
      max_change = std::max(max_change, std::abs(next - lambda(j)));
      lambda(j) = next;
    }
    if (max_change < tol) break;
  }
  return lambda;
}

/// lambda-update of the multiplier splitting: argmin of
/// eps ||lambda||_1 + lambda^T v + lambda^T F lambda with
/// F = (rho/2) sum_i f_i f_i^T and v = -rho sum_i f_i (mu_i + c_i).
inline Eigen::VectorXd lambda_update(const Eigen::VectorXd& mu, const Eigen::VectorXd& scaled_dual,
                                     const ConstraintFeatures& features, double epsilon,
                                     double rho, const AdmmConfig& config = {}) {
  if (mu.size() != features.rows() || scaled_dual.size() != features.rows()) {
    throw std::invalid_argument("lambda_update: vector lengths do not match the features");
  }
  const Eigen::MatrixXd& B = features.matrix;
  const Eigen::MatrixXd F = 0.5 * rho * (B.transpose() * B);
  const Eigen::VectorXd v = -rho * (B.transpose() * (mu + scaled_dual));
  return minimize_penalized_quadratic(v, F, penalty_for(features, epsilon),
                                      Eigen::VectorXd::Zero(features.dim()), config.cd_tol,
                                      config.cd_max_iter);
}

namespace detail {

// Keeps the lowest-objective iterate, seeded with lambda = 0.
// Soft-thresholding can leave -0.0 entries; x + 0.0 maps them to +0.0.
inline Eigen::VectorXd without_negative_zero(const Eigen::VectorXd& v) {
  return (v.array() + 0.0).matrix();
}

struct BestIterate {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;
  Eigen::VectorXd auxiliary;

  void offer(double obj, const Eigen::VectorXd& l, const Eigen::VectorXd& m,
             const Eigen::VectorXd& aux) {
    if (obj < objective) {
      objective = obj;
      lambda = l;
      mu = m;
      auxiliary = aux;
    }
  }
};

}  // namespace detail

/// Scaled ADMM splitting on mu_i = lambda^T f(x_i):
///   mu_i   <- argmin (1/n) g(mu; r_i) + (rho'/2) (mu - lambda^T f_i + c_i)^2
///   lambda <- argmin penalty(lambda) + (rho'/2) sum_i (mu_i - lambda^T f_i + c_i)^2
///   c_i    <- c_i + mu_i - lambda^T f_i
/// with rho' = config.rho / n. Residuals are measured on the sample-sum scale.
/// Never throws on non-convergence; the best iterate is returned with
/// converged = false.
inline DualSolution solve_dual_admm(const ConstraintFeatures& features,
                                    const Eigen::VectorXd& scores, double epsilon,
                                    const AdmmConfig& config = {}) {
  detail::check_problem(features, scores);
  config.validate();
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");

  const Eigen::MatrixXd& B = features.matrix;
  const Eigen::Index n = B.rows();
  const Eigen::Index d = B.cols();
  const double n_real = static_cast<double>(n);
  const double rho = config.rho / n_real;
  const double sqrt_n = std::sqrt(n_real);
  const Eigen::VectorXd r = detail::clamp_scores(scores);
  const Penalty penalty = penalty_for(features, epsilon);
  const Eigen::MatrixXd F = 0.5 * rho * (B.transpose() * B);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd fitted = Eigen::VectorXd::Zero(n);  // B lambda
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);

  DualSolution out;
  detail::BestIterate best;
  best.offer(detail::mean_g(mu, r), lambda, mu, {});

  for (int k = 1; k <= config.max_iter; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = mu_update(r(i), fitted(i) - c(i), rho, n_real, config.newton_max_iter,
                        config.newton_tol);
    }
    const Eigen::VectorXd v = -rho * (B.transpose() * (mu + c));
    Eigen::VectorXd next =
        minimize_penalized_quadratic(v, F, penalty, lambda, config.cd_tol, config.cd_max_iter);
    const Eigen::VectorXd next_fitted = B * next;
    c += mu - next_fitted;

    const double primal = (mu - next_fitted).norm();
    const double dual = config.rho * (next_fitted - fitted).norm();
    const double eps_primal = sqrt_n * config.tol_abs + config.tol_rel * std::max(mu.norm(), next_fitted.norm());
    const double eps_dual = sqrt_n * config.tol_abs + config.tol_rel * config.rho * c.norm();
    lambda = std::move(next);
    fitted = next_fitted;

    const double objective = detail::mean_g(fitted, r) + penalty(lambda);
    best.offer(objective, lambda, mu, {});
    if (config.record_trace) {
      out.trace.push_back({k, objective, primal, dual, lambda.lpNorm<1>()});
    }
    out.iterations = k;
    out.primal_residual = primal;
    out.dual_residual = dual;
    if (primal < eps_primal && dual < eps_dual) {
      out.converged = true;
      out.lambda = detail::without_negative_zero(lambda);
      out.mu = mu;
      out.objective = objective;
      return out;
    }
  }
  out.lambda = detail::without_negative_zero(best.lambda);
  out.mu = best.mu;
  out.objective = best.objective;
  return out;
}

// ---------------------------------------------------------------------------
// Alternative decomposition on lambda_tilde.

/// Block-diagonal coupling M with lambda_tilde = M lambda; each block is
/// diag(1/p) - 1 1^T for p = p_A (MSP) or p_{A|Y}(.|y) (GEO, one block per y).
inline Eigen::MatrixXd alt_coupling_matrix(ConstraintKind kind, const ProbabilityEstimates& est) {
  const int k = est.num_groups;
  auto block = [&](auto prob) {
    Eigen::MatrixXd m = -Eigen::MatrixXd::Ones(k, k);
    for (int a = 0; a < k; ++a) m(a, a) += 1.0 / prob(a);
    return m;
  };
  if (kind == ConstraintKind::MeanScoreParity) {
    return block([&](int a) { return est.p_group[static_cast<std::size_t>(a)]; });
  }
  if (kind == ConstraintKind::GeneralizedEqualizedOdds) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * k, 2 * k);
    for (int y = 0; y < 2; ++y) {
      m.block(y * k, y * k, k, k) = block([&](int a) {
        return est.p_group_given_label[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)];
      });
    }
    return m;
  }
  throw std::invalid_argument("alternative decomposition supports MSP and GEO only");
}

/// Design matrix B with mu = B lambda_tilde: B_{i,a} = p_{A|X}(a | x_i) for
/// MSP and B_{i,(a,y)} = w_y(x_i) p_{A|X,Y}(a | x_i, y) for GEO, where
/// w_0 = (1 - r_i)/p_Y(0), w_1 = r_i/p_Y(1). Recovered from the features via
/// f = w (post / p - 1), i.e. B = p (f + w).
inline Eigen::MatrixXd alt_design_matrix(const ConstraintFeatures& features,
                                         const Eigen::VectorXd& scores,
                                         const ProbabilityEstimates& est) {
  const int k = est.num_groups;
  const Eigen::MatrixXd& f = features.matrix;
  if (features.kind == ConstraintKind::MeanScoreParity) {
    if (f.cols() != k) throw std::invalid_argument("MSP features must have |A| columns");
    Eigen::MatrixXd b(f.rows(), k);
    for (int a = 0; a < k; ++a) {
      b.col(a) = est.p_group[static_cast<std::size_t>(a)] * (f.col(a).array() + 1.0);
    }
    return b;
  }
  if (features.kind == ConstraintKind::GeneralizedEqualizedOdds) {
    if (f.cols() != 2 * k) throw std::invalid_argument("GEO features must have 2|A| columns");
    const Eigen::VectorXd r = detail::clamp_scores(scores);
    const Eigen::ArrayXd w0 = (1.0 - r.array()) / est.p_label[0];
    const Eigen::ArrayXd w1 = r.array() / est.p_label[1];
    Eigen::MatrixXd b(f.rows(), 2 * k);
    for (int y = 0; y < 2; ++y) {
      const Eigen::ArrayXd& w = y == 0 ? w0 : w1;
      for (int a = 0; a < k; ++a) {
        const double p = est.p_group_given_label[static_cast<std::size_t>(a)][static_cast<std::size_t>(y)];
        b.col(y * k + a) = p * (f.col(y * k + a).array() + w);
      }
    }
    return b;
  }
  throw std::invalid_argument("alternative decomposition supports MSP and GEO only");
}

/// Hessian of (1/n) sum_i g(b_i^T t; r_i) in t: -(1/n) B^T H B with
/// H = diag(dr*/dmu) = -diag(g'').
inline Eigen::MatrixXd alt_newton_hessian(const Eigen::MatrixXd& design,
                                          const Eigen::VectorXd& lambda_tilde,
                                          const Eigen::VectorXd& scores) {
  const Eigen::VectorXd mu = design * lambda_tilde;
  Eigen::VectorXd curv(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) curv(i) = g_hess(mu(i), scores(i));
  return design.transpose() * curv.asDiagonal() * design / static_cast<double>(mu.size());
}

namespace detail {

// argmin_t (1/n) sum_i g(b_i^T t; r_i) + (rho/2) ||t - target||^2 by damped Newton.
inline Eigen::VectorXd alt_newton_solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& r,
                                        const Eigen::VectorXd& target, double rho,
                                        Eigen::VectorXd t, const AdmmConfig& config) {
  const double n = static_cast<double>(design.rows());
  const Eigen::Index d = design.cols();
  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* mu_out) {
    Eigen::VectorXd mu = design * x;
    const double val = mean_g(mu, r) + 0.5 * rho * (x - target).squaredNorm();
    if (mu_out) *mu_out = std::move(mu);
    return val;
  };
  Eigen::VectorXd mu;
  double value = objective(t, &mu);
  for (int it = 0; it < config.newton_max_iter; ++it) {
    Eigen::VectorXd rstar(mu.size());
    Eigen::VectorXd curv(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      rstar(i) = optimal_score(mu(i), r(i));
      curv(i) = g_hess(mu(i), r(i));
    }
    const Eigen::VectorXd grad = -(design.transpose() * rstar) / n + rho * (t - target);
    const Eigen::MatrixXd hess = design.transpose() * curv.asDiagonal() * design / n +
                                 rho * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd step = -hess.ldlt().solve(grad);
    const double decrement = -grad.dot(step);
    if (!(decrement > 0.5 * config.newton_tol)) break;

    double s = 1.0;
    Eigen::VectorXd trial;
    Eigen::VectorXd trial_mu;
    double trial_value = value;
    for (int ls = 0; ls < 60; ++ls) {
      trial = t + s * step;
      trial_value = objective(trial, &trial_mu);
      if (trial_value <= value - 1e-4 * s * decrement) break;
      s *= 0.5;
    }
    if (!(trial_value <= value)) break;
    const double moved = (trial - t).lpNorm<Eigen::Infinity>();
    t = std::move(trial);
    mu = std::move(trial_mu);
    value = trial_value;
    if (moved <= 1e-13 * (1.0 + t.lpNorm<Eigen::Infinity>())) break;
  }
  return t;
}

}  // namespace detail

/// Scaled ADMM splitting on lambda_tilde = M lambda (MSP/GEO only):
///   t      <- argmin (1/n) sum_i g(b_i^T t; r_i) + (rho/2) ||t - M lambda + u||^2   (Newton)
///   lambda <- argmin eps ||lambda||_1 + (rho/2) ||M lambda - t - u||^2            (coordinate descent)
///   u      <- u + t - M lambda
/// The coupling constraint is d-dimensional, so rho is used as configured.
inline DualSolution solve_dual_admm_alt(const ConstraintFeatures& features,
                                        const Eigen::VectorXd& scores, double epsilon,
                                        const ProbabilityEstimates& est,
                                        const AdmmConfig& config = {}) {
  detail::check_problem(features, scores);
  config.validate();
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");

  const Eigen::MatrixXd M = alt_coupling_matrix(features.kind, est);
  const Eigen::MatrixXd design = alt_design_matrix(features, scores, est);
  const Eigen::VectorXd r = detail::clamp_scores(scores);
  const Eigen::Index d = features.dim();
  const double rho = config.rho;
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  const Penalty penalty = penalty_for(features, epsilon);
  const Eigen::MatrixXd F = 0.5 * rho * (M.transpose() * M);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd coupled = Eigen::VectorXd::Zero(d);  // M lambda
  Eigen::VectorXd t = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);

  DualSolution out;
  detail::BestIterate best;
  best.offer(detail::mean_g(Eigen::VectorXd::Zero(r.size()), r), lambda,
             Eigen::VectorXd::Zero(r.size()), t);

  for (int k = 1; k <= config.max_iter; ++k) {
    t = detail::alt_newton_solve(design, r, coupled - u, rho, t, config);
    const Eigen::VectorXd v = -rho * (M.transpose() * (t + u));
    Eigen::VectorXd next =
        minimize_penalized_quadratic(v, F, penalty, lambda, config.cd_tol, config.cd_max_iter);
    const Eigen::VectorXd next_coupled = M * next;
    u += t - next_coupled;

    const double primal = (t - next_coupled).norm();
    const double dual = rho * (next_coupled - coupled).norm();
    const double eps_primal = sqrt_d * config.tol_abs + config.tol_rel * std::max(t.norm(), next_coupled.norm());
    const double eps_dual = sqrt_d * config.tol_abs + config.tol_rel * rho * u.norm();
    lambda = std::move(next);
    coupled = next_coupled;

    const Eigen::VectorXd mu = features.matrix * lambda;
    const double objective = detail::mean_g(mu, r) + penalty(lambda);
    best.offer(objective, lambda, design * t, t);
    if (config.record_trace) {
      out.trace.push_back({k, objective, primal, dual, lambda.lpNorm<1>()});
    }
    out.iterations = k;
    out.primal_residual = primal;
    out.dual_residual = dual;
    if (primal < eps_primal && dual < eps_dual) {
      out.converged = true;
      out.lambda = detail::without_negative_zero(lambda);
      out.mu = design * t;
      out.auxiliary = t;
      out.objective = objective;
      return out;
    }
  }
  out.lambda = detail::without_negative_zero(best.lambda);
  out.mu = best.mu;
  out.auxiliary = best.auxiliary;
  out.objective = best.objective;
  return out;
}

// ---------------------------------------------------------------------------
// Grid-search oracle.

/// Exhaustive minimization of dual_objective over the grid
/// {k * step : |k * step| <= half_width}^d (or [0, half_width]^d for
/// nonnegative duals), d <= 3. Along the last coordinate the objective is a
/// convex sequence, so its grid minimum is located by bisection on forward
/// differences; all other coordinates are enumerated.
inline Eigen::VectorXd brute_force_dual(const ConstraintFeatures& features,
                                        const Eigen::VectorXd& scores, double epsilon,
                                        double half_width, double step) {
  detail::check_problem(features, scores);
  const Eigen::Index d = features.dim();
  if (d > 3) throw std::invalid_argument("brute_force_dual supports d <= 3");
  if (!(step > 0.0) || !(half_width >= 0.0)) {
    throw std::invalid_argument("grid step must be positive and half-width non-negative");
  }
  const auto m = static_cast<long>(std::floor(half_width / step + 1e-9));
  const long lo = features.nonnegative ? 0 : -m;
  const long hi = m;
  const long width = hi - lo + 1;

  const Eigen::MatrixXd& B = features.matrix;
  const Eigen::VectorXd r = detail::clamp_scores(scores);
  const Penalty penalty = penalty_for(features, epsilon);
  const Eigen::VectorXd last_col = B.col(d - 1);

  Eigen::VectorXd lambda(d);
  Eigen::VectorXd base(B.rows());
  auto value_at = [&](long k) {
    lambda(d - 1) = static_cast<double>(k) * step;
    const Eigen::VectorXd mu = base + lambda(d - 1) * last_col;
    return detail::mean_g(mu, r) + penalty(lambda);
  };

  Eigen::VectorXd best_lambda = Eigen::VectorXd::Zero(d);
  double best_value = std::numeric_limits<double>::infinity();
  long outer_count = 1;
  for (Eigen::Index j = 0; j + 1 < d; ++j) outer_count *= width;

  for (long outer = 0; outer < outer_count; ++outer) {
    long code = outer;
    base.setZero();
    for (Eigen::Index j = 0; j + 1 < d; ++j) {
      lambda(j) = static_cast<double>(lo + code % width) * step;
      code /= width;
      base += lambda(j) * B.col(j);
    }
    // Smallest k in [lo, hi] with value(k+1) - value(k) >= 0.
    long a = lo;
    long b = hi;
    while (a < b) {
      const long mid = a + (b - a) / 2;
      if (value_at(mid + 1) - value_at(mid) >= 0.0) {
        b = mid;
      } else {
        a = mid + 1;
      }
    }
    const double v = value_at(a);
    if (v < best_value) {
      best_value = v;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace fst
