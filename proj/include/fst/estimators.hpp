#pragma once

// Probabilistic classifiers used to estimate the original score r(x) and,
// when the protected attribute is unavailable at transform time, the group
// posteriors p(A | X) or p(A | X, Y).
//
// Both models maximize the weighted log-likelihood minus (l2/2) ||weights||^2
// (intercepts unpenalized) by Newton/IRLS with step halving. Columns are
// standardized internally; the penalty is applied to the original-scale
// weights, so standardization is a pure reparametrization.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fst/core_transform.hpp"

namespace fst {

struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double l2_reg = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Reference class 0 has its weights and intercept pinned to zero.
struct MultinomialModel {
  int num_classes = 0;
  Eigen::MatrixXd weights;     // num_classes x p
  Eigen::VectorXd intercepts;  // num_classes
  double l2_reg = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline constexpr int kIrlsMaxIter = 100;
inline constexpr double kIrlsTol = 1e-8;
inline constexpr double kRidgeJitter = 1e-10;

namespace detail {

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  explicit Standardizer(const Eigen::MatrixXd& x) {
    const double n = static_cast<double>(x.rows());
    mean = x.colwise().mean();
    scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - mean(j)).square().sum() / n;
      scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }

  // [1, (x - mean) / scale]
  Eigen::MatrixXd design(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = (x.rowwise() - mean).array().rowwise() / scale.array();
    return z;
  }
};

inline double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline void check_fit_inputs(const Eigen::MatrixXd& x, std::span<const int> y,
                             const Eigen::VectorXd& w, double l2_reg) {
  if (x.rows() < 2) throw std::invalid_argument("fitting needs at least two rows");
  if (static_cast<Eigen::Index>(y.size()) != x.rows() || w.size() != x.rows()) {
    throw std::invalid_argument("features, targets and weights differ in length");
  }
  if (!x.allFinite()) throw std::invalid_argument("features must be finite");
  if (!w.allFinite() || (w.array() < 0.0).any() || !(w.sum() > 0.0)) {
    throw std::invalid_argument("sample weights must be non-negative and not all zero");
  }
  if (!(l2_reg >= 0.0)) throw std::invalid_argument("l2_reg must be non-negative");
}

// Solves H step = g, adding a small ridge when H is not numerically positive definite.
inline Eigen::VectorXd solve_spd(Eigen::MatrixXd h, const Eigen::VectorXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXd s = llt.solve(g);
    if (s.allFinite()) return s;
  }
  const double jitter = kRidgeJitter * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
  h.diagonal().array() += jitter;
  return h.ldlt().solve(g);
}

}  // namespace detail

/// Weighted binary logistic regression by IRLS. Perfect separation with
/// l2_reg = 0 leaves converged = false.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y,
                                  const Eigen::VectorXd& sample_weights, double l2_reg) {
  detail::check_fit_inputs(x, y, sample_weights, l2_reg);
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("logistic targets must be binary");
  }
  const detail::Standardizer std_(x);
  const Eigen::MatrixXd z = std_.design(x);
  const Eigen::Index n = z.rows();
  const Eigen::Index k = z.cols();
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)];

  // Penalty diag in standardized coordinates: l2 / scale_j^2, intercept free.
  Eigen::VectorXd pen = Eigen::VectorXd::Zero(k);
  for (Eigen::Index j = 1; j < k; ++j) pen(j) = l2_reg / (std_.scale(j - 1) * std_.scale(j - 1));

  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd eta = z * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      ll += sample_weights(i) * (target(i) * eta(i) - detail::softplus(eta(i)));
    }
    return ll - 0.5 * theta.dot(pen.cwiseProduct(theta));
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
  double value = objective(theta);
  LogisticModel model;
  model.l2_reg = l2_reg;
  for (int it = 1; it <= kIrlsMaxIter; ++it) {
    model.iterations = it;
    const Eigen::VectorXd eta = z * theta;
    Eigen::VectorXd p(n);
    Eigen::VectorXd curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = detail::sigmoid(eta(i));
      curv(i) = sample_weights(i) * p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad =
        z.transpose() * (sample_weights.cwiseProduct(target - p)) - pen.cwiseProduct(theta);
    Eigen::MatrixXd hess = z.transpose() * curv.asDiagonal() * z;
    hess.diagonal() += pen;
    const Eigen::VectorXd step = detail::solve_spd(hess, grad);

    double s = 1.0;
    Eigen::VectorXd next = theta + step;
    double next_value = objective(next);
    for (int halving = 0; halving < 40 && !(next_value >= value); ++halving) {
      s *= 0.5;
      next = theta + s * step;
      next_value = objective(next);
    }
    if (!(next_value >= value)) break;
    // Change measured on the original parameter scale.
    Eigen::VectorXd delta = (next - theta).cwiseAbs();
    delta.tail(k - 1).array() /= std_.scale.transpose().array();
    theta = std::move(next);
    value = next_value;
    if (delta.maxCoeff() < kIrlsTol) {
      model.converged = true;
      break;
    }
  }

  // Without a penalty, a fit that strictly separates the classes has no
  // finite maximizer; the gradient only vanishes through rounding.
  if (model.converged && l2_reg == 0.0) {
    const Eigen::VectorXd eta = z * theta;
    bool separated = true;
    for (Eigen::Index i = 0; i < n && separated; ++i) {
      if (sample_weights(i) > 0.0) separated = (2.0 * target(i) - 1.0) * eta(i) > 0.0;
    }
    if (separated) model.converged = false;
  }

  model.weights = theta.tail(k - 1).array() / std_.scale.transpose().array();
  model.intercept = theta(0) - std_.mean.dot(model.weights);
  return model;
}

/// Uniform-weight convenience overload.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y,
                                  double l2_reg) {
  return fit_logistic(x, y, Eigen::VectorXd::Ones(x.rows()), l2_reg);
}

/// sigmoid(X w + b), clamped to [1e-6, 1 - 1e-6].
inline Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.size()) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.cols()) +
                                " does not match the model (" +
                                std::to_string(model.weights.size()) + ")");
  }
  const Eigen::VectorXd eta = (x * model.weights).array() + model.intercept;
  return eta.unaryExpr([](double e) { return clamp_score(detail::sigmoid(e)); });
}

/// Softmax probabilities, rows summing to one.
inline Eigen::MatrixXd predict_proba(const MultinomialModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.cols()) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.cols()) +
                                " does not match the model (" +
                                std::to_string(model.weights.cols()) + ")");
  }
  Eigen::MatrixXd eta = x * model.weights.transpose();
  eta.rowwise() += model.intercepts.transpose();
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double top = eta.row(i).maxCoeff();
    eta.row(i) = (eta.row(i).array() - top).exp();
    eta.row(i) /= eta.row(i).sum();
  }
  return eta;
}

/// Weighted multinomial (softmax) regression by Newton's method on the
/// (K-1)(p+1) free parameters.
inline MultinomialModel fit_multinomial(const Eigen::MatrixXd& x, std::span<const int> classes,
                                        int num_classes, const Eigen::VectorXd& sample_weights,
                                        double l2_reg) {
  detail::check_fit_inputs(x, classes, sample_weights, l2_reg);
  if (num_classes < 2) throw std::invalid_argument("multinomial fit needs at least two classes");
  for (int c : classes) {
    if (c < 0 || c >= num_classes) {
      throw std::invalid_argument("class id " + std::to_string(c) + " out of range");
    }
  }
  const detail::Standardizer std_(x);
  const Eigen::MatrixXd z = std_.design(x);
  const Eigen::Index n = z.rows();
  const Eigen::Index k = z.cols();
  const Eigen::Index m = num_classes - 1;
  const Eigen::Index dim = m * k;

  Eigen::VectorXd pen_block = Eigen::VectorXd::Zero(k);
  for (Eigen::Index j = 1; j < k; ++j) {
    pen_block(j) = l2_reg / (std_.scale(j - 1) * std_.scale(j - 1));
  }
  Eigen::VectorXd pen(dim);
  for (Eigen::Index c = 0; c < m; ++c) pen.segment(c * k, k) = pen_block;

  // theta block c (length k) holds class c+1's parameters.
  auto logits = [&](const Eigen::VectorXd& theta) {
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, num_classes);
    for (Eigen::Index c = 0; c < m; ++c) eta.col(c + 1) = z * theta.segment(c * k, k);
    return eta;
  };
  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd eta = logits(theta);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double top = eta.row(i).maxCoeff();
      const double lse = top + std::log((eta.row(i).array() - top).exp().sum());
      ll += sample_weights(i) * (eta(i, classes[static_cast<std::size_t>(i)]) - lse);
    }
    return ll - 0.5 * theta.dot(pen.cwiseProduct(theta));
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  double value = objective(theta);
  MultinomialModel model;
  model.num_classes = num_classes;
  model.l2_reg = l2_reg;
  for (int it = 1; it <= kIrlsMaxIter; ++it) {
    model.iterations = it;
    Eigen::MatrixXd prob = logits(theta);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double top = prob.row(i).maxCoeff();
      prob.row(i) = (prob.row(i).array() - top).exp();
      prob.row(i) /= prob.row(i).sum();
    }
    Eigen::VectorXd grad(dim);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index c = 0; c < m; ++c) {
      Eigen::VectorXd resid(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double indicator = classes[static_cast<std::size_t>(i)] == c + 1 ? 1.0 : 0.0;
        resid(i) = sample_weights(i) * (indicator - prob(i, c + 1));
      }
      grad.segment(c * k, k) = z.transpose() * resid;
      for (Eigen::Index e = c; e < m; ++e) {
        Eigen::VectorXd cw(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double same = c == e ? prob(i, c + 1) : 0.0;
          cw(i) = sample_weights(i) * (same - prob(i, c + 1) * prob(i, e + 1));
        }
        const Eigen::MatrixXd block = z.transpose() * cw.asDiagonal() * z;
        hess.block(c * k, e * k, k, k) = block;
        if (e != c) hess.block(e * k, c * k, k, k) = block.transpose();
      }
    }
    grad -= pen.cwiseProduct(theta);
    hess.diagonal() += pen;
    const Eigen::VectorXd step = detail::solve_spd(hess, grad);

    double s = 1.0;
    Eigen::VectorXd next = theta + step;
    double next_value = objective(next);
    for (int halving = 0; halving < 40 && !(next_value >= value); ++halving) {
      s *= 0.5;
      next = theta + s * step;
      next_value = objective(next);
    }
    if (!(next_value >= value)) break;
    Eigen::VectorXd delta = (next - theta).cwiseAbs();
    for (Eigen::Index c = 0; c < m; ++c) {
      delta.segment(c * k + 1, k - 1).array() /= std_.scale.transpose().array();
    }
    theta = std::move(next);
    value = next_value;
    if (delta.maxCoeff() < kIrlsTol) {
      model.converged = true;
      break;
    }
  }

  model.weights = Eigen::MatrixXd::Zero(num_classes, x.cols());
  model.intercepts = Eigen::VectorXd::Zero(num_classes);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::VectorXd block = theta.segment(c * k, k);
    const Eigen::VectorXd w = block.tail(k - 1).array() / std_.scale.transpose().array();
    model.weights.row(c + 1) = w.transpose();
    model.intercepts(c + 1) = block(0) - std_.mean.dot(w);
  }
  return model;
}

inline MultinomialModel fit_multinomial(const Eigen::MatrixXd& x, std::span<const int> classes,
                                        int num_classes, double l2_reg) {
  return fit_multinomial(x, classes, num_classes, Eigen::VectorXd::Ones(x.rows()), l2_reg);
}

}  // namespace fst
