#pragma once

// Seeded two-group fixture generator. Labels depend on the group through
// per-group base rates; feature x1 carries label signal and x2 carries
// group signal, so a score model fitted on (x1, x2) inherits the bias.

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fst/pipeline.hpp"

namespace fst {

struct SynthConfig {
  Eigen::Index n = 1000;
  double group1_fraction = 0.5;            // P(A = 1)
  std::array<double, 2> base_rate{0.7, 0.3};  // P(Y = 1 | A = a)
  double label_signal = 1.5;
  double group_signal = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1) throw std::invalid_argument("synthetic sample size must be positive");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(group1_fraction) || !prob(base_rate[0]) || !prob(base_rate[1])) {
      throw std::invalid_argument("synthetic probabilities must lie in [0,1]");
    }
  }
};

/// x1 = label_signal (2y - 1) + N(0,1), x2 = group_signal (1 - 2a) + N(0,1).
inline Dataset synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset d;
  d.num_groups = 2;
  d.features.resize(cfg.n, 2);
  d.groups.resize(static_cast<std::size_t>(cfg.n));
  d.labels.resize(static_cast<std::size_t>(cfg.n));
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int a = unif(gen) < cfg.group1_fraction ? 1 : 0;
    const int y = unif(gen) < cfg.base_rate[static_cast<std::size_t>(a)] ? 1 : 0;
    d.groups[k] = a;
    d.labels[k] = y;
    d.features(i, 0) = cfg.label_signal * (2.0 * y - 1.0) + noise(gen);
    d.features(i, 1) = cfg.group_signal * (1.0 - 2.0 * a) + noise(gen);
  }
  return d;
}

}  // namespace fst
