// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fst/fst.hpp"

#ifndef FST_CLI_PATH
#error "FST_CLI_PATH must point at the fst command-line tool"
#endif

namespace {

using namespace fst;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && out_.pass) {
      out_.pass = false;
      out_.detail = what;
    }
  }
  void note(const std::string& s) {
    if (out_.pass) out_.detail = s;
  }
  Outcome outcome() const { return out_; }

 private:
  Outcome out_;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

ConstraintSpec preset(ConstraintKind kind, double eps) {
  ConstraintSpec s;
  s.kind = kind;
  s.epsilon = eps;
  return s;
}

// n = 5000, two groups with base rates 0.7 / 0.3 and group-revealing features.
const Dataset& biased_fixture() {
  static const Dataset d = synthesize({.n = 5000, .seed = 1});
  return d;
}

std::vector<double> grid(double lo, double hi, int k) {
  std::vector<double> g;
  for (int i = 0; i < k; ++i) g.push_back(lo + (hi - lo) * i / (k - 1));
  return g;
}

// Small seeded fixture: n points, scores from a logistic fit.
struct SmallFixture {
  Eigen::VectorXd scores;
  std::vector<int> groups;
  std::vector<int> labels;
  ProbabilityEstimates est;
};

SmallFixture small_fixture(std::uint64_t seed, Eigen::Index n) {
  const Dataset d = synthesize({.n = n, .seed = seed});
  SmallFixture fx;
  fx.scores = predict_proba(fit_logistic(d.features, d.labels, 1.0), d.features);
  fx.groups = d.groups;
  fx.labels = d.labels;
  fx.est = estimate_marginals(d.groups, d.labels, 2, kDefaultDelta);
  return fx;
}

// Every dual solution computed by criteria 3 and 4, for the norm bound.
struct SolvedDual {
  double l1;
  double epsilon;
};
std::vector<SolvedDual> all_solutions;

void record(const DualSolution& s, double eps) { all_solutions.push_back({s.lambda.lpNorm<1>(), eps}); }

Outcome stationarity() {
  Check c;
  double worst = 0.0;
  for (double mu : grid(-20.0, 20.0, 20)) {
    for (double r : grid(0.01, 0.99, 20)) {
      const double q = transform_score(mu, r);
      worst = std::max(worst, std::abs(r / q - (1.0 - r) / (1.0 - q) - mu));
    }
  }
  c.require(worst <= 1e-8, "max residual " + fmt(worst));
  c.note("400 points, max residual " + fmt(worst));
  return c.outcome();
}

Outcome derivatives() {
  Check c;
  double e1 = 0.0, e2 = 0.0, min_hess = INFINITY;
  for (double mu : grid(-20.0, 20.0, 20)) {
    for (double r : grid(0.01, 0.99, 20)) {
      const double h1 = 1e-6, h2 = 1e-5;
      e1 = std::max(e1, std::abs(g_grad(mu, r) - (g_value(mu + h1, r) - g_value(mu - h1, r)) / (2 * h1)));
      e2 = std::max(e2, std::abs(g_hess(mu, r) - (g_grad(mu + h2, r) - g_grad(mu - h2, r)) / (2 * h2)));
      min_hess = std::min(min_hess, g_hess(mu, r));
    }
  }
  c.require(e1 <= 1e-6, "gradient error " + fmt(e1));
  c.require(e2 <= 1e-5, "hessian error " + fmt(e2));
  c.require(min_hess >= 0.0, "negative hessian " + fmt(min_hess));
  c.note("grad err " + fmt(e1) + ", hess err " + fmt(e2) + ", min g'' " + fmt(min_hess));
  return c.outcome();
}

Outcome dual_oracle() {
  Check c;
  const std::vector<std::pair<std::uint64_t, double>> cases{
      {101, 0.02}, {102, 0.02}, {103, 0.05}, {104, 0.05}, {105, 0.1}, {106, 0.1}};
  double worst = 0.0;
  for (const auto& [seed, eps] : cases) {
    const SmallFixture fx = small_fixture(seed, seed % 2 ? 120 : 200);
    const auto f = build_features_msp(fx.groups, fx.est);
    const auto s = solve_dual_admm(f, fx.scores, eps);
    record(s, eps);
    const auto g = brute_force_dual(f, fx.scores, eps, lambda_l1_bound(eps), 2e-3);
    const double diff = dual_objective(s.lambda, f, fx.scores, eps) - dual_objective(g, f, fx.scores, eps);
    worst = std::max(worst, std::abs(diff));
    c.require(s.converged, "ADMM did not converge on seed " + std::to_string(seed));
    c.require(std::abs(diff) <= 1e-3, "seed " + std::to_string(seed) + " differs by " + fmt(diff));
  }
  c.note("6 fixtures, max |ADMM - grid| " + fmt(worst));
  return c.outcome();
}

Outcome cross_decomposition() {
  Check c;
  double worst = 0.0;
  int count = 0;
  auto compare = [&](const ConstraintFeatures& f, const Eigen::VectorXd& r, const ProbabilityEstimates& est,
                     double eps, const std::string& name) {
    const auto a = solve_dual_admm(f, r, eps);
    const auto b = solve_dual_admm_alt(f, r, eps, est);
    record(a, eps);
    record(b, eps);
    const double diff = std::abs(dual_objective(a.lambda, f, r, eps) - dual_objective(b.lambda, f, r, eps));
    worst = std::max(worst, diff);
    ++count;
    c.require(a.converged && b.converged, name + " did not converge");
    c.require(diff <= 1e-4, name + " differs by " + fmt(diff));
  };
  for (std::uint64_t seed = 101; seed <= 106; ++seed) {
    const SmallFixture fx = small_fixture(seed, seed % 2 ? 120 : 200);
    for (double eps : {0.02, 0.05, 0.1}) {
      compare(build_features_msp(fx.groups, fx.est), fx.scores, fx.est, eps, "msp seed " + std::to_string(seed));
      compare(build_features_geo(fx.scores, fx.groups, fx.est), fx.scores, fx.est, eps,
              "geo seed " + std::to_string(seed));
    }
  }
  const Dataset& d = biased_fixture();
  const Eigen::VectorXd r = predict_proba(fit_logistic(d.features, d.labels, 1.0), d.features);
  const auto est = estimate_marginals(d.groups, d.labels, 2, kDefaultDelta);
  for (double eps : {0.02, 0.2}) {
    compare(build_features_msp(d.groups, est), r, est, eps, "msp n=5000");
    compare(build_features_geo(r, d.groups, est), r, est, eps, "geo n=5000");
  }
  c.note(std::to_string(count) + " problems, max objective gap " + fmt(worst));
  return c.outcome();
}

Outcome attainment(std::vector<FstModel>& fitted) {
  Check c;
  const Dataset& d = biased_fixture();
  std::string detail;
  for (auto kind : {ConstraintKind::MeanScoreParity, ConstraintKind::GeneralizedEqualizedOdds}) {
    const bool is_msp = kind == ConstraintKind::MeanScoreParity;
    auto gap = [&](const Eigen::VectorXd& s) {
      return is_msp ? msp_gap(as_span(s), d.groups, 2) : geo_gap(as_span(s), d.groups, d.labels, 2);
    };
    for (double eps : {0.02, 0.2}) {
      const auto t0 = std::chrono::steady_clock::now();
      const FstModel m = fit(d, preset(kind, eps), Mode::PostProcess);
      const auto r = transform_detailed(m, d);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      fitted.push_back(m);
      all_solutions.push_back({m.dual.lambda.lpNorm<1>(), eps});
      const std::string name = std::string(to_string(kind)) + " eps=" + fmt(eps);
      c.require(secs < 30.0, name + " took " + fmt(secs) + " s");
      c.require(m.dual.converged, name + " did not converge");
      const double after = gap(r.transformed);
      const double before = gap(r.original);
      if (eps == 0.02) {
        c.require(after <= 0.025, name + " gap " + fmt(after));
        detail += std::string(to_string(kind)) + " gap " + fmt(before) + "->" + fmt(after) + "; ";
      } else {
        c.require(m.dual.lambda.lpNorm<1>() <= 1e-4, name + " lambda not zero");
        c.require(after == before, name + " gap changed from " + fmt(before) + " to " + fmt(after));
      }
    }
  }
  c.note(detail + "slack runs keep lambda = 0");
  return c.outcome();
}

Outcome monotone_utility() {
  Check c;
  const Dataset& d = biased_fixture();
  std::string detail;
  for (auto kind : {ConstraintKind::MeanScoreParity, ConstraintKind::GeneralizedEqualizedOdds}) {
    double previous = INFINITY;
    for (double eps : {0.01, 0.02, 0.05, 0.1, 0.2}) {
      const FstModel m = fit(d, preset(kind, eps), Mode::PostProcess);
      all_solutions.push_back({m.dual.lambda.lpNorm<1>(), eps});
      const auto r = transform_detailed(m, d);
      const double ce = cross_entropy_utility(as_span(r.original), as_span(r.transformed));
      c.require(ce <= previous + 1e-4, std::string(to_string(kind)) + " utility rises at eps=" + fmt(eps));
      previous = ce;
      if (eps == 0.01) detail += std::string(to_string(kind)) + " CE(0.01)=" + fmt(ce) + " ";
    }
    detail += "CE(0.2)=" + fmt(previous) + "; ";
  }
  c.note(detail);
  return c.outcome();
}

Outcome feasibility_identity() {
  Check c;
  double worst = 0.0;
  SynthConfig balanced{.n = 3000, .base_rate = {0.5, 0.5}, .group_signal = 0.0, .seed = 31};
  const std::vector<std::pair<Dataset, ConstraintSpec>> runs{
      {biased_fixture(), preset(ConstraintKind::MeanScoreParity, 0.5)},
      {biased_fixture(), preset(ConstraintKind::GeneralizedEqualizedOdds, 0.2)},
      {synthesize(balanced), preset(ConstraintKind::MeanScoreParity, 0.1)},
      {synthesize(balanced), preset(ConstraintKind::GeneralizedEqualizedOdds, 0.1)}};
  for (const auto& [d, spec] : runs) {
    const FstModel m = fit(d, spec, Mode::PostProcess);
    all_solutions.push_back({m.dual.lambda.lpNorm<1>(), spec.epsilon});
    const auto r = transform_detailed(m, d);
    worst = std::max(worst, (r.transformed - r.original).cwiseAbs().maxCoeff());
  }
  c.require(worst <= 1e-6, "max |r' - r| " + fmt(worst));
  c.note("4 slack runs, max |r' - r| " + fmt(worst));
  return c.outcome();
}

Outcome preprocess_round_trip() {
  Check c;
  // Realizable: the group is a score-model feature, so r' stays close to
  // the logistic family.
  Dataset d = synthesize({.n = 5000, .seed = 41});
  Eigen::MatrixXd x(d.size(), 3);
  x.leftCols(2) = d.features;
  for (Eigen::Index i = 0; i < d.size(); ++i) x(i, 2) = d.groups[static_cast<std::size_t>(i)];
  d.features = x;
  const FstModel m = fit(d, preset(ConstraintKind::MeanScoreParity, 0.02), Mode::PreProcess);
  all_solutions.push_back({m.dual.lambda.lpNorm<1>(), 0.02});
  const Eigen::VectorXd target = transform(m, d);
  const WeightedDataset w = preprocess(m, d);
  bool exact = w.weights.size() == 2 * d.size();
  for (Eigen::Index i = 0; i + 1 < w.weights.size(); i += 2) exact = exact && w.weights(i) + w.weights(i + 1) == 1.0;
  const LogisticModel refit = fit_logistic(w.features, w.labels, w.weights, 1e-3);
  const double mse = (predict_proba(refit, d.features) - target).squaredNorm() / static_cast<double>(d.size());
  c.require(exact, "weight pair does not sum to exactly 1");
  c.require(mse <= 1e-2, "mean squared deviation " + fmt(mse));
  c.note("2n rows, pairs sum to 1, refit MSE " + fmt(mse));
  return c.outcome();
}

Outcome rank_preservation(const std::vector<FstModel>& fitted) {
  Check c;
  const Dataset& d = biased_fixture();
  const Eigen::VectorXd r = predict_proba(fit_logistic(d.features, d.labels, 1.0), d.features);
  const double base_auc = auc(as_span(r), d.labels);
  for (double mu : {-8.0, -1.0, -0.05, 0.3, 2.0, 15.0}) {
    Eigen::VectorXd t(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) t(i) = transform_score(mu, r(i));
    c.require(auc(as_span(t), d.labels) == base_auc, "auc changed at mu=" + fmt(mu));
  }
  std::string detail;
  for (const FstModel& m : fitted) {
    if (m.spec.epsilon != 0.02) continue;
    const auto res = transform_detailed(m, d);
    const double before = msp_gap(as_span(res.original), d.groups, 2);
    const double after = msp_gap(as_span(res.transformed), d.groups, 2);
    c.require(res.mu.maxCoeff() > res.mu.minCoeff(), "fitted multipliers are constant");
    c.require(after < before, std::string(to_string(m.spec.kind)) + " model does not reduce msp_gap");
    detail += std::string(to_string(m.spec.kind)) + " msp_gap " + fmt(before) + "->" + fmt(after) + "; ";
  }
  c.note("auc " + fmt(base_auc) + " unchanged for 6 constant shifts; " + detail);
  return c.outcome();
}

Outcome kl_identity() {
  Check c;
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(1e-4, 1.0 - 1e-4);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(50), q(50);
    for (int i = 0; i < 50; ++i) {
      r[static_cast<std::size_t>(i)] = u(gen);
      q[static_cast<std::size_t>(i)] = u(gen);
    }
    const double lhs = cross_entropy_utility(r, q) - cross_entropy_utility(r, r);
    worst = std::max(worst, std::abs(lhs - mean_kl_divergence(r, q)));
  }
  c.require(worst <= 1e-10, "max deviation " + fmt(worst));
  c.note("200 random pairs, max deviation " + fmt(worst));
  return c.outcome();
}

// Gradient ascent on the penalized weighted log-likelihood in original
// coordinates (step 1e-3, 10^6 iterations).
Eigen::VectorXd gd_oracle(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::VectorXd& w, double l2) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::VectorXd t(x.rows());
  for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = y[static_cast<std::size_t>(i)];
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(x.cols() + 1);
  for (int it = 0; it < 1000000; ++it) {
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-(design * theta).array()).exp());
    Eigen::VectorXd grad = design.transpose() * (w.array() * (t.array() - p)).matrix();
    grad.tail(x.cols()) -= l2 * theta.tail(x.cols());
    theta += 1e-3 * grad;
  }
  return theta;
}

Outcome estimator_oracle() {
  Check c;
  double worst = 0.0;
  for (std::uint64_t seed : {51u, 52u, 53u}) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd x(20, 2);
    std::vector<int> y;
    Eigen::VectorXd w(20);
    for (int i = 0; i < 20; ++i) {
      x(i, 0) = z(gen);
      x(i, 1) = 2.0 * z(gen) + 1.0;
      y.push_back(x(i, 0) - 0.3 * x(i, 1) + z(gen) > 0 ? 1 : 0);
      w(i) = seed == 53u ? 0.5 + (i % 3) : 1.0;
    }
    const LogisticModel m = fit_logistic(x, y, w, 0.5);
    const Eigen::VectorXd o = gd_oracle(x, y, w, 0.5);
    worst = std::max({worst, std::abs(m.intercept - o(0)), (m.weights - o.tail(2)).cwiseAbs().maxCoeff()});
    c.require(m.converged, "IRLS did not converge");
  }
  c.require(worst <= 1e-4, "IRLS vs gradient descent " + fmt(worst));

  const Dataset d = synthesize({.n = 60, .seed = 54});
  Eigen::VectorXd w = Eigen::VectorXd::Ones(60);
  Eigen::MatrixXd xd(0, 2);
  std::vector<int> yd;
  for (Eigen::Index i = 0; i < 60; ++i) {
    w(i) = static_cast<double>(i % 4);
    for (int k = 0; k < static_cast<int>(w(i)); ++k) {
      xd.conservativeResize(xd.rows() + 1, Eigen::NoChange);
      xd.row(xd.rows() - 1) = d.features.row(i);
      yd.push_back(d.labels[static_cast<std::size_t>(i)]);
    }
  }
  const LogisticModel weighted = fit_logistic(d.features, d.labels, w, 0.2);
  const LogisticModel duplicated = fit_logistic(xd, yd, 0.2);
  const double dup = std::max(std::abs(weighted.intercept - duplicated.intercept),
                              (weighted.weights - duplicated.weights).cwiseAbs().maxCoeff());
  c.require(dup <= 1e-6, "weighted vs duplicated " + fmt(dup));
  c.note("oracle gap " + fmt(worst) + ", duplication gap " + fmt(dup));
  return c.outcome();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_round_trip() {
  Check c;
  const fs::path dir = fs::temp_directory_path() / ("fst_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string cli = FST_CLI_PATH;
  auto p = [&](const char* name) { return (dir / name).string(); };

  auto pass = [&](const std::string& tag) {
    const std::string sfx = tag;
    int rc = run(cli + " synth --n 3000 --n-test 1000 --seed 5 --out " + p("train.csv") + " --test-out " + p("test.csv"));
    rc |= run(cli + " fit --train " + p("train.csv") + " --constraint geo --epsilon 0.02 --out " + (dir / ("model" + sfx + ".json")).string());
    rc |= run(cli + " transform --model " + (dir / ("model" + sfx + ".json")).string() + " --data " + p("test.csv") +
              " --out " + (dir / ("scores" + sfx + ".csv")).string());
    rc |= run(cli + " evaluate --scores " + (dir / ("scores" + sfx + ".csv")).string() + " --out " +
              (dir / ("report" + sfx + ".json")).string());
    return rc;
  };
  c.require(pass("1") == 0, "first CLI pass failed");
  c.require(pass("2") == 0, "second CLI pass failed");
  for (const char* stem : {"model", "scores", "report"}) {
    const char* ext = std::string(stem) == "scores" ? ".csv" : ".json";
    c.require(slurp(dir / (std::string(stem) + "1" + ext)) == slurp(dir / (std::string(stem) + "2" + ext)),
              std::string(stem) + " differs between runs");
  }

  // In-process: same CSV inputs, same defaults.
  const Table train_table = read_csv(p("train.csv"));
  ColumnBindings b;
  b.protected_col = "group";
  b.label_col = "label";
  b.features = default_features(train_table, b);
  const Dataset train = to_dataset(train_table, b);
  const FstModel m = fit(train, preset(ConstraintKind::GeneralizedEqualizedOdds, 0.02), Mode::PostProcess);
  const Table test_table = read_csv(p("test.csv"));
  const Dataset test = to_dataset(test_table, b, {.groups = true, .labels = false});
  const Eigen::VectorXd expected = transform(m, test);

  const Table scored = read_csv(p("scores1.csv"));
  const auto col = scored.column("transformed_score");
  bool same = col.size() == static_cast<std::size_t>(expected.size());
  for (std::size_t i = 0; same && i < col.size(); ++i) {
    same = parse_double(col[i], "transformed_score") == expected(static_cast<Eigen::Index>(i));
  }
  c.require(same, "CLI scores differ from in-process scores");

  const Dataset labelled = to_dataset(test_table, b);
  const Eigen::VectorXd original = transform_detailed(m, test).original;
  const std::string report = dump(to_json(
      evaluate(as_span(expected), labelled.labels, labelled.groups, 2, 0.5, as_span(original)), b.group_names));
  c.require(report == slurp(dir / "report1.json"), "CLI report differs from in-process report");

  fs::remove_all(dir);
  c.note("1000 scores bitwise equal; model, scores and report byte-identical across runs");
  return c.outcome();
}

}  // namespace

int main() {
  int failures = 0;
  std::vector<FstModel> fitted;
  auto report = [&](int id, const char* name, double limit, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit > 0.0 && secs >= limit && o.pass) o = {false, "took " + fmt(secs) + " s, limit " + fmt(limit) + " s"};
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "stationarity of the closed-form transform", 1.0, stationarity);
  report(2, "derivatives of g match finite differences", 1.0, derivatives);
  report(3, "ADMM matches grid-search dual oracle", 60.0, dual_oracle);
  report(4, "both ADMM decompositions agree", 30.0, cross_decomposition);
  report(6, "constraint attainment on the biased fixture", 0.0, [&] { return attainment(fitted); });
  report(7, "utility non-increasing in epsilon", 0.0, monotone_utility);
  report(8, "slack constraints leave scores unchanged", 0.0, feasibility_identity);
  report(9, "pre-processing round trip", 0.0, preprocess_round_trip);
  report(5, "dual l1 norm within log(2)/epsilon", 0.0, [] {
    Check c;
    double worst = -INFINITY;
    for (const auto& s : all_solutions) worst = std::max(worst, s.l1 - lambda_l1_bound(s.epsilon));
    c.require(worst <= 1e-6, "bound exceeded by " + fmt(worst));
    c.note(std::to_string(all_solutions.size()) + " solutions, max ||lambda||_1 - bound " + fmt(worst));
    return c.outcome();
  });
  report(10, "rank preservation and gap reduction", 0.0, [&] { return rank_preservation(fitted); });
  report(11, "cross-entropy minus entropy equals KL", 0.0, kl_identity);
  report(12, "IRLS matches gradient-descent oracle", 0.0, estimator_oracle);
  report(13, "CLI round trip is bitwise reproducible", 0.0, cli_round_trip);

  std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
