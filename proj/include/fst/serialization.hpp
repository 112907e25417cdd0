#pragma once

// JSON model files and metric reports. Keys are sorted so output is stable,
// and doubles are printed in shortest round-trip form.

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fst/csv.hpp"
#include "fst/metrics.hpp"
#include "fst/pipeline.hpp"

namespace fst {

using Json = nlohmann::json;

inline constexpr const char* kModelFormat = "fst-model";
inline constexpr int kModelVersion = 1;

/// A fitted model together with the CSV bindings it was fitted under.
struct ModelFile {
  FstModel model;
  ColumnBindings bindings;
};

namespace detail {

// NaN and infinities have no JSON spelling; they become null.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

inline Eigen::VectorXd vector_from(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

inline Eigen::MatrixXd matrix_from(const Json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = vector_from(j[i]).transpose();
  }
  return m;
}

inline const char* to_string(Decomposition d) {
  return d == Decomposition::Auxiliary ? "auxiliary" : "multiplier";
}

inline Decomposition decomposition_from_string(const std::string& s) {
  if (s == "multiplier") return Decomposition::Multiplier;
  if (s == "auxiliary") return Decomposition::Auxiliary;
  throw std::invalid_argument("unknown decomposition '" + s + "'");
}

}  // namespace detail

inline Json to_json(const ConstraintSpec& spec) {
  Json j{{"kind", to_string(spec.kind)}, {"epsilon", spec.epsilon}};
  Json rows = Json::array();
  for (const auto& row : spec.general) {
    Json terms = Json::array();
    for (const auto& t : row.terms) {
      terms.push_back({{"coefficient", t.coefficient},
                       {"marginal", t.marginal},
                       {"posterior_column", t.posterior_column}});
    }
    rows.push_back({{"bound", row.bound}, {"terms", terms}});
  }
  j["general"] = rows;
  return j;
}

/// Also reads the general-constraint file format accepted by the CLI.
inline ConstraintSpec constraint_spec_from_json(const Json& j) {
  ConstraintSpec spec;
  spec.kind = constraint_kind_from_string(j.value("kind", std::string("general")));
  spec.epsilon = j.value("epsilon", spec.epsilon);
  if (j.contains("general")) {
    for (const auto& row : j.at("general")) {
      LinearConstraint c;
      c.bound = row.value("bound", 0.0);
      for (const auto& t : row.at("terms")) {
        EventTerm term;
        term.coefficient = t.at("coefficient").get<double>();
        term.marginal = t.value("marginal", 1.0);
        term.posterior_column = t.value("posterior_column", std::string());
        c.terms.push_back(term);
      }
      spec.general.push_back(std::move(c));
    }
  }
  return spec;
}

inline Json to_json(const ProbabilityEstimates& e) {
  Json cond = Json::array();
  for (const auto& row : e.p_group_given_label) cond.push_back({row[0], row[1]});
  return {{"num_groups", e.num_groups},
          {"delta", e.delta},
          {"p_group", e.p_group},
          {"p_label", {e.p_label[0], e.p_label[1]}},
          {"p_group_given_label", cond},
          {"has_label_estimates", e.has_label_estimates}};
}

inline ProbabilityEstimates estimates_from_json(const Json& j) {
  ProbabilityEstimates e;
  e.num_groups = j.at("num_groups").get<int>();
  e.delta = j.at("delta").get<double>();
  e.p_group = j.at("p_group").get<std::vector<double>>();
  e.p_label = {j.at("p_label")[0].get<double>(), j.at("p_label")[1].get<double>()};
  for (const auto& row : j.at("p_group_given_label")) {
    e.p_group_given_label.push_back({row[0].get<double>(), row[1].get<double>()});
  }
  e.has_label_estimates = j.at("has_label_estimates").get<bool>();
  return e;
}

inline Json to_json(const LogisticModel& m) {
  return {{"weights", detail::vector_json(m.weights)},
          {"intercept", m.intercept},
          {"l2_reg", m.l2_reg},
          {"converged", m.converged},
          {"iterations", m.iterations}};
}

inline LogisticModel logistic_from_json(const Json& j) {
  LogisticModel m;
  m.weights = detail::vector_from(j.at("weights"));
  m.intercept = j.at("intercept").get<double>();
  m.l2_reg = j.at("l2_reg").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  return m;
}

inline Json to_json(const MultinomialModel& m) {
  return {{"num_classes", m.num_classes},
          {"num_features", m.weights.cols()},
          {"weights", detail::matrix_json(m.weights)},
          {"intercepts", detail::vector_json(m.intercepts)},
          {"l2_reg", m.l2_reg},
          {"converged", m.converged},
          {"iterations", m.iterations}};
}

inline MultinomialModel multinomial_from_json(const Json& j) {
  MultinomialModel m;
  m.num_classes = j.at("num_classes").get<int>();
  m.weights = detail::matrix_from(j.at("weights"), j.at("num_features").get<Eigen::Index>());
  m.intercepts = detail::vector_from(j.at("intercepts"));
  m.l2_reg = j.at("l2_reg").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  return m;
}

inline Json to_json(const AdmmConfig& c) {
  return {{"rho", c.rho},         {"max_iter", c.max_iter},
          {"tol_abs", c.tol_abs}, {"tol_rel", c.tol_rel},
          {"newton_max_iter", c.newton_max_iter}, {"newton_tol", c.newton_tol},
          {"cd_tol", c.cd_tol},   {"cd_max_iter", c.cd_max_iter}};
}

inline AdmmConfig admm_from_json(const Json& j) {
  AdmmConfig c;
  c.rho = j.at("rho").get<double>();
  c.max_iter = j.at("max_iter").get<int>();
  c.tol_abs = j.at("tol_abs").get<double>();
  c.tol_rel = j.at("tol_rel").get<double>();
  c.newton_max_iter = j.at("newton_max_iter").get<int>();
  c.newton_tol = j.at("newton_tol").get<double>();
  c.cd_tol = j.at("cd_tol").get<double>();
  c.cd_max_iter = j.at("cd_max_iter").get<int>();
  return c;
}

inline Json to_json(const DualSolution& s, double epsilon) {
  return {{"lambda", detail::vector_json(s.lambda)},
          {"lambda_l1", s.lambda.lpNorm<1>()},
          {"lambda_l1_bound", lambda_l1_bound(epsilon)},
          {"objective", s.objective},
          {"primal_residual", s.primal_residual},
          {"dual_residual", s.dual_residual},
          {"iterations", s.iterations},
          {"converged", s.converged}};
}

inline DualSolution dual_from_json(const Json& j) {
  DualSolution s;
  s.lambda = detail::vector_from(j.at("lambda"));
  s.objective = j.at("objective").get<double>();
  s.primal_residual = j.at("primal_residual").get<double>();
  s.dual_residual = j.at("dual_residual").get<double>();
  s.iterations = j.at("iterations").get<int>();
  s.converged = j.at("converged").get<bool>();
  return s;
}

inline Json to_json(const ColumnBindings& b) {
  return {{"protected", b.protected_col}, {"label", b.label_col},
          {"score", b.score_col},         {"features", b.features},
          {"event_columns", b.event_columns}, {"group_names", b.group_names},
          {"label_names", b.label_names}};
}

inline ColumnBindings bindings_from_json(const Json& j) {
  ColumnBindings b;
  b.protected_col = j.at("protected").get<std::string>();
  b.label_col = j.at("label").get<std::string>();
  b.score_col = j.at("score").get<std::string>();
  b.features = j.at("features").get<std::vector<std::string>>();
  b.event_columns = j.at("event_columns").get<std::vector<std::string>>();
  b.group_names = j.at("group_names").get<std::vector<std::string>>();
  b.label_names = j.at("label_names").get<std::vector<std::string>>();
  return b;
}

inline Json to_json(const ModelFile& f) {
  const FstModel& m = f.model;
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"constraint", to_json(m.spec)},
          {"mode", to_string(m.mode)},
          {"num_groups", m.num_groups},
          {"estimates", to_json(m.estimates)},
          {"score_model", m.score_model ? to_json(*m.score_model) : Json("external")},
          {"groups_observed", m.groups_observed},
          {"group_model", m.group_model ? to_json(*m.group_model) : Json(nullptr)},
          {"decomposition", detail::to_string(m.decomposition)},
          {"admm", to_json(m.admm)},
          {"dual", to_json(m.dual, m.spec.epsilon)},
          {"threshold", m.threshold ? Json(*m.threshold) : Json(nullptr)},
          {"bindings", to_json(f.bindings)}};
}

inline ModelFile model_file_from_json(const Json& j) {
  if (j.value("format", std::string()) != kModelFormat) {
    throw std::invalid_argument("not an fst model file");
  }
  if (j.at("version").get<int>() != kModelVersion) {
    throw std::invalid_argument("unsupported model version " + j.at("version").dump());
  }
  ModelFile f;
  FstModel& m = f.model;
  m.spec = constraint_spec_from_json(j.at("constraint"));
  m.mode = mode_from_string(j.at("mode").get<std::string>());
  m.num_groups = j.at("num_groups").get<int>();
  m.estimates = estimates_from_json(j.at("estimates"));
  if (j.at("score_model").is_object()) m.score_model = logistic_from_json(j.at("score_model"));
  m.groups_observed = j.at("groups_observed").get<bool>();
  if (!j.at("group_model").is_null()) m.group_model = multinomial_from_json(j.at("group_model"));
  m.decomposition = detail::decomposition_from_string(j.at("decomposition").get<std::string>());
  m.admm = admm_from_json(j.at("admm"));
  m.dual = dual_from_json(j.at("dual"));
  if (!j.at("threshold").is_null()) m.threshold = j.at("threshold").get<double>();
  f.bindings = bindings_from_json(j.at("bindings"));
  if (!m.groups_observed && !m.group_model && m.spec.kind != ConstraintKind::GeneralLinear) {
    throw std::invalid_argument("model infers groups but carries no group model");
  }
  return f;
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void save_model(const std::string& path, const ModelFile& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << dump(to_json(f));
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return model_file_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw SchemaError("malformed model file '" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError("malformed model file '" + path + "': " + e.what());
  }
}

inline Json to_json(const GroupMeans& g, const std::vector<std::string>& names) {
  Json groups = Json::object();
  for (std::size_t a = 0; a < g.means.size(); ++a) {
    const std::string key = a < names.size() ? names[a] : std::to_string(a);
    groups[key] = {{"mean", detail::number(g.means[a])}, {"count", g.counts[a]}};
  }
  return {{"overall", detail::number(g.overall)}, {"gap", detail::number(g.gap)}, {"groups", groups}};
}

inline Json to_json(const CellMeans& c, const std::vector<std::string>& names) {
  Json cells = Json::object();
  for (std::size_t a = 0; a < c.means.size(); ++a) {
    const std::string key = a < names.size() ? names[a] : std::to_string(a);
    cells[key] = {{"y0", {{"mean", detail::number(c.means[a][0])}, {"count", c.counts[a][0]}}},
                  {"y1", {{"mean", detail::number(c.means[a][1])}, {"count", c.counts[a][1]}}}};
  }
  return {{"stratum", {{"y0", detail::number(c.stratum[0])}, {"y1", detail::number(c.stratum[1])}}},
          {"gap", detail::number(c.gap)},
          {"skipped_empty_cells", c.skipped_empty_cells},
          {"cells", cells}};
}

inline Json to_json(const MetricsReport& r, const std::vector<std::string>& group_names = {}) {
  return {{"samples", r.samples},
          {"utility",
           {{"brier", r.brier},
            {"auc", r.auc ? Json(*r.auc) : Json(nullptr)},
            {"accuracy", r.accuracy},
            {"threshold", r.threshold},
            {"cross_entropy", r.cross_entropy ? Json(*r.cross_entropy) : Json(nullptr)}}},
          {"fairness",
           {{"msp_gap", r.msp_gap},
            {"geo_gap", r.geo_gap},
            {"sp_gap", r.sp_gap},
            {"eo_gap", r.eo_gap},
            {"geo_skipped_empty_cells", r.geo_skipped_empty_cells},
            {"eo_skipped_empty_cells", r.eo_skipped_empty_cells}}},
          {"breakdown",
           {{"score_by_group", to_json(r.score_groups, group_names)},
            {"score_by_group_and_label", to_json(r.score_cells, group_names)},
            {"prediction_by_group", to_json(r.prediction_groups, group_names)}}}};
}

}  // namespace fst
