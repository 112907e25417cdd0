// fst: fit, apply and evaluate fairness-constrained score transforms on CSV data.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fst/fst.hpp"

namespace {

enum Exit { kOk = 0, kSchema = 2, kNotConverged = 3, kInvariant = 4 };

struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

void ensure(bool ok, const std::string& what) {
  if (!ok) throw InvariantError(what);
}

struct FitArgs {
  std::string train;
  std::string batch_data;
  std::string constraint = "msp";
  double epsilon = 0.05;
  std::string mode = "post";
  std::string protected_col = "group";
  std::string label_col = "label";
  std::string score_col;
  std::vector<std::string> features;
  std::string general_spec;
  double delta = fst::kDefaultDelta;
  double l2 = 1.0;
  double rho = 1.0;
  int max_iter = 1000;
  bool infer_groups = false;
  std::string decomposition = "multiplier";
  bool no_threshold = false;
  std::string out = "model.json";
};

struct DataArgs {
  std::string model;
  std::string data;
  std::string out;
};

struct EvalArgs {
  std::string scores;
  std::string model;
  std::string data;
  std::string score_col = "transformed_score";
  std::string original_col = "original_score";
  std::string protected_col = "group";
  std::string label_col = "label";
  std::optional<double> threshold;
  std::string out;
};

struct SynthArgs {
  long n = 1000;
  long n_test = 0;
  double group_fraction = 0.5;
  std::optional<double> test_group_fraction;
  double base_rate0 = 0.7;
  double base_rate1 = 0.3;
  double label_signal = 1.5;
  double group_signal = 1.0;
  std::uint64_t seed = 1;
  std::string out = "train.csv";
  std::string test_out = "test.csv";
};

struct PipelineArgs {
  FitArgs fit;
  std::string test;
  std::string scores_out = "scores.csv";
  std::string report_out;
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fst::SchemaError("cannot write '" + path + "'");
  out << text;
}

fst::ConstraintSpec make_spec(const FitArgs& a, fst::ColumnBindings& b) {
  fst::ConstraintSpec spec;
  spec.kind = fst::constraint_kind_from_string(a.constraint);
  if (spec.kind == fst::ConstraintKind::GeneralLinear) {
    if (a.general_spec.empty()) throw fst::SchemaError("--constraint general needs --general-spec");
    std::ifstream in(a.general_spec);
    if (!in) throw fst::SchemaError("cannot open '" + a.general_spec + "'");
    try {
      spec = fst::constraint_spec_from_json(fst::Json::parse(in));
    } catch (const fst::Json::exception& e) {
      throw fst::SchemaError("malformed general spec: " + std::string(e.what()));
    }
    spec.kind = fst::ConstraintKind::GeneralLinear;
    for (const auto& row : spec.general) {
      for (const auto& t : row.terms) {
        if (!t.posterior_column.empty() &&
            std::find(b.event_columns.begin(), b.event_columns.end(), t.posterior_column) ==
                b.event_columns.end()) {
          b.event_columns.push_back(t.posterior_column);
        }
      }
    }
  }
  spec.epsilon = a.epsilon;
  // General specs are validated by fit() once posteriors are bound.
  if (spec.kind == fst::ConstraintKind::GeneralLinear) return spec;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw fst::SchemaError(e.what());
  }
  return spec;
}

fst::ColumnBindings make_bindings(const FitArgs& a, const fst::Table& t) {
  fst::ColumnBindings b;
  b.protected_col = a.protected_col;
  b.label_col = a.label_col;
  b.score_col = a.score_col;
  // Resolve bound columns early so schema errors name the column.
  t.index(b.label_col);
  if (a.constraint != "general") t.index(b.protected_col);
  if (!b.score_col.empty()) t.index(b.score_col);
  return b;
}

void print_fit_summary(std::ostream& os, const fst::FstModel& m) {
  const auto& s = m.dual;
  os << "lambda:";
  for (Eigen::Index i = 0; i < s.lambda.size(); ++i) os << ' ' << fst::format_double(s.lambda(i));
  os << "\niterations: " << s.iterations << "\nconverged: " << (s.converged ? "true" : "false")
     << "\nobjective: " << fst::format_double(s.objective)
     << "\nlambda_l1: " << fst::format_double(s.lambda.lpNorm<1>())
     << "\nlambda_l1_bound: " << fst::format_double(fst::lambda_l1_bound(m.spec.epsilon)) << '\n';
  if (m.threshold) os << "threshold: " << fst::format_double(*m.threshold) << '\n';
}

fst::ModelFile do_fit(const FitArgs& a) {
  const fst::Table table = fst::read_csv(a.train);
  fst::ColumnBindings b = make_bindings(a, table);
  const fst::ConstraintSpec spec = make_spec(a, b);
  b.features = a.features.empty() ? fst::default_features(table, b) : a.features;
  if (spec.kind == fst::ConstraintKind::GeneralLinear && !table.find(b.protected_col)) {
    b.protected_col.clear();
  }
  fst::Dataset train = fst::to_dataset(table, b);

  fst::FitOptions opt;
  opt.delta = a.delta;
  opt.l2_reg = a.l2;
  opt.groups_observed = !a.infer_groups;
  opt.decomposition = fst::detail::decomposition_from_string(a.decomposition);
  opt.select_threshold = !a.no_threshold;
  opt.admm.rho = a.rho;
  opt.admm.max_iter = a.max_iter;
  const fst::Mode mode = fst::mode_from_string(a.mode);

  fst::ModelFile file;
  try {
    file.model = fst::fit(train, spec, mode, opt);
    if (mode == fst::Mode::Batch) {
      if (a.batch_data.empty()) throw fst::SchemaError("--mode batch needs --batch-data");
      const fst::Table test_table = fst::read_csv(a.batch_data);
      fst::ColumnBindings tb = b;
      const fst::Dataset test = fst::to_dataset(test_table, tb, {.groups = !a.infer_groups, .labels = false});
      file.model = fst::fit_batch(file.model, test);
    }
  } catch (const std::invalid_argument& e) {
    throw fst::SchemaError(e.what());
  }
  file.bindings = b;
  ensure(file.model.dual.lambda.allFinite(), "dual solution is not finite");
  return file;
}

int finish_fit(const fst::ModelFile& file, const std::string& out) {
  fst::save_model(out, file);
  print_fit_summary(std::cout, file.model);
  if (!file.model.dual.converged) {
    std::cerr << "warning: ADMM did not converge; model written with converged=false\n";
    return kNotConverged;
  }
  return kOk;
}

fst::Dataset load_for_model(const fst::ModelFile& file, const fst::Table& t) {
  fst::ColumnBindings b = file.bindings;
  return fst::to_dataset(t, b, {.groups = file.model.groups_observed, .labels = false});
}

fst::Table do_transform(const fst::ModelFile& file, const fst::Table& input) {
  const fst::Dataset data = load_for_model(file, input);
  fst::TransformResult r;
  try {
    r = fst::transform_detailed(file.model, data);
  } catch (const std::invalid_argument& e) {
    throw fst::SchemaError(e.what());
  }
  ensure((r.transformed.array() >= 0.0).all() && (r.transformed.array() <= 1.0).all(),
         "transformed score outside [0,1]");
  fst::Table out = input;
  const auto n = static_cast<std::size_t>(r.transformed.size());
  std::vector<std::string> orig(n), mu(n), tr(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    orig[i] = fst::format_double(r.original(k));
    mu[i] = fst::format_double(r.mu(k));
    tr[i] = fst::format_double(r.transformed(k));
    if (file.model.threshold) pred[i] = r.transformed(k) > *file.model.threshold ? "1" : "0";
  }
  out.add_column("original_score", std::move(orig));
  out.add_column("mu", std::move(mu));
  out.add_column("transformed_score", std::move(tr));
  if (file.model.threshold) out.add_column("binary_prediction", std::move(pred));
  return out;
}

int cmd_transform(const DataArgs& a) {
  const fst::ModelFile file = fst::load_model(a.model);
  const fst::Table out = do_transform(file, fst::read_csv(a.data));
  if (a.out.empty()) {
    fst::write_csv(std::cout, out);
  } else {
    fst::write_csv(a.out, out);
  }
  return kOk;
}

int cmd_preprocess(const DataArgs& a) {
  const fst::ModelFile file = fst::load_model(a.model);
  const fst::Dataset data = load_for_model(file, fst::read_csv(a.data));
  fst::WeightedDataset w;
  try {
    w = fst::preprocess(file.model, data);
  } catch (const std::invalid_argument& e) {
    throw fst::SchemaError(e.what());
  }
  fst::Table t;
  t.header = file.bindings.features;
  t.header.push_back("y_prime");
  t.header.push_back("weight");
  for (Eigen::Index i = 0; i < w.features.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < w.features.cols(); ++j) row.push_back(fst::format_double(w.features(i, j)));
    row.push_back(std::to_string(w.labels[static_cast<std::size_t>(i)]));
    row.push_back(fst::format_double(w.weights(i)));
    t.rows.push_back(std::move(row));
  }
  for (Eigen::Index i = 0; i + 1 < w.weights.size(); i += 2) {
    ensure(w.weights(i) + w.weights(i + 1) == 1.0, "weight pair does not sum to one");
  }
  if (a.out.empty()) {
    fst::write_csv(std::cout, t);
  } else {
    fst::write_csv(a.out, t);
  }
  return kOk;
}

std::string evaluate_table(const fst::Table& t, const std::string& score_col,
                           const std::string& original_col, fst::ColumnBindings b,
                           double threshold) {
  b.score_col.clear();
  b.features.clear();
  b.event_columns.clear();
  const fst::Dataset d = fst::to_dataset(t, b);
  std::vector<double> scores, original;
  for (const auto& s : t.column(score_col)) scores.push_back(fst::parse_double(s, score_col));
  if (t.find(original_col)) {
    for (const auto& s : t.column(original_col)) original.push_back(fst::parse_double(s, original_col));
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw fst::SchemaError("column '" + score_col + "' has values outside [0,1]");
  }
  const fst::MetricsReport r =
      fst::evaluate(scores, d.labels, d.groups, d.num_groups, threshold, original);
  return fst::dump(fst::to_json(r, b.group_names));
}

int cmd_evaluate(const EvalArgs& a) {
  fst::Table table;
  fst::ColumnBindings b;
  double threshold = a.threshold.value_or(0.5);
  if (!a.model.empty()) {
    if (a.data.empty()) throw fst::SchemaError("--model needs --data");
    const fst::ModelFile file = fst::load_model(a.model);
    table = do_transform(file, fst::read_csv(a.data));
    b = file.bindings;
    if (!a.threshold && file.model.threshold) threshold = *file.model.threshold;
  } else {
    if (a.scores.empty()) throw fst::SchemaError("evaluate needs --scores or --model with --data");
    table = fst::read_csv(a.scores);
    b.protected_col = a.protected_col;
    b.label_col = a.label_col;
  }
  write_text(a.out, evaluate_table(table, a.score_col, a.original_col, b, threshold));
  return kOk;
}

fst::Table synth_table(const fst::SynthConfig& cfg) {
  return fst::to_table(fst::synthesize(cfg), {"x1", "x2"}, "group", "label");
}

int cmd_synth(const SynthArgs& a) {
  fst::SynthConfig cfg;
  cfg.n = a.n;
  cfg.group1_fraction = a.group_fraction;
  cfg.base_rate = {a.base_rate0, a.base_rate1};
  cfg.label_signal = a.label_signal;
  cfg.group_signal = a.group_signal;
  cfg.seed = a.seed;
  try {
    fst::write_csv(a.out, synth_table(cfg));
    if (a.n_test > 0) {
      cfg.n = a.n_test;
      cfg.group1_fraction = a.test_group_fraction.value_or(a.group_fraction);
      cfg.seed = a.seed + 1;  // independent stream for the test split
      fst::write_csv(a.test_out, synth_table(cfg));
    }
  } catch (const std::invalid_argument& e) {
    throw fst::SchemaError(e.what());
  }
  return kOk;
}

int cmd_pipeline(const PipelineArgs& a) {
  FitArgs fa = a.fit;
  const std::string test = a.test.empty() ? fa.train : a.test;
  if (fa.mode == "batch" && fa.batch_data.empty()) fa.batch_data = test;
  const fst::ModelFile file = do_fit(fa);
  const int code = finish_fit(file, fa.out);
  const fst::Table scored = do_transform(file, fst::read_csv(test));
  fst::write_csv(a.scores_out, scored);
  const double threshold = file.model.threshold.value_or(0.5);
  write_text(a.report_out,
             evaluate_table(scored, "transformed_score", "original_score", file.bindings, threshold));
  return code;
}

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--train", a.train, "Training CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--constraint", a.constraint, "Constraint preset")
      ->check(CLI::IsMember({"msp", "geo", "general"}))
      ->capture_default_str();
  cmd->add_option("--epsilon", a.epsilon, "Allowed constraint gap")->capture_default_str();
  cmd->add_option("--mode", a.mode, "Operating mode")
      ->check(CLI::IsMember({"post", "pre", "batch"}))
      ->capture_default_str();
  cmd->add_option("--batch-data", a.batch_data, "Unlabelled rows the dual is refitted on in batch mode");
  cmd->add_option("--protected-col", a.protected_col, "Protected attribute column")->capture_default_str();
  cmd->add_option("--label-col", a.label_col, "Binary label column")->capture_default_str();
  cmd->add_option("--score-col", a.score_col, "Column of precomputed scores; fits a logistic model when absent");
  cmd->add_option("--features", a.features, "Feature columns (default: all unbound columns)")->delimiter(',');
  cmd->add_option("--general-spec", a.general_spec, "JSON file with general linear constraints");
  cmd->add_option("--delta", a.delta, "Probability estimate floor")->capture_default_str();
  cmd->add_option("--l2", a.l2, "L2 penalty of internal estimators")->capture_default_str();
  cmd->add_option("--rho", a.rho, "ADMM penalty")->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "ADMM iteration cap")->capture_default_str();
  cmd->add_flag("--infer-groups", a.infer_groups, "Protected attribute is unobserved at transform time");
  cmd->add_option("--decomposition", a.decomposition, "ADMM splitting")
      ->check(CLI::IsMember({"multiplier", "auxiliary"}))
      ->capture_default_str();
  cmd->add_flag("--no-threshold", a.no_threshold, "Skip threshold selection");
  cmd->add_option("--out", a.out, "Model output path")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-constrained score transformation"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write it as JSON");
  add_fit_options(fit_cmd, fit_args);

  DataArgs transform_args;
  auto* transform_cmd = app.add_subcommand("transform", "Append original, mu and transformed scores");
  transform_cmd->add_option("--model", transform_args.model)->required()->check(CLI::ExistingFile);
  transform_cmd->add_option("--data", transform_args.data)->required()->check(CLI::ExistingFile);
  transform_cmd->add_option("--out", transform_args.out, "Output CSV (default: stdout)");

  DataArgs pre_args;
  auto* pre_cmd = app.add_subcommand("preprocess", "Emit the weighted relabelled training set");
  pre_cmd->add_option("--model", pre_args.model)->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--data", pre_args.data)->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--out", pre_args.out, "Output CSV (default: stdout)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Utility and fairness report");
  eval_cmd->add_option("--scores", eval_args.scores, "Scored CSV")->check(CLI::ExistingFile);
  eval_cmd->add_option("--model", eval_args.model, "Model to score --data with")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data)->check(CLI::ExistingFile);
  eval_cmd->add_option("--score-col", eval_args.score_col)->capture_default_str();
  eval_cmd->add_option("--original-col", eval_args.original_col, "Used for cross-entropy when present")
      ->capture_default_str();
  eval_cmd->add_option("--protected-col", eval_args.protected_col)->capture_default_str();
  eval_cmd->add_option("--label-col", eval_args.label_col)->capture_default_str();
  eval_cmd->add_option("--threshold", eval_args.threshold, "Default: the model's, else 0.5");
  eval_cmd->add_option("--out", eval_args.out, "Report path (default: stdout)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded two-group fixture");
  synth_cmd->add_option("--n", synth_args.n)->capture_default_str();
  synth_cmd->add_option("--n-test", synth_args.n_test, "Also write a test split of this size")->capture_default_str();
  synth_cmd->add_option("--group-fraction", synth_args.group_fraction, "P(group = 1)")->capture_default_str();
  synth_cmd->add_option("--test-group-fraction", synth_args.test_group_fraction);
  synth_cmd->add_option("--base-rate0", synth_args.base_rate0, "P(label = 1 | group 0)")->capture_default_str();
  synth_cmd->add_option("--base-rate1", synth_args.base_rate1, "P(label = 1 | group 1)")->capture_default_str();
  synth_cmd->add_option("--label-signal", synth_args.label_signal)->capture_default_str();
  synth_cmd->add_option("--group-signal", synth_args.group_signal)->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_args.out)->capture_default_str();
  synth_cmd->add_option("--test-out", synth_args.test_out)->capture_default_str();

  PipelineArgs pipe_args;
  auto* pipe_cmd = app.add_subcommand("pipeline", "fit, transform and evaluate in one pass");
  add_fit_options(pipe_cmd, pipe_args.fit);
  pipe_cmd->add_option("--test", pipe_args.test, "Rows to transform and evaluate (default: --train)")
      ->check(CLI::ExistingFile);
  pipe_cmd->add_option("--scores-out", pipe_args.scores_out)->capture_default_str();
  pipe_cmd->add_option("--report-out", pipe_args.report_out, "Report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kSchema;
  }

  try {
    if (*fit_cmd) return finish_fit(do_fit(fit_args), fit_args.out);
    if (*transform_cmd) return cmd_transform(transform_args);
    if (*pre_cmd) return cmd_preprocess(pre_args);
    if (*eval_cmd) return cmd_evaluate(eval_args);
    if (*synth_cmd) return cmd_synth(synth_args);
    if (*pipe_cmd) return cmd_pipeline(pipe_args);
  } catch (const fst::SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSchema;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kInvariant;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSchema;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInvariant;
  }
  return kOk;
}
