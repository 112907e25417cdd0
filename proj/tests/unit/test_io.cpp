#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fst/csv.hpp"
#include "fst/serialization.hpp"
#include "fst/synth.hpp"

namespace {

using namespace fst;

Table parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

TEST(Csv, ReadsHeaderAndRows) {
  const Table t = parse("a,b,c\r\n1,2,x\n\n3,4,y\n");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.rows[1][2], "y");
  EXPECT_EQ(t.column("b"), (std::vector<std::string>{"2", "4"}));
}

TEST(Csv, SchemaErrors) {
  EXPECT_THROW(parse(""), SchemaError);
  EXPECT_THROW(parse("a,a\n1,2\n"), SchemaError);
  EXPECT_THROW(parse("a,b\n1\n"), SchemaError);
  const Table t = parse("a\n1\n");
  try {
    t.index("group");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("group"), std::string::npos);
  }
  EXPECT_THROW(parse_double("1.5x", "a"), SchemaError);
  EXPECT_THROW(parse_double("", "a"), SchemaError);
}

TEST(Csv, DoublesRoundTripBitwise) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(gen) * std::pow(10.0, i % 7 - 3);
    EXPECT_EQ(parse_double(format_double(x), "x"), x);
  }
  EXPECT_EQ(parse_double(format_double(1e-6), "x"), 1e-6);
  EXPECT_EQ(parse_double("+0.25", "x"), 0.25);
}

TEST(Csv, WriteThenReadIsIdentity) {
  Table t;
  t.header = {"x", "y"};
  t.rows = {{"1", "a"}, {"2.5", "b"}};
  std::ostringstream out;
  write_csv(out, t);
  EXPECT_EQ(out.str(), "x,y\n1,a\n2.5,b\n");
  const Table back = parse(out.str());
  EXPECT_EQ(back.rows, t.rows);
}

TEST(EncodeCategories, IntegersAndStrings) {
  std::vector<std::string> alphabet;
  EXPECT_EQ(encode_categories({"1", "0", "2", "1"}, alphabet, "g"), (std::vector<int>{1, 0, 2, 1}));
  EXPECT_EQ(alphabet, (std::vector<std::string>{"0", "1", "2"}));

  alphabet.clear();
  EXPECT_EQ(encode_categories({"male", "female", "male"}, alphabet, "g"), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(alphabet, (std::vector<std::string>{"female", "male"}));

  // A declared alphabet fixes ids and rejects unknown values.
  EXPECT_EQ(encode_categories({"male"}, alphabet, "g"), (std::vector<int>{1}));
  EXPECT_THROW(encode_categories({"other"}, alphabet, "g"), SchemaError);
}

TEST(ToDataset, BindsColumns) {
  const Table t = parse("x,s,g,y,e\n0.5,0.2,b,1,0.3\n-1,0.9,a,0,1\n");
  ColumnBindings b;
  b.protected_col = "g";
  b.label_col = "y";
  b.score_col = "s";
  b.event_columns = {"e"};
  b.features = default_features(t, b);
  EXPECT_EQ(b.features, (std::vector<std::string>{"x"}));
  const Dataset d = to_dataset(t, b);
  EXPECT_EQ(d.groups, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(d.num_groups, 2);
  EXPECT_DOUBLE_EQ((*d.base_scores)(1), 0.9);
  EXPECT_DOUBLE_EQ(d.event_columns.at("e")(0), 0.3);
  EXPECT_DOUBLE_EQ(d.features(1, 0), -1.0);
}

TEST(ToDataset, RejectsBadColumns) {
  ColumnBindings b;
  b.protected_col = "g";
  b.label_col = "y";
  b.features = {"x"};
  EXPECT_THROW(to_dataset(parse("x,g,y\n1,0,2\n2,1,3\n3,0,4\n"), b), SchemaError);
  b.label_names.clear();
  b.group_names.clear();
  EXPECT_THROW(to_dataset(parse("x,y\n1,0\n"), b), SchemaError);
  ColumnBindings scored = b;
  scored.group_names.clear();
  scored.score_col = "s";
  EXPECT_THROW(to_dataset(parse("x,g,y,s\n1,0,1,1.5\n"), scored), SchemaError);
}

TEST(ToDataset, OptionalColumnsAtTransformTime) {
  ColumnBindings b;
  b.protected_col = "g";
  b.label_col = "y";
  b.features = {"x"};
  b.group_names = {"0", "1"};
  const Dataset d = to_dataset(parse("x,g\n1,0\n2,1\n"), b, {.groups = true, .labels = false});
  EXPECT_TRUE(d.labels.empty());
  EXPECT_EQ(d.groups.size(), 2u);
}

FstModel sample_model() {
  const Dataset d = synthesize({.n = 400, .seed = 3});
  ConstraintSpec spec;
  spec.kind = ConstraintKind::GeneralizedEqualizedOdds;
  spec.epsilon = 0.03;
  FitOptions opt;
  opt.groups_observed = false;
  return fit(d, spec, Mode::PreProcess, opt);
}

TEST(ModelJson, RoundTripIsExact) {
  ModelFile f{sample_model(), {}};
  f.bindings.protected_col = "group";
  f.bindings.label_col = "label";
  f.bindings.features = {"x1", "x2"};
  f.bindings.group_names = {"0", "1"};
  f.bindings.label_names = {"0", "1"};
  const std::string text = dump(to_json(f));
  const ModelFile back = model_file_from_json(Json::parse(text));
  EXPECT_EQ(dump(to_json(back)), text);

  const FstModel& a = f.model;
  const FstModel& b = back.model;
  EXPECT_EQ(b.mode, Mode::PreProcess);
  EXPECT_EQ(b.spec.kind, a.spec.kind);
  EXPECT_EQ(b.spec.epsilon, a.spec.epsilon);
  ASSERT_EQ(b.dual.lambda.size(), a.dual.lambda.size());
  for (Eigen::Index j = 0; j < a.dual.lambda.size(); ++j) EXPECT_EQ(b.dual.lambda(j), a.dual.lambda(j));
  EXPECT_EQ(b.score_model->weights, a.score_model->weights);
  EXPECT_EQ(b.score_model->intercept, a.score_model->intercept);
  EXPECT_EQ(b.group_model->weights, a.group_model->weights);
  EXPECT_EQ(b.estimates.p_group_given_label, a.estimates.p_group_given_label);
  EXPECT_EQ(*b.threshold, *a.threshold);

  Dataset blind = synthesize({.n = 50, .seed = 4});
  blind.groups.clear();
  const Eigen::VectorXd ta = transform(a, blind);
  const Eigen::VectorXd tb = transform(b, blind);
  for (Eigen::Index i = 0; i < ta.size(); ++i) EXPECT_EQ(ta(i), tb(i));
}

TEST(ModelJson, RejectsForeignDocuments) {
  EXPECT_THROW(model_file_from_json(Json{{"format", "other"}}), std::invalid_argument);
  ModelFile f{sample_model(), {}};
  Json j = to_json(f);
  j["version"] = 99;
  EXPECT_THROW(model_file_from_json(j), std::invalid_argument);
}

TEST(ModelJson, GeneralSpecKeepsColumnNames) {
  ConstraintSpec spec;
  spec.kind = ConstraintKind::GeneralLinear;
  spec.epsilon = 0.1;
  spec.general = {{0.05, {{1.0, 0.4, {}, "p_a0"}, {-1.0, 1.0, {}, ""}}}};
  const ConstraintSpec back = constraint_spec_from_json(to_json(spec));
  ASSERT_EQ(back.general.size(), 1u);
  EXPECT_EQ(back.general[0].terms[0].posterior_column, "p_a0");
  EXPECT_EQ(back.general[0].terms[1].marginal, 1.0);
  EXPECT_EQ(back.general[0].bound, 0.05);
}

TEST(ReportJson, KeysAreSortedAndNanIsNull) {
  const std::vector<double> s{0.2, 0.4, 0.6};
  const auto r = evaluate(s, std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 0}, 2, 0.5);
  const Json j = to_json(r, {"a", "b"});
  const std::string text = dump(j);
  EXPECT_LT(text.find("\"breakdown\""), text.find("\"fairness\""));
  EXPECT_LT(text.find("\"fairness\""), text.find("\"samples\""));
  EXPECT_TRUE(j["breakdown"]["score_by_group_and_label"]["cells"]["b"]["y1"]["mean"].is_null());
  EXPECT_TRUE(j["utility"]["cross_entropy"].is_null());
  EXPECT_EQ(dump(to_json(r, {"a", "b"})), text);
}

TEST(Synth, DeterministicForSeed) {
  const Dataset a = synthesize({.n = 200, .seed = 42});
  const Dataset b = synthesize({.n = 200, .seed = 42});
  const Dataset c = synthesize({.n = 200, .seed = 43});
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.groups, b.groups);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(Synth, BaseRatesFollowConfiguration) {
  const Dataset d = synthesize({.n = 5000, .seed = 7});
  std::array<double, 2> pos{0, 0}, cnt{0, 0};
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    cnt[static_cast<std::size_t>(d.groups[i])] += 1;
    pos[static_cast<std::size_t>(d.groups[i])] += d.labels[i];
  }
  EXPECT_NEAR(pos[0] / cnt[0], 0.7, 0.02);
  EXPECT_NEAR(pos[1] / cnt[1], 0.3, 0.02);
  EXPECT_NEAR(cnt[1] / 5000.0, 0.5, 0.02);
}

TEST(Synth, BalancedConfigurationNeedsNoCorrection) {
  SynthConfig cfg;
  cfg.n = 4000;
  cfg.seed = 8;
  cfg.base_rate = {0.5, 0.5};
  cfg.group_signal = 0.0;
  ConstraintSpec spec;
  spec.epsilon = 0.1;
  const auto m = fit(synthesize(cfg), spec, Mode::PostProcess);
  EXPECT_LE(m.dual.lambda.lpNorm<1>(), 1e-4);
}

TEST(Synth, RejectsBadConfiguration) {
  EXPECT_THROW(synthesize({.n = 0}), std::invalid_argument);
  EXPECT_THROW(synthesize({.n = 10, .group1_fraction = 1.5}), std::invalid_argument);
}

}  // namespace
