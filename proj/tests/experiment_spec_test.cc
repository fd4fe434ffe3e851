#include "fedmoment/experiment_spec.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace fedmoment {
namespace {

std::vector<std::string> DiagnosticsOf(const std::string& text) {
  try {
    ParseSpecText(text, "t.spec");
  } catch (const SpecError& e) {
    return e.diagnostics();
  }
  return {};
}

bool AnyContains(const std::vector<std::string>& diags, const std::string& needle) {
  return std::any_of(diags.begin(), diags.end(),
                     [&](const std::string& d) { return d.find(needle) != std::string::npos; });
}

TEST(ParseSpecTest, MinimalSpecFillsDefaults) {
  const ExperimentSpec s = ParseSpecText("run.num_clients = 16\nrun.num_groups = 4\n");
  EXPECT_EQ(s.run.num_clients, 16);
  EXPECT_EQ(s.run.num_groups, 4);
  EXPECT_EQ(s.train.local_epochs, 10);
  EXPECT_EQ(s.run.participation_fraction, 1.0);
  EXPECT_EQ(s.run.cval_fraction, 0.01);
  EXPECT_EQ(s.run.scoring.thresholds, (std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9}));
  EXPECT_EQ(s.run.scoring.weights, (std::vector<double>{0.1, 0.2, 0.2, 0.4, 0.1}));
  EXPECT_EQ(s.run.aggregation_mode, AggregationMode::kCValidationSoftmax);
  EXPECT_FALSE(s.run.regroup_each_round);
  EXPECT_FALSE(s.sweep.has_value());
  EXPECT_EQ(s.data.alpha, 0.0);
}

TEST(ParseSpecTest, ReadsEveryKey) {
  const ExperimentSpec s = ParseSpecText(R"(# comment
seed = 9
data.n_total = 500
data.n_test = 50
data.d_v = 5
data.d_q = 3
data.alpha = 0.5
data.num_scenes = 4
data.label_mode = synthetic_scene
data.class_mix = 1,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0
train.local_epochs = 2
train.learning_rate = 0.1
train.lambda_dis = 0
train.batch_size = 8
run.num_clients = 6
run.num_groups = 3
run.rounds = 7
run.participation_fraction = 0.5
run.regroup_each_round = true
run.unit_client_cost = 2.5
run.aggregation_mode = uniform
run.hidden_units = 12
run.cval_fraction = 0.1
run.convergence_m = 0.5
scoring.thresholds = 0.2, 0.6
scoring.weights = 0.5, 0.5
outputs.dir = /tmp/x
sweep.groups = 1, 2, 6
)");
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.run.seed, 9u);
  EXPECT_EQ(s.train.seed, 9u);
  EXPECT_EQ(s.data.n_total, 500u);
  EXPECT_EQ(s.data.label_mode, LabelMode::kSyntheticScene);
  EXPECT_EQ(s.data.class_mix, TemporalDistribution::PointMass(0));
  EXPECT_EQ(s.train.learning_rate, 0.1);
  EXPECT_EQ(s.run.rounds, 7);
  EXPECT_TRUE(s.run.regroup_each_round);
  EXPECT_EQ(s.run.aggregation_mode, AggregationMode::kUniform);
  EXPECT_EQ(s.run.hidden_units, 12u);
  EXPECT_EQ(s.convergence_m, 0.5);
  EXPECT_EQ(s.run.scoring.weights, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(s.output_dir, "/tmp/x");
  EXPECT_EQ(*s.sweep, (std::vector<int>{1, 2, 6}));
}

TEST(ParseSpecTest, ZeroGroupsNamesTheField) {
  const auto diags = DiagnosticsOf("run.num_groups = 0\n");
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_TRUE(AnyContains(diags, "run.num_groups"));
}

TEST(ParseSpecTest, DuplicateKeyIsAnError) {
  const auto diags = DiagnosticsOf("run.rounds = 3\nrun.rounds = 4\n");
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_TRUE(AnyContains(diags, "t.spec:2:"));
  EXPECT_TRUE(AnyContains(diags, "duplicate key 'run.rounds'"));
}

TEST(ParseSpecTest, UnknownKeyCarriesLocation) {
  const auto diags = DiagnosticsOf("\n\nrun.num_grups = 2\n");
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_TRUE(AnyContains(diags, "t.spec:3: unknown key 'run.num_grups'"));
}

TEST(ParseSpecTest, ReportsAllProblemsAtOnce) {
  const auto diags = DiagnosticsOf(
      "run.rounds = ten\n"
      "run.num_clients = 4\n"
      "run.num_groups = 9\n"
      "train.local_epochs = 0\n"
      "data.alpha = -1\n"
      "run.aggregation_mode = median\n"
      "garbage line\n"
      "sweep.groups = 1,5\n");
  EXPECT_TRUE(AnyContains(diags, "t.spec:1: run.rounds"));
  EXPECT_TRUE(AnyContains(diags, "run.num_groups: must lie in [1, run.num_clients]"));
  EXPECT_TRUE(AnyContains(diags, "train.local_epochs"));
  EXPECT_TRUE(AnyContains(diags, "data.alpha"));
  EXPECT_TRUE(AnyContains(diags, "t.spec:6: run.aggregation_mode"));
  EXPECT_TRUE(AnyContains(diags, "t.spec:7: expected 'key = value'"));
  EXPECT_TRUE(AnyContains(diags, "sweep.groups: value 5"));
  EXPECT_EQ(diags.size(), 7u);
}

TEST(ParseSpecTest, RejectsMalformedValues) {
  EXPECT_FALSE(DiagnosticsOf("run.rounds = 3.5\n").empty());
  EXPECT_FALSE(DiagnosticsOf("run.rounds = 3x\n").empty());
  EXPECT_FALSE(DiagnosticsOf("run.rounds =\n").empty());
  EXPECT_FALSE(DiagnosticsOf("run.regroup_each_round = yes\n").empty());
  EXPECT_FALSE(DiagnosticsOf("data.class_mix = 0.5, 0.5\n").empty());
  EXPECT_FALSE(DiagnosticsOf("scoring.weights = 1\n").empty());
  EXPECT_FALSE(DiagnosticsOf("run.convergence_m = 0.9\n").empty());
}

TEST(ParseSpecTest, ReadsFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "fedmoment_spec_test.spec";
  std::ofstream(path) << "run.num_clients = 8\n";
  EXPECT_EQ(ParseSpec(path.string()).run.num_clients, 8);
  std::filesystem::remove(path);
  EXPECT_THROW(ParseSpec(path.string()), SpecError);
}

TEST(ApplySeedTest, PropagatesToNestedConfigs) {
  ExperimentSpec s;
  ApplySeed(s, 44);
  EXPECT_EQ(s.seed, 44u);
  EXPECT_EQ(s.run.seed, 44u);
  EXPECT_EQ(s.train.seed, 44u);
}

}  // namespace
}  // namespace fedmoment
