#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "qcs/config.hpp"

using namespace qcs;
using config::json;

namespace {

std::string error_of(const json& doc) {
  try {
    config::from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = config::from_json(json::object());
  EXPECT_EQ(c.M, 300);
  EXPECT_EQ(c.Q, 10);
  EXPECT_EQ(c.fomGrid.size(), 20u);
  EXPECT_EQ(c.rateGrid, (std::vector<double>{0.5, 1.0, 1.5}));
  EXPECT_EQ(c.trials, 100);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.varianceCrossTerm, CrossTerm::conservative);
}

TEST(Config, UnknownKeySuggestsNearest) {
  EXPECT_NE(error_of(json::parse(R"({"trails": 5})")).find("did you mean 'trials'"), std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"model": {"theta": 0.1}})")).find("'model.theta2'"), std::string::npos);
  EXPECT_NE(error_of(json::parse(R"({"M": 100})")).find("'model.M'"), std::string::npos);
}

TEST(Config, TypeErrors) {
  EXPECT_FALSE(error_of(json::parse(R"({"trials": "five"})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"trials": 2.5})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"fom_grid": 0.5})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"seed": -1})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"model": 3})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"rip_sided": "both"})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"({"variance_cross_term": "exact"})")).empty());
  EXPECT_FALSE(error_of(json::parse(R"([1, 2])")).empty());
}

TEST(Config, OverridesApply) {
  json doc = json::object();
  config::apply_override(doc, "model.M=100");
  config::apply_override(doc, "trials=5");
  config::apply_override(doc, "rate_grid=[1.0]");
  config::apply_override(doc, "matrix_mode=per_trial");
  config::apply_override(doc, "variance_cross_term=independent");
  const auto c = config::from_json(doc);
  EXPECT_EQ(c.M, 100);
  EXPECT_EQ(c.trials, 5);
  EXPECT_EQ(c.rateGrid, std::vector<double>{1.0});
  EXPECT_EQ(c.matrixMode, MatrixMode::per_trial);
  EXPECT_EQ(c.varianceCrossTerm, CrossTerm::independent);
  EXPECT_THROW(config::apply_override(doc, "model.MM=3"), ConfigError);
  EXPECT_THROW(config::apply_override(doc, "trials"), ConfigError);
}

TEST(Config, RoundTripThroughJson) {
  json doc = json::parse(R"({"model": {"M": 120, "Q": 6, "K": 2, "sigma_m2": 0.01},
                             "fom_grid": [0.4, 0.6], "seed": 42, "solver": {"max_iterations": 777}})");
  const auto c = config::from_json(doc);
  const auto back = config::from_json(config::to_json(c));
  EXPECT_EQ(config::to_json(back).dump(), config::to_json(c).dump());
  EXPECT_EQ(back.solver.maxIterations, 777);
  EXPECT_EQ(back.channel.sigma_m2, 0.01);
}

TEST(Config, WeightRule) {
  const auto c = config::from_json(json::parse(R"({"model": {"M": 30, "Q": 10, "weight_rule": [0.2, 0.3, 0.5]}})"));
  ASSERT_TRUE(c.weights.has_value());
  EXPECT_EQ(c.model().components()[2].weight, 0.5);
  EXPECT_THROW(config::from_json(json::parse(R"({"model": {"M": 30, "Q": 10, "weight_rule": [0.5, 0.5]}})")),
               ConfigError);
  EXPECT_THROW(config::from_json(json::parse(R"({"model": {"weight_rule": "zipf"}})")), ConfigError);
}

TEST(Config, ReadDocumentErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "qcs_config_test";
  std::filesystem::create_directories(dir);
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{ not json";
  try {
    config::read_document(bad.string());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
  }
  try {
    config::read_document((dir / "missing.json").string());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"full_scale.json", "desk.json"})
    EXPECT_NO_THROW(config::load(std::string(QCS_CONFIG_DIR) + "/" + name, {})) << name;
  const auto desk = config::load(std::string(QCS_CONFIG_DIR) + "/desk.json", {"trials=3"});
  EXPECT_EQ(desk.M, 100);
  EXPECT_EQ(desk.trials, 3);
}
