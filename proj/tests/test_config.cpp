#include <gtest/gtest.h>

#include "cafl/config.hpp"
#include "cafl/synthetic.hpp"

using namespace cafl;

namespace {

std::vector<std::string> fields(const std::vector<FieldIssue>& issues) {
  std::vector<std::string> out;
  for (const auto& i : issues) out.push_back(i.field);
  return out;
}

}  // namespace

TEST(Config, DefaultsValidate) { EXPECT_TRUE(validate(SimConfig{}, synthetic::flat(4, 4)).empty()); }

TEST(Config, StepAndSnapshotCounts) {
  SimConfig c;
  c.dt = 0.1;
  c.duration = 1.0;
  c.snapshot_interval = 0.5;
  EXPECT_EQ(c.steps_total(), 10u);
  EXPECT_EQ(c.snapshot_every(), 5u);
}

TEST(Config, FieldLevelIssues) {
  SimConfig c;
  c.dt = 0.1;
  c.snapshot_interval = 0.25;
  c.inlet_cells = {{0, 0, InletMode::fixed_depth}, {1, 7, InletMode::hydrograph}};
  c.hydrograph = {{10, 1}, {5, -1}};
  const auto f = fields(validate(c, synthetic::flat(4, 4)));
  EXPECT_EQ(f, (std::vector<std::string>{"snapshot_interval", "inlet_cells[1]", "hydrograph[1]", "hydrograph[1]"}));
}

TEST(Config, JsonRoundTrip) {
  SimConfig c;
  c.dt = 0.05;
  c.duration = 12.5;
  c.snapshot_interval = 0.5;
  c.inlet_cells = {{3, 4, InletMode::hydrograph}, {1, 1, InletMode::fixed_depth}};
  c.inlet_depth = 0.75;
  c.hydrograph = {{0, 1}, {10, 4.5}};
  c.total_discharge = 40.0;
  c.wet_rule_on = false;
  c.scheduling = Policy::dynamic;
  c.threads = 4;
  c.block_size = 1234;
  const SimConfig back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
}

TEST(Config, HydrographObjectForm) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"hydrograph":[{"time":0,"discharge":3},[5,6]]})"));
  ASSERT_EQ(c.hydrograph.size(), 2u);
  EXPECT_EQ(c.hydrograph[1].discharge, 6.0);
}

TEST(Config, LayersOverBase) {
  SimConfig base;
  base.threads = 8;
  const auto c = config_from_json(nlohmann::json::parse(R"({"dt":0.2})"), base);
  EXPECT_EQ(c.threads, 8u);
  EXPECT_EQ(c.dt, 0.2);
}

TEST(Config, BadValuesAreParseErrors) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"dt":"fast"})")), ParseError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"scheduling":"guided"})")), ParseError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"inlet_cells":[{"row":-1,"col":0}]})")), ParseError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"([1,2])")), ParseError);
}

TEST(Config, PolicyNames) {
  EXPECT_EQ(parse_policy("static"), Policy::static_blocks);
  EXPECT_EQ(std::string(to_string(Policy::dynamic)), "dynamic");
  EXPECT_FALSE(parse_policy("x"));
}

TEST(Config, MeanDischargeTimeWeighted) {
  EXPECT_DOUBLE_EQ(mean_discharge({{0, 10}, {100, 50}, {200, 10}}), 30.0);
  EXPECT_DOUBLE_EQ(mean_discharge({{0, 0}, {10, 10}, {30, 10}}), (50.0 + 200.0) / 30.0);
}
