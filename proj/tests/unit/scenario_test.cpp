#include "dnnopt/scenario.hpp"

#include <string>

#include <gtest/gtest.h>

#include "dnnopt/error.hpp"
#include "dnnopt/model_io.hpp"

namespace dnnopt {
namespace {

std::string ConfigError(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "no error for " << text;
  return {};
}

TEST(ScenarioTest, MinimalDocumentUsesDefaults) {
  const Scenario s = parse_scenario(R"({"seed": 5})");
  EXPECT_EQ(s.seed, 5u);
  EXPECT_EQ(s.approach, Approach::kProxyReuse);
  EXPECT_EQ(s.space, DesignSpace::standard());
  EXPECT_EQ(s.fleet.training_real, 16);
  EXPECT_EQ(s.probe_count, 20);
  EXPECT_DOUBLE_EQ(s.rho_threshold, 0.9);
  EXPECT_EQ(s.cost_samples_per_device, 5000);
  EXPECT_FALSE(s.constraints.latency.active());
}

TEST(ScenarioTest, SeedOverrideWinsAndSeedIsRequired) {
  EXPECT_EQ(parse_scenario(R"({"seed": 5})", 9).seed, 9u);
  EXPECT_EQ(parse_scenario("{}", 9).seed, 9u);
  EXPECT_NE(ConfigError("{}").find("seed"), std::string::npos);
}

TEST(ScenarioTest, ParsesNestedSections) {
  const Scenario s = parse_scenario(R"({
    "seed": 1,
    "approach": "amortized",
    "space": {"preset": "reduced"},
    "fleet": {"synthetic": 3},
    "constraints": {"latency_ms": 2.5, "energy_quantile": 0.3},
    "optimizer": {"method": "method1", "mu": 0.01, "epochs": 12},
    "_comment": "ignored"
  })");
  EXPECT_EQ(s.approach, Approach::kLearnToOptimize);
  EXPECT_EQ(s.space, DesignSpace::reduced());
  EXPECT_EQ(s.fleet.synthetic, 3);
  EXPECT_EQ(s.constraints.latency.absolute, 2.5);
  EXPECT_EQ(s.constraints.energy.quantile, 0.3);
  EXPECT_EQ(s.method, AmortizedMethod::kMethod1);
  EXPECT_DOUBLE_EQ(s.optimizer.mu, 0.01);
  EXPECT_EQ(s.optimizer.training.epochs, 12);
}

TEST(ScenarioTest, ErrorsNameTheKeyPath) {
  EXPECT_NE(ConfigError(R"({"seed":1,"fleet":{"synthetc":3}})").find("fleet.synthetc"),
            std::string::npos);
  EXPECT_NE(ConfigError(R"({"seed":1,"fleet":{"synthetic":-1}})").find("fleet.synthetic"),
            std::string::npos);
  EXPECT_NE(ConfigError(R"({"seed":1,"search":{"population":"many"}})").find("search.population"),
            std::string::npos);
  EXPECT_NE(ConfigError(R"({"seed":1,"approach":"magic"})").find("approach"), std::string::npos);
  EXPECT_NE(ConfigError(R"({"seed":1,"constraints":{"latency_ms":1,"latency_quantile":0.5}})")
                .find("constraints"),
            std::string::npos);
  EXPECT_NE(ConfigError(R"({"seed":1,"constraints":{"latency_quantile":1.5}})").find("latency_quantile"),
            std::string::npos);
  ConfigError("not json");
  ConfigError("[1,2]");
}

TEST(ScenarioTest, CanonicalJsonRoundTrips) {
  const Scenario s = load_scenario(std::string(DNNOPT_CONFIG_DIR) + "/learn_to_optimize.json");
  const Scenario t = parse_scenario(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(t), scenario_to_json(s));
  EXPECT_EQ(t.seed, s.seed);
  EXPECT_EQ(t.approach, s.approach);
  EXPECT_EQ(t.space, s.space);
}

TEST(ScenarioTest, ShippedConfigsParse) {
  for (const char* name : {"proxy_reuse.json", "learn_to_optimize.json", "smoke.json"}) {
    EXPECT_NO_THROW(load_scenario(std::string(DNNOPT_CONFIG_DIR) + "/" + name)) << name;
  }
}

TEST(ScenarioTest, MissingFileIsAConfigError) {
  try {
    load_scenario("/nonexistent/scenario.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(ScenarioTest, ApproachNames) {
  EXPECT_EQ(approach_from_string("proxy"), Approach::kProxyReuse);
  EXPECT_EQ(approach_from_string("proxy_reuse"), Approach::kProxyReuse);
  EXPECT_EQ(approach_from_string("amortized"), Approach::kLearnToOptimize);
  EXPECT_EQ(approach_from_string("learn_to_optimize"), Approach::kLearnToOptimize);
  EXPECT_THROW(approach_from_string("x"), Error);
}

}  // namespace
}  // namespace dnnopt
