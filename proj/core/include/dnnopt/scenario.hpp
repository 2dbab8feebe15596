#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "dnnopt/design_space.hpp"
#include "dnnopt/device_world.hpp"
#include "dnnopt/learn_to_optimize.hpp"
#include "dnnopt/proxy_reuse.hpp"
#include "dnnopt/search.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {

enum class Approach { kProxyReuse, kLearnToOptimize };
enum class AmortizedMethod { kMethod1, kMethod2 };

const char* to_string(Approach a);
// Accepts "proxy_reuse"/"proxy" and "learn_to_optimize"/"amortized".
Approach approach_from_string(std::string_view name);
const char* to_string(AmortizedMethod m);

// A bound is either absolute or a quantile of the target's latency (energy)
// distribution over `reference_designs` uniformly drawn designs.
struct BoundSpec {
  std::optional<double> absolute;
  std::optional<double> quantile;
  bool active() const noexcept { return absolute.has_value() || quantile.has_value(); }
};

struct ConstraintConfig {
  BoundSpec latency;
  BoundSpec energy;
  int reference_designs = 1000;
};

struct Scenario {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  Approach approach = Approach::kProxyReuse;
  DesignSpace space = DesignSpace::standard();
  FleetConfig fleet;

  // Device-specific predictors (the proxy and any new proxies).
  PredictorSettings predictors;
  int samples_per_device = 500;
  // Device-aware predictors for the amortized approach.
  PredictorSettings device_aware;
  int device_aware_designs = 500;
  int explore_rounds = 0;
  int explore_size = 100;

  SearchParams search;
  BisectionSettings bisection;
  Grid2dSettings grid2d;
  ConstraintConfig constraints;

  bool check_monotonicity = true;
  int probe_count = 20;
  double rho_threshold = 0.9;

  int lambda_count = 4;
  double lambda_max = 1.0;
  int sweep_count = 4;
  AmortizedMethod method = AmortizedMethod::kMethod2;
  OptimizerSettings optimizer;
  int fine_tune_radius = 0;
  int fine_tune_budget = 512;

  int cost_samples_per_device = 5000;
  double cost_seconds_per_measurement = 30.0;
  int cost_device_count = 100;

  Scenario();
};

// Parses a scenario document. Keys starting with '_' are ignored; unknown
// keys, wrong types and invalid values throw Error(kConfig) whose message
// starts with the offending key path (e.g. "fleet.synthetic: ...").
// `seed_override` replaces the document's seed; one of the two is required.
Scenario parse_scenario(std::string_view json_text,
                        std::optional<std::uint64_t> seed_override = std::nullopt);
Scenario load_scenario(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seed_override = std::nullopt);

// Canonical JSON form; parse_scenario(scenario_to_json(s)) reproduces s.
std::string scenario_to_json(const Scenario& s);

}  // namespace dnnopt
