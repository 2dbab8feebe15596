#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dnnopt/design_space.hpp"
#include "dnnopt/device_world.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {

using Objective = std::function<double(const DesignPoint&)>;

struct SearchParams {
  int population = 32;
  int generations = 30;
  double mutation_rate = 0.1;
  double elite_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SearchTraceRow {
  int generation;
  double best_value;
};

struct SearchResult {
  DesignPoint best;
  double best_value = 0.0;
  std::size_t evaluations = 0;  // distinct designs passed to the objective
  std::vector<SearchTraceRow> trace;
};

// Elitist genetic search. Generation 0 is a uniform sample; each later
// generation keeps the elite fraction (distinct designs) and refills with
// mutated crossovers of elites. Values are memoized per design, so at most
// population * generations objective calls are made. Ties resolve to the
// lexicographically smaller index list.
SearchResult evolutionary_search(const Objective& objective, const DesignSpace& space,
                                 const SearchParams& params);

// Exhaustive scan in enumerate_all order; the first minimum wins.
SearchResult brute_force_argmin(const Objective& objective, const DesignSpace& space,
                                std::uint64_t limit);

// -accuracy + lambda1 * energy / scale.energy + lambda2 * latency / scale.latency,
// all from the oracle. Charges one accuracy, and one energy/latency
// measurement for each non-zero weight.
double relaxed_objective_true(const DesignPoint& x, const DesignSpace& space,
                              const DeviceFeatures& d, const TradeoffWeights& lambda,
                              const ObjectiveScale& scale, MeasurementLedger& ledger,
                              const AccuracyModel& accuracy = {});

// Uncharged variant for test oracles and post-hoc reporting.
double relaxed_objective_model(const DesignPoint& x, const DesignSpace& space,
                               const DeviceFeatures& d, const TradeoffWeights& lambda,
                               const ObjectiveScale& scale, const AccuracyModel& accuracy = {});

struct ConstraintSpec {
  std::optional<double> latency_bound;  // ms
  std::optional<double> energy_bound;   // mJ

  bool any() const noexcept { return latency_bound.has_value() || energy_bound.has_value(); }
  void validate() const;
  bool satisfied(double latency, double energy) const noexcept;
  // Sum of relative excesses over each present bound; 0 when feasible.
  double violation(double latency, double energy) const noexcept;
};

// {0} followed by 1e-3 * 2^k for k = 0..20.
std::vector<double> calibration_axis();

using LambdaMinimizer = std::function<DesignPoint(const TradeoffWeights&)>;

struct CalibrationResult {
  TradeoffWeights lambda;
  DesignPoint design;
  bool feasible = false;
  double latency = 0.0;
  double energy = 0.0;
  double accuracy = 0.0;
  std::size_t candidates = 0;  // inner minimizations run
};

// Sweeps `calibration_axis()` on every bounded dimension (product grid when
// both bounds are present), runs `inner` per weight pair and measures the
// resulting design on `d`. Returns the feasible design with the highest
// accuracy, or the least-violating one with feasible = false.
CalibrationResult calibrate_lambda(const DesignSpace& space, const DeviceFeatures& d,
                                   const ConstraintSpec& constraints, const LambdaMinimizer& inner,
                                   MeasurementLedger& ledger, const AccuracyModel& accuracy = {});

}  // namespace dnnopt
