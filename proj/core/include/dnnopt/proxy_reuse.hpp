#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnnopt/search.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {

struct BisectionSettings {
  double delta = 0.0;  // ms; 0 selects 2% of the bound
  double granularity = 0.001;
  int max_iterate = 10;

  void validate() const;
  double delta_for(double bound) const { return delta > 0.0 ? delta : 0.02 * bound; }
};

// Solved inner problems keyed by the weight quantized to the granularity.
class TCache {
 public:
  explicit TCache(double granularity = 0.001);

  double granularity() const noexcept { return granularity_; }
  std::int64_t key(double t) const;
  double quantize(double t) const;
  const DesignPoint* find(double t) const;
  void insert(double t, DesignPoint x);
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::int64_t, DesignPoint>& entries() const noexcept { return entries_; }

 private:
  double granularity_;
  std::map<std::int64_t, DesignPoint> entries_;
};

// Minimizes an objective over the design space; returns the search result.
using InnerSolver = std::function<SearchResult(const Objective&)>;

InnerSolver evolutionary_inner(const DesignSpace& space, const SearchParams& params);
InnerSolver brute_force_inner(const DesignSpace& space, std::uint64_t limit);

// -(1 - t) * Acc(x) + t * latency_d0(x) / scale.latency
double proxy_objective(std::span<const double> encoding, double t, const PerformancePredictors& p);

// -(1 - t1 - t2) * Acc + t1 * latency_d0 / scale.latency + t2 * energy_d0 / scale.energy
double proxy_objective_2d(std::span<const double> encoding, double t1, double t2,
                          const PerformancePredictors& p);

struct InnerSolution {
  DesignPoint design;
  bool cache_hit = false;
  std::size_t evaluations = 0;
};

// Predictor-only: never touches a device oracle.
InnerSolution solve_inner(double t, TCache& cache, const DesignSpace& space,
                          const PerformancePredictors& p, const InnerSolver& inner);

struct BisectionTraceRow {
  int iteration;
  double t;
  double measured_latency;
  double bound;
  std::string verdict;  // "too_slow", "too_fast", "within_band"
};

struct BisectionResult {
  DesignPoint design;
  double t = 0.0;
  double latency = 0.0;  // measured on the target
  bool feasible = false;
  int measurements = 0;
  std::vector<BisectionTraceRow> trace;
};

// Bisection over t in [0,1], one target latency measurement per iteration.
// Stops inside the band |latency - bound| < delta. If the iteration budget
// runs out first, returns the measured iterate with latency < bound + delta
// and the highest predicted accuracy; if there is none, the fastest measured
// iterate with feasible = false.
BisectionResult bisection_optimize(const DesignSpace& space, const DeviceFeatures& target,
                                   double bound, const BisectionSettings& settings, TCache& cache,
                                   const PerformancePredictors& p, const InnerSolver& inner,
                                   MeasurementLedger& ledger);

struct Grid2dSettings {
  int levels = 3;
  int coarse_divisions = 8;       // coarse simplex step 1/8
  int refine_factor = 4;          // step shrinks by this per level
  int refine_radius = 4;          // steps around the incumbent
  int measurements_per_level = 4; // candidate designs measured per level
};

struct Grid2dTraceRow {
  int level;
  double t1;
  double t2;
  double latency;
  double energy;
  bool feasible;
};

struct Grid2dResult {
  DesignPoint design;
  double t1 = 0.0;  // latency weight
  double t2 = 0.0;  // energy weight
  double latency = 0.0;
  double energy = 0.0;
  bool feasible = false;
  int measurements = 0;  // candidate designs measured (one latency + one energy each)
  std::vector<Grid2dTraceRow> trace;
};

// Coarse-to-fine search over the simplex t1, t2 >= 0, t1 + t2 <= 1. Inner
// solutions come from predictors only; target measurements go to the
// highest predicted-accuracy candidate predicted to be feasible, using the
// target/proxy ratio observed at the last measurement.
Grid2dResult grid_optimize_2d(const DesignSpace& space, const DeviceFeatures& target,
                              double latency_bound, double energy_bound,
                              const Grid2dSettings& settings, const PerformancePredictors& p,
                              const InnerSolver& inner, MeasurementLedger& ledger);

// Pearson correlation of average ranks. Throws kInvalidArgument on length
// mismatch or fewer than three points, kUndefinedCorrelation on a constant
// input.
double spearman(std::span<const double> a, std::span<const double> b);

struct MonotonicityCheck {
  double rho = 0.0;
  bool monotone = false;
};

// Samples `probe_count` designs, measures them on the target and compares
// against the proxy latency predictor's ranking.
MonotonicityCheck check_monotonicity(const MlpRegressor& proxy_latency, const DesignSpace& space,
                                     const DeviceFeatures& target, int probe_count,
                                     double threshold, MeasurementLedger& ledger, Rng& rng);
// Same test on probes that were already measured.
MonotonicityCheck check_monotonicity(const MlpRegressor& proxy_latency, const DesignSpace& space,
                                     std::span<const DesignPoint> probes,
                                     std::span<const double> target_latency, double threshold);

struct ProxyEntry {
  DeviceFeatures device;
  PerformancePredictors predictors;
  TCache cache;
};

struct ProxyPool {
  std::vector<ProxyEntry> entries;
};

struct MatchOutcome {
  std::optional<std::size_t> index;  // matched pool entry
  std::vector<std::pair<std::string, double>> tried;  // (proxy id, rho) in test order
  std::vector<DesignPoint> probes;
  std::vector<double> probe_latency;  // measured on the target
};

// Candidates are tried nearest-first by Euclidean distance between device
// log-features. One probe set is drawn and measured once per target and
// reused for every candidate.
MatchOutcome match_proxy(const ProxyPool& pool, const DesignSpace& space,
                         const DeviceFeatures& target, double threshold, int probe_count,
                         MeasurementLedger& ledger, Rng& rng);

// Builds predictors for a target that matched no proxy. Receives the probe
// designs and their measured latencies so they can be reused as samples.
using ProxyTrainer = std::function<PerformancePredictors(
    const DeviceFeatures& target, std::span<const DesignPoint> probes,
    std::span<const double> probe_latency)>;

struct ProxyAssignment {
  std::size_t index;
  bool reused;
  MatchOutcome match;
};

// match_proxy, falling back to training the target as a new proxy and adding
// it to the pool.
ProxyAssignment assign_proxy(ProxyPool& pool, const DesignSpace& space,
                             const DeviceFeatures& target, double threshold, int probe_count,
                             MeasurementLedger& ledger, Rng& rng, const ProxyTrainer& trainer,
                             double granularity = 0.001);

}  // namespace dnnopt
