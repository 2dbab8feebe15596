#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dnnopt/learn_to_optimize.hpp"
#include "dnnopt/proxy_reuse.hpp"
#include "dnnopt/scenario.hpp"

namespace dnnopt {

// Independent generator streams derived from the scenario seed, so one stage
// can be skipped without shifting the random draws of another.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
Rng derive_rng(std::uint64_t seed, std::string_view stream);

struct CostRow {
  std::string label;
  std::uint64_t devices = 0;
  double measurements_per_device = 0.0;
  double hours_per_device = 0.0;
  double total_hours = 0.0;
  double ratio_vs_baseline = 1.0;  // baseline measurements / row measurements
};

struct ApproachCost {
  std::string label;
  double measurements_per_device = 0.0;
};

// Baseline row (`samples_per_device` measurements per device) followed by one
// row per approach. Empty when `device_count` is 0.
std::vector<CostRow> cost_accounting(int samples_per_device, double seconds_per_measurement,
                                     int device_count,
                                     std::span<const ApproachCost> approaches = {});

// Per-device bounds: absolute values as given, quantiles taken over the
// target's modeled latency (energy) on reference designs. Reference designs
// are the whole space when it is small enough, else a seeded uniform sample.
ConstraintSpec resolve_constraints(const Scenario& s, const DeviceFeatures& d);

// Nearest-rank quantile.
double quantile(std::vector<double> values, double q);

struct DeviceResult {
  std::string device_id;
  std::string group;  // "monotone" or "adversarial"
  DesignPoint design;
  // Proxy reuse: t (latency only) or (t1 latency, t2 energy).
  // Learn to optimize: (lambda1 energy, lambda2 latency).
  double weight1 = 0.0;
  double weight2 = 0.0;
  std::optional<double> latency_bound;
  std::optional<double> energy_bound;
  // Oracle values of the returned design, evaluated without charging the ledger.
  double latency = 0.0;
  double energy = 0.0;
  double accuracy = 0.0;
  bool feasible = false;
  std::string proxy_id;
  bool reused = false;
  std::optional<double> rho;
  std::uint64_t training_measurements = 0;  // new proxy trained for this device
  std::uint64_t probe_measurements = 0;     // monotonicity probes
  std::uint64_t search_measurements = 0;    // bisection / grid / sweep validation

  std::uint64_t total_measurements() const noexcept {
    return training_measurements + probe_measurements + search_measurements;
  }
};

struct TraceRecord {
  std::string device_id;
  int iteration = 0;
  double t1 = 0.0;
  double t2 = 0.0;
  double latency = 0.0;
  double energy = 0.0;  // NaN when not measured
  std::string verdict;
};

struct SweepRecord {
  std::string device_id;
  SweepRow row;
};

struct RunReport {
  std::uint64_t seed = 0;
  Approach approach = Approach::kProxyReuse;
  bool trained = true;  // false when models were loaded instead of trained
  std::vector<DeviceResult> devices;
  std::vector<TraceRecord> traces;
  std::vector<SweepRecord> sweeps;
  MeasurementLedger ledger;
  std::uint64_t stage1_measurements = 0;
  std::vector<CostRow> cost;
  double wall_time_s = 0.0;

  std::size_t infeasible_count() const;
};

struct TrainedModels {
  Approach approach = Approach::kProxyReuse;
  PerformancePredictors proxy;
  // Proxies trained during optimization for devices that matched no pool entry.
  std::map<std::string, PerformancePredictors> new_proxies;
  PerformancePredictors device_aware;
  OptimizerNetwork optimizer;
};

Fleet make_fleet(const Scenario& s);

// Stage 1: proxy predictors, or device-aware predictors plus the optimizer
// network.
TrainedModels train_stage1(const Scenario& s, const Fleet& fleet, MeasurementLedger& ledger);

// Layout: manifest.json plus one JSON file per model.
void save_models(const TrainedModels& m, const std::filesystem::path& dir);
TrainedModels load_models(const std::filesystem::path& dir);

struct RunOptions {
  bool skip_training = false;
  std::filesystem::path model_dir;  // read when skip_training is set
};

struct RunOutput {
  Fleet fleet;
  TrainedModels models;
  RunReport report;
};

// Stage 1 (unless skipped), then the selected approach over every holdout
// device.
RunOutput run_scenario(const Scenario& s, const RunOptions& options = {});

// Writes into a staging directory next to `out_dir` and moves the results in
// only after `writer` returns; the staging directory is removed on failure.
void write_outputs(const std::filesystem::path& out_dir,
                   const std::function<void(const std::filesystem::path&)>& writer);

// devices.csv, ledger.csv, cost_table.csv, trace.csv or sweep.csv,
// summary.json, fleet.json and models/.
void export_report(const Scenario& s, const RunOutput& run, const std::filesystem::path& out_dir);

// Column headers of the exported tables, in file order.
const std::vector<std::string>& devices_csv_header();
const std::vector<std::string>& ledger_csv_header();
const std::vector<std::string>& cost_csv_header();
const std::vector<std::string>& trace_csv_header();
const std::vector<std::string>& sweep_csv_header();

}  // namespace dnnopt
