#include "dnnopt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "dnnopt/error.hpp"
#include "dnnopt/model_io.hpp"

namespace dnnopt {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng derive_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

std::vector<CostRow> cost_accounting(int samples_per_device, double seconds_per_measurement,
                                     int device_count, std::span<const ApproachCost> approaches) {
  if (samples_per_device <= 0 || !(seconds_per_measurement > 0.0) || device_count < 0) {
    throw Error(ErrorCode::kInvalidArgument, "cost inputs must be positive");
  }
  std::vector<CostRow> rows;
  if (device_count == 0) return rows;
  const auto devices = static_cast<std::uint64_t>(device_count);
  auto make = [&](std::string label, double per_device) {
    CostRow r;
    r.label = std::move(label);
    r.devices = devices;
    r.measurements_per_device = per_device;
    r.hours_per_device = per_device * seconds_per_measurement / 3600.0;
    r.total_hours = r.hours_per_device * static_cast<double>(devices);
    r.ratio_vs_baseline = per_device > 0.0 ? samples_per_device / per_device
                                           : std::numeric_limits<double>::infinity();
    return r;
  };
  rows.push_back(make("per_device_baseline", samples_per_device));
  for (const auto& a : approaches) rows.push_back(make(a.label, a.measurements_per_device));
  return rows;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kInsufficientData, "quantile of empty set");
  if (!(q > 0.0 && q <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "quantile must be in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

ConstraintSpec resolve_constraints(const Scenario& s, const DeviceFeatures& d) {
  ConstraintSpec c;
  c.latency_bound = s.constraints.latency.absolute;
  c.energy_bound = s.constraints.energy.absolute;
  if (!s.constraints.latency.quantile && !s.constraints.energy.quantile) return c;

  std::vector<DesignPoint> reference;
  const auto n = static_cast<std::uint64_t>(s.constraints.reference_designs);
  if (s.space.cardinality() <= n) {
    reference = enumerate_all(s.space, n);
  } else {
    Rng rng = derive_rng(s.seed, "reference:" + d.id);
    for (std::uint64_t i = 0; i < n; ++i) reference.push_back(sample_uniform(s.space, rng));
  }
  if (s.constraints.latency.quantile) {
    std::vector<double> v;
    for (const auto& x : reference) v.push_back(modeled_latency(x, s.space, d));
    c.latency_bound = quantile(std::move(v), *s.constraints.latency.quantile);
  }
  if (s.constraints.energy.quantile) {
    std::vector<double> v;
    for (const auto& x : reference) v.push_back(modeled_energy(x, s.space, d));
    c.energy_bound = quantile(std::move(v), *s.constraints.energy.quantile);
  }
  return c;
}

std::size_t RunReport::infeasible_count() const {
  return static_cast<std::size_t>(
      std::count_if(devices.begin(), devices.end(), [](const DeviceResult& r) { return !r.feasible; }));
}

Fleet make_fleet(const Scenario& s) {
  Rng rng = derive_rng(s.seed, "fleet");
  return generate_fleet(s.fleet, s.space, rng);
}

namespace {

SearchParams inner_search_params(const Scenario& s) {
  SearchParams p = s.search;
  p.seed = s.search.seed ^ derive_seed(s.seed, "search");
  return p;
}

PerformancePredictors train_proxy_predictors(const Scenario& s, const DeviceFeatures& d,
                                             MeasurementLedger& ledger,
                                             const DeviceSpecificOptions& options = {}) {
  Rng rng = derive_rng(s.seed, "proxy:" + d.id);
  return train_device_specific_set(s.space, d, s.samples_per_device, rng, ledger, s.predictors,
                                   options)
      .predictors;
}

}  // namespace

TrainedModels train_stage1(const Scenario& s, const Fleet& fleet, MeasurementLedger& ledger) {
  TrainedModels m;
  m.approach = s.approach;
  if (s.approach == Approach::kProxyReuse) {
    m.proxy = train_proxy_predictors(s, fleet.proxy, ledger);
    return m;
  }

  Rng rng = derive_rng(s.seed, "device_aware");
  PredictorTrainingState state = train_device_aware_set(
      s.space, fleet.training_real, s.device_aware_designs, rng, ledger, s.device_aware);
  iterative_fit(state, s.explore_rounds, s.explore_size, s.space, fleet.training_real, rng, ledger,
                s.device_aware);
  m.device_aware = std::move(state.predictors);

  const auto lambdas = build_lambda_grid(s.lambda_count, s.lambda_max);
  const auto devices = fleet.training_all();
  Rng opt_rng = derive_rng(s.seed, "optimizer");
  if (s.method == AmortizedMethod::kMethod1) {
    const OptimizerTrainingSet set =
        generate_labels_method1(s.space, devices, lambdas, m.device_aware, inner_search_params(s));
    m.optimizer = train_method1(s.space, set, s.optimizer, opt_rng).network;
  } else {
    const OptimizerTrainingSet set = make_training_inputs(devices, lambdas);
    m.optimizer = train_method2(s.space, set, m.device_aware, s.optimizer, opt_rng).network;
  }
  return m;
}

void save_models(const TrainedModels& m, const fs::path& dir) {
  json manifest;
  manifest["approach"] = to_string(m.approach);
  if (m.approach == Approach::kProxyReuse) {
    write_text(dir / "proxy.json", to_json(m.proxy));
    manifest["proxy"] = "proxy.json";
    json extra = json::array();
    for (const auto& [id, p] : m.new_proxies) {
      const std::string file = "proxies/" + id + ".json";
      write_text(dir / file, to_json(p));
      extra.push_back({{"device_id", id}, {"file", file}});
    }
    manifest["new_proxies"] = extra;
  } else {
    write_text(dir / "device_aware.json", to_json(m.device_aware));
    write_text(dir / "optimizer.json", to_json(m.optimizer));
    manifest["device_aware"] = "device_aware.json";
    manifest["optimizer"] = "optimizer.json";
  }
  write_text(dir / "manifest.json", manifest.dump(2));
}

TrainedModels load_models(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed model manifest: ") + e.what());
  }
  TrainedModels m;
  try {
    m.approach = approach_from_string(manifest.at("approach").get<std::string>());
    if (m.approach == Approach::kProxyReuse) {
      m.proxy = predictors_from_json(read_text(dir / manifest.at("proxy").get<std::string>()));
      for (const auto& e : manifest.at("new_proxies")) {
        m.new_proxies[e.at("device_id").get<std::string>()] =
            predictors_from_json(read_text(dir / e.at("file").get<std::string>()));
      }
    } else {
      m.device_aware =
          predictors_from_json(read_text(dir / manifest.at("device_aware").get<std::string>()));
      m.optimizer = optimizer_from_json(read_text(dir / manifest.at("optimizer").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("invalid model manifest: ") + e.what());
  }
  return m;
}

namespace {

struct Holdout {
  const DeviceFeatures* device;
  const char* group;
};

std::vector<Holdout> holdouts(const Fleet& fleet) {
  std::vector<Holdout> out;
  for (const auto& d : fleet.holdout_monotone) out.push_back({&d, "monotone"});
  for (const auto& d : fleet.holdout_adversarial) out.push_back({&d, "adversarial"});
  return out;
}

void evaluate(const Scenario& s, const DeviceFeatures& d, const ConstraintSpec& c,
              DeviceResult& r) {
  r.latency_bound = c.latency_bound;
  r.energy_bound = c.energy_bound;
  r.latency = modeled_latency(r.design, s.space, d);
  r.energy = modeled_energy(r.design, s.space, d);
  r.accuracy = modeled_accuracy(r.design, s.space);
  r.feasible = c.satisfied(r.latency, r.energy);
}

void run_proxy_reuse(const Scenario& s, const Fleet& fleet, TrainedModels& models, bool train_new,
                     MeasurementLedger& ledger, RunReport& report) {
  ProxyPool pool;
  pool.entries.push_back({fleet.proxy, models.proxy, TCache(s.bisection.granularity)});
  const InnerSolver inner = evolutionary_inner(s.space, inner_search_params(s));

  for (const auto& [dp, group] : holdouts(fleet)) {
    const DeviceFeatures& d = *dp;
    DeviceResult r;
    r.device_id = d.id;
    r.group = group;
    const ConstraintSpec c = resolve_constraints(s, d);
    const std::uint64_t start = ledger.device_total(d.id);

    std::size_t index = 0;
    if (s.check_monotonicity) {
      const MlpRegressor shared_accuracy = models.proxy.accuracy;
      const ProxyTrainer trainer = [&](const DeviceFeatures& target,
                                       std::span<const DesignPoint> probes,
                                       std::span<const double> probe_latency) {
        if (!train_new) {
          auto it = models.new_proxies.find(target.id);
          if (it == models.new_proxies.end()) {
            throw Error(ErrorCode::kIo, "no saved proxy model for device " + target.id);
          }
          return it->second;
        }
        const std::uint64_t before = ledger.device_total(target.id);
        DeviceSpecificOptions opts;
        opts.known_designs = probes;
        opts.known_latency = probe_latency;
        opts.shared_accuracy = &shared_accuracy;
        PerformancePredictors p = train_proxy_predictors(s, target, ledger, opts);
        r.training_measurements = ledger.device_total(target.id) - before;
        models.new_proxies[target.id] = p;
        return p;
      };
      Rng rng = derive_rng(s.seed, "probe:" + d.id);
      const ProxyAssignment a = assign_proxy(pool, s.space, d, s.rho_threshold, s.probe_count,
                                             ledger, rng, trainer, s.bisection.granularity);
      index = a.index;
      r.reused = a.reused;
      if (a.reused) r.rho = a.match.tried.back().second;
      else if (!a.match.tried.empty()) r.rho = a.match.tried.front().second;
      r.probe_measurements = ledger.device_total(d.id) - start - r.training_measurements;
    } else {
      r.reused = true;
    }
    ProxyEntry& entry = pool.entries[index];
    r.proxy_id = entry.device.id;
    const std::uint64_t search_start = ledger.device_total(d.id);

    if (c.latency_bound && !c.energy_bound) {
      const BisectionResult b = bisection_optimize(s.space, d, *c.latency_bound, s.bisection,
                                                   entry.cache, entry.predictors, inner, ledger);
      r.design = b.design;
      r.weight1 = b.t;
      for (const auto& row : b.trace) {
        report.traces.push_back({d.id, row.iteration, row.t, 0.0, row.measured_latency,
                                 std::numeric_limits<double>::quiet_NaN(), row.verdict});
      }
    } else if (c.energy_bound) {
      const double lat = c.latency_bound.value_or(std::numeric_limits<double>::infinity());
      const Grid2dResult g = grid_optimize_2d(s.space, d, lat, *c.energy_bound, s.grid2d,
                                              entry.predictors, inner, ledger);
      r.design = g.design;
      r.weight1 = g.t1;
      r.weight2 = g.t2;
      for (const auto& row : g.trace) {
        report.traces.push_back({d.id, row.level, row.t1, row.t2, row.latency, row.energy,
                                 row.feasible ? "feasible" : "infeasible"});
      }
    } else {
      r.design = solve_inner(0.0, entry.cache, s.space, entry.predictors, inner).design;
    }
    r.search_measurements = ledger.device_total(d.id) - search_start;
    evaluate(s, d, c, r);
    report.devices.push_back(std::move(r));
  }
}

void run_learn_to_optimize(const Scenario& s, const Fleet& fleet, const TrainedModels& models,
                           MeasurementLedger& ledger, RunReport& report) {
  const auto grid = build_lambda_grid(s.sweep_count, s.lambda_max);
  SweepOptions options;
  options.fine_tune_radius = s.fine_tune_radius;
  options.fine_tune_budget = static_cast<std::size_t>(s.fine_tune_budget);
  for (const auto& [dp, group] : holdouts(fleet)) {
    const DeviceFeatures& d = *dp;
    DeviceResult r;
    r.device_id = d.id;
    r.group = group;
    const ConstraintSpec c = resolve_constraints(s, d);
    const std::uint64_t start = ledger.device_total(d.id);
    const SweepResult sweep = constraint_sweep(models.optimizer, s.space, d, c,
                                               models.device_aware, grid, ledger, options);
    r.design = sweep.design;
    r.weight1 = sweep.lambda.lambda1;
    r.weight2 = sweep.lambda.lambda2;
    r.search_measurements = ledger.device_total(d.id) - start;
    for (const auto& row : sweep.rows) report.sweeps.push_back({d.id, row});
    evaluate(s, d, c, r);
    report.devices.push_back(std::move(r));
  }
}

double mean_of(const std::vector<DeviceResult>& rows,
               std::uint64_t (*field)(const DeviceResult&)) {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : rows) sum += static_cast<double>(field(r));
  return sum / static_cast<double>(rows.size());
}

}  // namespace

RunOutput run_scenario(const Scenario& s, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  out.fleet = make_fleet(s);
  RunReport& report = out.report;
  report.seed = s.seed;
  report.approach = s.approach;
  report.trained = !options.skip_training;

  MeasurementLedger ledger;
  if (options.skip_training) {
    out.models = load_models(options.model_dir);
    if (out.models.approach != s.approach) {
      throw Error(ErrorCode::kConfig, "approach: saved models were trained for " +
                                          std::string(to_string(out.models.approach)));
    }
  } else {
    out.models = train_stage1(s, out.fleet, ledger);
  }
  report.stage1_measurements = ledger.total();

  if (s.approach == Approach::kProxyReuse) {
    run_proxy_reuse(s, out.fleet, out.models, !options.skip_training, ledger, report);
  } else {
    run_learn_to_optimize(s, out.fleet, out.models, ledger, report);
  }
  report.ledger = ledger;

  const std::vector<ApproachCost> costs{
      {std::string(to_string(s.approach)) + "_search",
       mean_of(report.devices, [](const DeviceResult& r) { return r.search_measurements; })},
      {std::string(to_string(s.approach)) + "_total",
       mean_of(report.devices, [](const DeviceResult& r) { return r.total_measurements(); })}};
  report.cost = cost_accounting(s.cost_samples_per_device, s.cost_seconds_per_measurement,
                                s.cost_device_count, costs);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void write_outputs(const fs::path& out_dir, const std::function<void(const fs::path&)>& writer) {
  fs::path target = out_dir.empty() ? fs::path(".") : out_dir;
  const fs::path staging = fs::path(target.lexically_normal().string() + ".partial");
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging);
    writer(staging);
    fs::create_directories(target);
    for (const auto& entry : fs::directory_iterator(staging)) {
      const fs::path dest = target / entry.path().filename();
      fs::remove_all(dest);
      fs::rename(entry.path(), dest);
    }
    fs::remove_all(staging);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw Error(ErrorCode::kIo, e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

const std::vector<std::string>& devices_csv_header() {
  static const std::vector<std::string> h{
      "device_id",       "group",       "design",        "weight1",
      "weight2",         "latency_bound_ms", "energy_bound_mj", "latency_ms",
      "energy_mj",       "accuracy",    "feasible",      "proxy_id",
      "reused",          "rho",         "training_measurements", "probe_measurements",
      "search_measurements", "total_measurements"};
  return h;
}

const std::vector<std::string>& ledger_csv_header() {
  static const std::vector<std::string> h{"device_id", "metric", "count"};
  return h;
}

const std::vector<std::string>& cost_csv_header() {
  static const std::vector<std::string> h{"label",          "devices",     "measurements_per_device",
                                          "hours_per_device", "total_hours", "ratio_vs_baseline"};
  return h;
}

const std::vector<std::string>& trace_csv_header() {
  static const std::vector<std::string> h{"device_id", "iteration",  "t1",     "t2",
                                          "latency_ms", "energy_mj", "verdict"};
  return h;
}

const std::vector<std::string>& sweep_csv_header() {
  static const std::vector<std::string> h{
      "device_id",           "lambda1",           "lambda2",
      "design",              "predicted_feasible", "predicted_accuracy",
      "predicted_latency_ms", "predicted_energy_mj", "chosen"};
  return h;
}

namespace {

std::string bound_text(const std::optional<double>& b) { return b ? format_double(*b) : ""; }
std::string flag(bool b) { return b ? "1" : "0"; }

std::string design_text(const DesignPoint& x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i > 0) s += ' ';
    s += std::to_string(x[i]);
  }
  return s;
}

}  // namespace

void export_report(const Scenario& s, const RunOutput& run, const fs::path& out_dir) {
  const RunReport& report = run.report;
  write_outputs(out_dir, [&](const fs::path& dir) {
    {
      CsvWriter csv(dir / "devices.csv", devices_csv_header());
      for (const auto& r : report.devices) {
        csv.row({r.device_id, r.group, design_text(r.design), format_double(r.weight1),
                 format_double(r.weight2), bound_text(r.latency_bound), bound_text(r.energy_bound),
                 format_double(r.latency), format_double(r.energy), format_double(r.accuracy),
                 flag(r.feasible), r.proxy_id, flag(r.reused), bound_text(r.rho),
                 std::to_string(r.training_measurements), std::to_string(r.probe_measurements),
                 std::to_string(r.search_measurements), std::to_string(r.total_measurements())});
      }
    }
    {
      CsvWriter csv(dir / "ledger.csv", ledger_csv_header());
      for (const auto& e : report.ledger.report()) {
        csv.row({e.device_id, to_string(e.metric), std::to_string(e.count)});
      }
      csv.row({"", "accuracy", std::to_string(report.ledger.accuracy_count())});
    }
    {
      CsvWriter csv(dir / "cost_table.csv", cost_csv_header());
      for (const auto& c : report.cost) {
        csv.row({c.label, std::to_string(c.devices), format_double(c.measurements_per_device),
                 format_double(c.hours_per_device), format_double(c.total_hours),
                 format_double(c.ratio_vs_baseline)});
      }
    }
    if (report.approach == Approach::kProxyReuse) {
      CsvWriter csv(dir / "trace.csv", trace_csv_header());
      for (const auto& t : report.traces) {
        csv.row({t.device_id, std::to_string(t.iteration), format_double(t.t1),
                 format_double(t.t2), format_double(t.latency),
                 std::isnan(t.energy) ? "" : format_double(t.energy), t.verdict});
      }
    } else {
      CsvWriter csv(dir / "sweep.csv", sweep_csv_header());
      for (const auto& [id, row] : report.sweeps) {
        csv.row({id, format_double(row.lambda.lambda1), format_double(row.lambda.lambda2),
                 design_text(row.design), flag(row.predicted_feasible),
                 format_double(row.predicted_accuracy), format_double(row.predicted_latency),
                 format_double(row.predicted_energy), flag(row.chosen)});
      }
    }

    std::uint64_t training = 0, probes = 0, search = 0, max_search = 0;
    for (const auto& r : report.devices) {
      training += r.training_measurements;
      probes += r.probe_measurements;
      search += r.search_measurements;
      max_search = std::max(max_search, r.search_measurements);
    }
    json summary;
    summary["seed"] = report.seed;
    summary["approach"] = to_string(report.approach);
    summary["trained"] = report.trained;
    summary["devices"] = report.devices.size();
    summary["infeasible"] = report.infeasible_count();
    summary["measurements"] = {{"total", report.ledger.total()},
                               {"accuracy", report.ledger.accuracy_count()},
                               {"stage1", report.stage1_measurements},
                               {"new_proxy_training", training},
                               {"probes", probes},
                               {"search", search},
                               {"max_search_per_device", max_search}};
    summary["wall_time_s"] = report.wall_time_s;
    summary["scenario"] = json::parse(scenario_to_json(s));
    write_text(dir / "summary.json", summary.dump(2));
    write_text(dir / "fleet.json", to_json(run.fleet));
    save_models(run.models, dir / "models");
  });
}

}  // namespace dnnopt
