// dnnopt command-line driver.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dnnopt/error.hpp"
#include "dnnopt/harness.hpp"
#include "dnnopt/model_io.hpp"
#include "dnnopt/scenario.hpp"

namespace fs = std::filesystem;
using namespace dnnopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string approach;
  bool skip_training = false;
};

Scenario scenario_from(const CommonFlags& f) {
  if (f.config.empty()) throw Error(ErrorCode::kConfig, "--config: required");
  Scenario s = load_scenario(f.config, f.seed);
  if (!f.approach.empty()) {
    try {
      s.approach = approach_from_string(f.approach);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfig, "--approach: expected proxy or amortized");
    }
  }
  if (!f.out.empty()) s.output_dir = f.out;
  return s;
}

void print_table(const std::vector<CostRow>& rows) {
  std::printf("%-28s %8s %14s %12s %14s %12s\n", "label", "devices", "meas/device", "h/device",
              "total_h", "ratio");
  for (const auto& r : rows) {
    std::printf("%-28s %8llu %14.2f %12.4f %14.2f %12.1f\n", r.label.c_str(),
                static_cast<unsigned long long>(r.devices), r.measurements_per_device,
                r.hours_per_device, r.total_hours, r.ratio_vs_baseline);
  }
}

int cmd_gen_fleet(const CommonFlags& f) {
  const Scenario s = scenario_from(f);
  const Fleet fleet = make_fleet(s);
  write_outputs(s.output_dir, [&](const fs::path& dir) {
    write_text(dir / "fleet.json", to_json(fleet));
    CsvWriter csv(dir / "fleet.csv", {"device_id", "group", "throughput", "bandwidth", "overhead",
                                      "power_dynamic", "power_static", "gamma"});
    auto emit = [&](const DeviceFeatures& d, const char* group) {
      csv.row({d.id, group, format_double(d.throughput), format_double(d.bandwidth),
               format_double(d.overhead), format_double(d.power_dynamic),
               format_double(d.power_static), format_double(d.gamma)});
    };
    emit(fleet.proxy, "proxy");
    for (const auto& d : fleet.training_real) emit(d, "training_real");
    for (const auto& d : fleet.synthetic) emit(d, "synthetic");
    for (const auto& d : fleet.holdout_monotone) emit(d, "holdout_monotone");
    for (const auto& d : fleet.holdout_adversarial) emit(d, "holdout_adversarial");
  });
  std::printf("fleet written to %s\n", s.output_dir.c_str());
  return kExitOk;
}

int cmd_train(const CommonFlags& f) {
  const Scenario s = scenario_from(f);
  const Fleet fleet = make_fleet(s);
  MeasurementLedger ledger;
  const TrainedModels models = train_stage1(s, fleet, ledger);
  write_outputs(s.output_dir, [&](const fs::path& dir) {
    save_models(models, dir / "models");
    write_text(dir / "fleet.json", to_json(fleet));
    CsvWriter csv(dir / "ledger.csv", ledger_csv_header());
    for (const auto& e : ledger.report()) {
      csv.row({e.device_id, to_string(e.metric), std::to_string(e.count)});
    }
    csv.row({"", "accuracy", std::to_string(ledger.accuracy_count())});
  });
  std::printf("%s models written to %s/models (%llu measurements)\n", to_string(s.approach),
              s.output_dir.c_str(), static_cast<unsigned long long>(ledger.total()));
  return kExitOk;
}

int cmd_optimize(const CommonFlags& f) {
  const Scenario s = scenario_from(f);
  RunOptions options;
  options.skip_training = f.skip_training;
  options.model_dir = fs::path(s.output_dir) / "models";
  const RunOutput run = run_scenario(s, options);
  export_report(s, run, s.output_dir);

  const RunReport& r = run.report;
  std::printf("%-12s %-12s %-10s %10s %10s %8s %5s %6s\n", "device", "group", "proxy", "latency",
              "energy", "acc", "ok", "meas");
  for (const auto& d : r.devices) {
    std::printf("%-12s %-12s %-10s %10.3f %10.3f %8.4f %5s %6llu\n", d.device_id.c_str(),
                d.group.c_str(), d.proxy_id.c_str(), d.latency, d.energy, d.accuracy,
                d.feasible ? "yes" : "no", static_cast<unsigned long long>(d.search_measurements));
  }
  std::printf("infeasible: %zu of %zu; report written to %s\n", r.infeasible_count(),
              r.devices.size(), s.output_dir.c_str());
  return r.infeasible_count() > 0 ? kExitInfeasible : kExitOk;
}

int cmd_report(const CommonFlags& f) {
  const fs::path dir = f.out.empty() ? fs::path("out") : fs::path(f.out);
  const auto summary = nlohmann::json::parse(read_text(dir / "summary.json"));
  std::printf("approach   %s\nseed       %llu\ndevices    %llu\ninfeasible %llu\n",
              summary.at("approach").get<std::string>().c_str(),
              static_cast<unsigned long long>(summary.at("seed").get<std::uint64_t>()),
              static_cast<unsigned long long>(summary.at("devices").get<std::uint64_t>()),
              static_cast<unsigned long long>(summary.at("infeasible").get<std::uint64_t>()));
  std::printf("measurements:\n");
  for (const auto& [k, v] : summary.at("measurements").items()) {
    std::printf("  %-22s %llu\n", k.c_str(), static_cast<unsigned long long>(v.get<std::uint64_t>()));
  }
  std::printf("\n%s", read_text(dir / "cost_table.csv").c_str());
  return summary.at("infeasible").get<std::uint64_t>() > 0 ? kExitInfeasible : kExitOk;
}

int cmd_cost_table(const CommonFlags& f, int samples, double seconds, int devices) {
  if (!f.config.empty()) {
    const Scenario s = scenario_from(f);
    samples = s.cost_samples_per_device;
    seconds = s.cost_seconds_per_measurement;
    devices = s.cost_device_count;
  }
  if (samples <= 0 || !(seconds > 0.0) || devices < 0) {
    throw Error(ErrorCode::kConfig, "cost-table: samples and seconds must be positive");
  }
  const auto rows = cost_accounting(samples, seconds, devices);
  print_table(rows);
  if (!f.out.empty()) {
    write_outputs(f.out, [&](const fs::path& dir) {
      CsvWriter csv(dir / "cost_table.csv", cost_csv_header());
      for (const auto& c : rows) {
        csv.row({c.label, std::to_string(c.devices), format_double(c.measurements_per_device),
                 format_double(c.hours_per_device), format_double(c.total_hours),
                 format_double(c.ratio_vs_baseline)});
      }
    });
  }
  return kExitOk;
}

// Reduced-space checks against exhaustive enumeration.
int cmd_selftest() {
  const DesignSpace space = DesignSpace::reduced();
  const auto all = enumerate_all(space, 1u << 20);
  int failures = 0;
  auto report = [&](const char* name, bool ok, const std::string& detail) {
    std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    if (!ok) ++failures;
  };

  bool roundtrip = all.size() == 128;
  for (const auto& x : all) roundtrip = roundtrip && decode(encode(x, space), space) == x;
  report("encode_decode_roundtrip", roundtrip, std::to_string(all.size()) + " designs");

  const DeviceFeatures d = DeviceFeatures::default_proxy();
  const ObjectiveScale scale{modeled_latency(all.back(), space, d), modeled_energy(all.back(), space, d)};
  int found = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const TradeoffWeights lambda{0.05 * seed, 0.1};
    const Objective obj = [&](const DesignPoint& x) {
      return relaxed_objective_model(x, space, d, lambda, scale);
    };
    const auto brute = brute_force_argmin(obj, space, 1u << 20);
    SearchParams p;
    p.seed = static_cast<std::uint64_t>(seed);
    found += evolutionary_search(obj, space, p).best_value == brute.best_value ? 1 : 0;
  }
  report("search_finds_global_argmin", found >= 19, std::to_string(found) + "/20 seeds");

  int violations = 0;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 10; ++k) {
    const TradeoffWeights lambda{0.0, k == 0 ? 0.0 : 0.01 * std::pow(2.0, k)};
    const Objective obj = [&](const DesignPoint& x) {
      return relaxed_objective_model(x, space, d, lambda, scale);
    };
    const double lat = modeled_latency(brute_force_argmin(obj, space, 1u << 20).best, space, d);
    if (lat > previous) ++violations;
    previous = lat;
  }
  report("scalarization_monotone", violations == 0, std::to_string(violations) + " violations");

  const auto rows = cost_accounting(5000, 30.0, 1);
  report("cost_arithmetic", rows.front().hours_per_device >= 40.0,
         format_double(rows.front().hours_per_device) + " h");

  return failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-aware DNN design optimization over simulated edge fleets"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub, bool approach, bool skip) {
    sub->add_option("--config", flags.config, "Scenario JSON file");
    sub->add_option("--seed", seed_value, "Override the scenario seed")
        ->each([&](const std::string&) { flags.seed = seed_value; });
    sub->add_option("--out", flags.out, "Output directory");
    if (approach) sub->add_option("--approach", flags.approach, "proxy or amortized");
    if (skip) sub->add_flag("--skip-training", flags.skip_training, "Reuse models saved under --out");
  };

  auto* gen = app.add_subcommand("gen-fleet", "Generate the device fleet");
  add_common(gen, false, false);
  auto* train = app.add_subcommand("train-predictors", "Train predictors and save the models");
  add_common(train, true, false);
  auto* opt = app.add_subcommand("optimize", "Optimize designs for every holdout device");
  add_common(opt, true, true);
  auto* rep = app.add_subcommand("report", "Summarize a finished run");
  rep->add_option("--out", flags.out, "Run output directory");
  auto* cost = app.add_subcommand("cost-table", "Per-device measurement cost comparison");
  int samples = 5000;
  double seconds = 30.0;
  int devices = 1;
  add_common(cost, false, false);
  cost->add_option("--samples", samples, "Measurements per device for the baseline");
  cost->add_option("--seconds", seconds, "Seconds per measurement");
  cost->add_option("--devices", devices, "Number of devices");
  auto* self = app.add_subcommand("selftest", "Reduced-space oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_fleet(flags);
    if (*train) return cmd_train(flags);
    if (*opt) return cmd_optimize(flags);
    if (*rep) return cmd_report(flags);
    if (*cost) return cmd_cost_table(flags, samples, seconds, devices);
    if (*self) return cmd_selftest();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
