#include "dnnopt/scenario.hpp"

#include <set>

#include <json.hpp>

#include "dnnopt/error.hpp"
#include "dnnopt/model_io.hpp"

namespace dnnopt {

using nlohmann::json;

const char* to_string(Approach a) {
  return a == Approach::kProxyReuse ? "proxy_reuse" : "learn_to_optimize";
}

Approach approach_from_string(std::string_view name) {
  if (name == "proxy_reuse" || name == "proxy") return Approach::kProxyReuse;
  if (name == "learn_to_optimize" || name == "amortized") return Approach::kLearnToOptimize;
  throw Error(ErrorCode::kConfig, "unknown approach '" + std::string(name) + "'");
}

const char* to_string(AmortizedMethod m) {
  return m == AmortizedMethod::kMethod1 ? "method1" : "method2";
}

Scenario::Scenario() {
  device_aware.training.epochs = 250;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::kConfig, path + ": " + message);
}

// Read cursor over one JSON object that remembers which keys were consumed.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  const std::string& path() const noexcept { return path_; }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  Section child(const std::string& key) { return Section(find(key), key_path(key)); }

  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        fail(key_path(key), "integer out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key_path(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) fail(key_path(key), "expected a number or null");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename T>
  void read(const std::string& key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key_path(key), "expected an array");
      std::vector<T> tmp;
      for (const auto& e : *v) {
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) fail(key_path(key), "expected an array of integers");
        } else {
          if (!e.is_number()) fail(key_path(key), "expected an array of numbers");
        }
        tmp.push_back(e.get<T>());
      }
      out = std::move(tmp);
    }
  }

  // Rejects keys that were never read, except '_'-prefixed comments.
  void finish() const {
    if (!j_) return;
    for (const auto& [key, value] : j_->items()) {
      if (!key.empty() && key[0] == '_') continue;
      if (!used_.count(key)) fail(key_path(key), "unknown key");
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) fail(path, message);
}

OptimizerKind optimizer_kind(const std::string& name, const std::string& path) {
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  fail(path, "expected \"momentum\" or \"adam\"");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "momentum"; }

void read_training(Section& s, TrainingSettings& t) {
  s.read("epochs", t.epochs);
  require(t.epochs >= 0, s.key_path("epochs"), "must be non-negative");
  s.read("batch_size", t.batch_size);
  require(t.batch_size >= 1, s.key_path("batch_size"), "must be >= 1");
  s.read("learning_rate", t.learning_rate);
  require(t.learning_rate > 0.0, s.key_path("learning_rate"), "must be positive");
  s.read("momentum", t.momentum);
  require(t.momentum >= 0.0 && t.momentum < 1.0, s.key_path("momentum"), "must be in [0, 1)");
  std::string kind = to_string(t.optimizer);
  s.read("optimizer", kind);
  t.optimizer = optimizer_kind(kind, s.key_path("optimizer"));
}

void read_hidden(Section& s, std::vector<int>& hidden) {
  s.read("hidden_layers", hidden);
  for (int h : hidden) require(h >= 1, s.key_path("hidden_layers"), "layer widths must be >= 1");
}

void read_predictor_settings(Section& s, PredictorSettings& p) {
  read_hidden(s, p.hidden_layers);
  read_training(s, p.training);
  std::string transform = to_string(p.cost_transform);
  s.read("cost_transform", transform);
  try {
    p.cost_transform = label_transform_from_string(transform);
  } catch (const Error&) {
    fail(s.key_path("cost_transform"), "expected \"log\" or \"identity\"");
  }
}

void read_space(Section& s, DesignSpace& space) {
  if (s.has("preset")) {
    std::string preset;
    s.read("preset", preset);
    if (preset == "standard") {
      space = DesignSpace::standard();
    } else if (preset == "reduced") {
      space = DesignSpace::reduced();
    } else {
      fail(s.key_path("preset"), "expected \"standard\" or \"reduced\"");
    }
  }
  int stages = space.num_stages();
  auto depth = space.depth_choices();
  auto width = space.width_choices();
  auto kernel = space.kernel_choices();
  auto bits = space.bits_choices();
  s.read("num_stages", stages);
  s.read("depth", depth);
  s.read("width", width);
  s.read("kernel", kernel);
  s.read("bits", bits);
  try {
    space = DesignSpace(stages, depth, width, kernel, bits);
  } catch (const Error& e) {
    fail(s.path(), e.what());
  }
}

void read_bound(Section& s, const std::string& abs_key, const std::string& q_key, BoundSpec& b) {
  s.read(abs_key, b.absolute);
  s.read(q_key, b.quantile);
  if (b.absolute) require(*b.absolute > 0.0, s.key_path(abs_key), "must be positive");
  if (b.quantile) {
    require(*b.quantile > 0.0 && *b.quantile <= 1.0, s.key_path(q_key), "must be in (0, 1]");
  }
  require(!(b.absolute && b.quantile), s.key_path(q_key),
          "cannot be combined with " + abs_key);
}

json training_json(const TrainingSettings& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"optimizer", to_string(t.optimizer)}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Scenario parse_scenario(std::string_view json_text, std::optional<std::uint64_t> seed_override) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("<root>: malformed JSON: ") + e.what());
  }
  Scenario s;
  Section root(&doc, "");

  std::optional<std::uint64_t> seed;
  if (root.has("seed")) {
    std::uint64_t v = 0;
    root.read("seed", v);
    seed = v;
  }
  if (seed_override) seed = seed_override;
  if (!seed) fail("seed", "required (in the config or via --seed)");
  s.seed = *seed;

  root.read("output_dir", s.output_dir);
  if (root.has("approach")) {
    std::string a;
    root.read("approach", a);
    try {
      s.approach = approach_from_string(a);
    } catch (const Error&) {
      fail("approach", "expected \"proxy_reuse\" or \"learn_to_optimize\"");
    }
  }

  {
    Section sec = root.child("space");
    read_space(sec, s.space);
    sec.finish();
  }
  {
    Section sec = root.child("fleet");
    sec.read("training_real", s.fleet.training_real);
    sec.read("synthetic", s.fleet.synthetic);
    sec.read("holdout_monotone", s.fleet.holdout_monotone);
    sec.read("holdout_adversarial", s.fleet.holdout_adversarial);
    require(s.fleet.training_real >= 0, sec.key_path("training_real"), "must be non-negative");
    require(s.fleet.synthetic >= 0, sec.key_path("synthetic"), "must be non-negative");
    require(s.fleet.holdout_monotone >= 0, sec.key_path("holdout_monotone"), "must be non-negative");
    require(s.fleet.holdout_adversarial >= 0, sec.key_path("holdout_adversarial"),
            "must be non-negative");
    std::vector<double> scale{s.fleet.monotone_scale.lo, s.fleet.monotone_scale.hi};
    sec.read("monotone_scale", scale);
    require(scale.size() == 2 && scale[0] > 0.0 && scale[0] <= scale[1],
            sec.key_path("monotone_scale"), "expected [lo, hi] with 0 < lo <= hi");
    s.fleet.monotone_scale = {scale[0], scale[1]};
    sec.read("adversarial_overhead_factor", s.fleet.adversarial_overhead_factor);
    require(s.fleet.adversarial_overhead_factor > 0.0, sec.key_path("adversarial_overhead_factor"),
            "must be positive");
    sec.finish();
  }
  {
    Section sec = root.child("predictors");
    read_predictor_settings(sec, s.predictors);
    sec.read("samples_per_device", s.samples_per_device);
    require(s.samples_per_device >= 2, sec.key_path("samples_per_device"), "must be >= 2");
    sec.finish();
  }
  {
    Section sec = root.child("device_aware");
    read_predictor_settings(sec, s.device_aware);
    sec.read("designs", s.device_aware_designs);
    require(s.device_aware_designs >= 2, sec.key_path("designs"), "must be >= 2");
    sec.read("explore_rounds", s.explore_rounds);
    require(s.explore_rounds >= 0, sec.key_path("explore_rounds"), "must be non-negative");
    sec.read("explore_size", s.explore_size);
    require(s.explore_size >= 0, sec.key_path("explore_size"), "must be non-negative");
    sec.finish();
  }
  {
    Section sec = root.child("search");
    sec.read("population", s.search.population);
    sec.read("generations", s.search.generations);
    sec.read("mutation_rate", s.search.mutation_rate);
    sec.read("elite_fraction", s.search.elite_fraction);
    sec.read("seed", s.search.seed);
    try {
      s.search.validate();
    } catch (const Error& e) {
      fail("search", e.what());
    }
    sec.finish();
  }
  {
    Section sec = root.child("bisection");
    sec.read("granularity", s.bisection.granularity);
    sec.read("max_iterate", s.bisection.max_iterate);
    sec.read("delta_ms", s.bisection.delta);
    try {
      s.bisection.validate();
    } catch (const Error& e) {
      fail("bisection", e.what());
    }
    sec.finish();
  }
  {
    Section sec = root.child("grid2d");
    sec.read("levels", s.grid2d.levels);
    sec.read("coarse_divisions", s.grid2d.coarse_divisions);
    sec.read("refine_factor", s.grid2d.refine_factor);
    sec.read("refine_radius", s.grid2d.refine_radius);
    sec.read("measurements_per_level", s.grid2d.measurements_per_level);
    require(s.grid2d.levels >= 1, sec.key_path("levels"), "must be >= 1");
    require(s.grid2d.coarse_divisions >= 1, sec.key_path("coarse_divisions"), "must be >= 1");
    require(s.grid2d.refine_factor >= 1, sec.key_path("refine_factor"), "must be >= 1");
    require(s.grid2d.refine_radius >= 0, sec.key_path("refine_radius"), "must be non-negative");
    require(s.grid2d.measurements_per_level >= 1, sec.key_path("measurements_per_level"),
            "must be >= 1");
    sec.finish();
  }
  {
    Section sec = root.child("constraints");
    read_bound(sec, "latency_ms", "latency_quantile", s.constraints.latency);
    read_bound(sec, "energy_mj", "energy_quantile", s.constraints.energy);
    sec.read("reference_designs", s.constraints.reference_designs);
    require(s.constraints.reference_designs >= 1, sec.key_path("reference_designs"),
            "must be >= 1");
    sec.finish();
  }
  {
    Section sec = root.child("monotonicity");
    sec.read("check", s.check_monotonicity);
    sec.read("probe_count", s.probe_count);
    require(s.probe_count >= 10, sec.key_path("probe_count"), "must be >= 10");
    sec.read("rho_threshold", s.rho_threshold);
    require(s.rho_threshold >= -1.0 && s.rho_threshold <= 1.0, sec.key_path("rho_threshold"),
            "must be in [-1, 1]");
    sec.finish();
  }
  {
    Section sec = root.child("lambda_grid");
    sec.read("count_per_axis", s.lambda_count);
    require(s.lambda_count >= 1, sec.key_path("count_per_axis"), "must be >= 1");
    sec.read("max", s.lambda_max);
    require(s.lambda_max > 0.0, sec.key_path("max"), "must be positive");
    sec.read("sweep_count_per_axis", s.sweep_count);
    require(s.sweep_count >= 1, sec.key_path("sweep_count_per_axis"), "must be >= 1");
    sec.finish();
  }
  {
    Section sec = root.child("optimizer");
    std::string method = to_string(s.method);
    sec.read("method", method);
    if (method == "method1") {
      s.method = AmortizedMethod::kMethod1;
    } else if (method == "method2") {
      s.method = AmortizedMethod::kMethod2;
    } else {
      fail(sec.key_path("method"), "expected \"method1\" or \"method2\"");
    }
    read_hidden(sec, s.optimizer.hidden_layers);
    read_training(sec, s.optimizer.training);
    sec.read("mu", s.optimizer.mu);
    require(s.optimizer.mu >= 0.0, sec.key_path("mu"), "must be non-negative");
    sec.read("fine_tune_radius", s.fine_tune_radius);
    require(s.fine_tune_radius >= 0, sec.key_path("fine_tune_radius"), "must be non-negative");
    sec.read("fine_tune_budget", s.fine_tune_budget);
    require(s.fine_tune_budget >= 1, sec.key_path("fine_tune_budget"), "must be >= 1");
    sec.finish();
  }
  {
    Section sec = root.child("cost");
    sec.read("samples_per_device", s.cost_samples_per_device);
    require(s.cost_samples_per_device > 0, sec.key_path("samples_per_device"), "must be positive");
    sec.read("seconds_per_measurement", s.cost_seconds_per_measurement);
    require(s.cost_seconds_per_measurement > 0.0, sec.key_path("seconds_per_measurement"),
            "must be positive");
    sec.read("device_count", s.cost_device_count);
    require(s.cost_device_count >= 0, sec.key_path("device_count"), "must be non-negative");
    sec.finish();
  }
  root.finish();

  try {
    s.fleet.proxy.validate(s.space);
  } catch (const Error& e) {
    fail("space.bits", std::string("proxy device: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seed_override) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("<file>: ") + e.what());
  }
  return parse_scenario(text, seed_override);
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["seed"] = s.seed;
  j["output_dir"] = s.output_dir;
  j["approach"] = to_string(s.approach);
  j["space"] = {{"num_stages", s.space.num_stages()},
                {"depth", s.space.depth_choices()},
                {"width", s.space.width_choices()},
                {"kernel", s.space.kernel_choices()},
                {"bits", s.space.bits_choices()}};
  j["fleet"] = {{"training_real", s.fleet.training_real},
                {"synthetic", s.fleet.synthetic},
                {"holdout_monotone", s.fleet.holdout_monotone},
                {"holdout_adversarial", s.fleet.holdout_adversarial},
                {"monotone_scale", {s.fleet.monotone_scale.lo, s.fleet.monotone_scale.hi}},
                {"adversarial_overhead_factor", s.fleet.adversarial_overhead_factor}};
  auto predictor_json = [](const PredictorSettings& p) {
    json o = training_json(p.training);
    o["hidden_layers"] = p.hidden_layers;
    o["cost_transform"] = to_string(p.cost_transform);
    return o;
  };
  j["predictors"] = predictor_json(s.predictors);
  j["predictors"]["samples_per_device"] = s.samples_per_device;
  j["device_aware"] = predictor_json(s.device_aware);
  j["device_aware"]["designs"] = s.device_aware_designs;
  j["device_aware"]["explore_rounds"] = s.explore_rounds;
  j["device_aware"]["explore_size"] = s.explore_size;
  j["search"] = {{"population", s.search.population},
                 {"generations", s.search.generations},
                 {"mutation_rate", s.search.mutation_rate},
                 {"elite_fraction", s.search.elite_fraction},
                 {"seed", s.search.seed}};
  j["bisection"] = {{"granularity", s.bisection.granularity},
                    {"max_iterate", s.bisection.max_iterate},
                    {"delta_ms", s.bisection.delta}};
  j["grid2d"] = {{"levels", s.grid2d.levels},
                 {"coarse_divisions", s.grid2d.coarse_divisions},
                 {"refine_factor", s.grid2d.refine_factor},
                 {"refine_radius", s.grid2d.refine_radius},
                 {"measurements_per_level", s.grid2d.measurements_per_level}};
  j["constraints"] = {{"latency_ms", optional_json(s.constraints.latency.absolute)},
                      {"latency_quantile", optional_json(s.constraints.latency.quantile)},
                      {"energy_mj", optional_json(s.constraints.energy.absolute)},
                      {"energy_quantile", optional_json(s.constraints.energy.quantile)},
                      {"reference_designs", s.constraints.reference_designs}};
  j["monotonicity"] = {{"check", s.check_monotonicity},
                       {"probe_count", s.probe_count},
                       {"rho_threshold", s.rho_threshold}};
  j["lambda_grid"] = {{"count_per_axis", s.lambda_count},
                      {"max", s.lambda_max},
                      {"sweep_count_per_axis", s.sweep_count}};
  j["optimizer"] = training_json(s.optimizer.training);
  j["optimizer"]["method"] = to_string(s.method);
  j["optimizer"]["hidden_layers"] = s.optimizer.hidden_layers;
  j["optimizer"]["mu"] = s.optimizer.mu;
  j["optimizer"]["fine_tune_radius"] = s.fine_tune_radius;
  j["optimizer"]["fine_tune_budget"] = s.fine_tune_budget;
  j["cost"] = {{"samples_per_device", s.cost_samples_per_device},
               {"seconds_per_measurement", s.cost_seconds_per_measurement},
               {"device_count", s.cost_device_count}};
  return j.dump(2);
}

}  // namespace dnnopt
