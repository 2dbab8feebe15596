#include "dnnopt/device_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dnnopt {

DeviceFeatures DeviceFeatures::default_proxy() {
  DeviceFeatures d;
  d.id = "proxy";
  return d;
}

void DeviceFeatures::validate(const DesignSpace& space) const {
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "device '" + id + "': " + name + " must be positive");
    }
  };
  positive(throughput, "throughput");
  positive(bandwidth, "bandwidth");
  positive(overhead, "overhead");
  positive(power_dynamic, "power_dynamic");
  positive(power_static, "power_static");
  if (!(gamma >= 0.8 && gamma <= 1.25)) {
    throw Error(ErrorCode::kInvalidArgument, "device '" + id + "': gamma outside [0.8, 1.25]");
  }
  for (int b : space.bits_choices()) {
    auto it = quant_speedup.find(b);
    if (it == quant_speedup.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "device '" + id + "': no quant_speedup for " + std::to_string(b) + " bits");
    }
    positive(it->second, "quant_speedup");
  }
}

std::vector<double> log_features(const DeviceFeatures& d, const DesignSpace& space) {
  std::vector<double> f{std::log(d.throughput), std::log(d.bandwidth), std::log(d.overhead)};
  for (int b : space.bits_choices()) f.push_back(std::log(d.quant_speedup.at(b)));
  f.push_back(std::log(d.power_dynamic));
  f.push_back(std::log(d.power_static));
  f.push_back(std::log(d.gamma));
  return f;
}

double stage_work(const Stage& s, int stage_index) {
  const double base_work = 16.0 * std::ldexp(1.0, -stage_index);
  return s.depth * s.width * s.width * s.kernel * s.kernel * base_work;
}

double stage_mem(const Stage& s) { return s.depth * s.width * 1.0; }

double capacity(const DesignPoint& x, const DesignSpace& space) {
  double c = 0.0;
  for (int i = 0; i < space.num_stages(); ++i) {
    const Stage s = space.stage(x, i);
    c += s.depth * s.width * std::log(static_cast<double>(s.kernel));
  }
  return c;
}

double design_hash_unit(const DesignPoint& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int v : x.indices()) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
  return 2.0 * unit - 1.0;
}

double modeled_latency(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d) {
  space.check(x);
  const double speed = d.throughput * d.quant_speedup.at(space.bits(x));
  double total = 0.0;
  for (int i = 0; i < space.num_stages(); ++i) {
    const Stage s = space.stage(x, i);
    total += std::pow(stage_work(s, i) / speed, d.gamma);
    total += stage_mem(s) / d.bandwidth;
    total += d.overhead * s.depth;
  }
  return total;
}

double modeled_energy(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d) {
  const double speedup = d.quant_speedup.at(space.bits(x));
  double work = 0.0;
  for (int i = 0; i < space.num_stages(); ++i) work += stage_work(space.stage(x, i), i);
  return d.power_dynamic * work / speedup + d.power_static * modeled_latency(x, space, d);
}

double modeled_accuracy(const DesignPoint& x, const DesignSpace& space, const AccuracyModel& model) {
  space.check(x);
  return model.a_max - model.a1 * std::exp(-model.beta * capacity(x, space)) -
         model.quant_penalty.at(space.bits(x)) + model.noise_amplitude * design_hash_unit(x);
}

const char* to_string(Metric m) { return m == Metric::kLatency ? "latency" : "energy"; }

MeasurementLedger::MeasurementLedger(const MeasurementLedger& other) {
  std::lock_guard lock(other.mu_);
  counts_ = other.counts_;
  accuracy_count_ = other.accuracy_count_;
}

MeasurementLedger& MeasurementLedger::operator=(const MeasurementLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  counts_ = other.counts_;
  accuracy_count_ = other.accuracy_count_;
  return *this;
}

void MeasurementLedger::record(const std::string& device_id, Metric metric, std::uint64_t n) {
  std::lock_guard lock(mu_);
  counts_[{device_id, metric}] += n;
}

void MeasurementLedger::record_accuracy(std::uint64_t n) {
  std::lock_guard lock(mu_);
  accuracy_count_ += n;
}

std::uint64_t MeasurementLedger::count(const std::string& device_id, Metric metric) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find({device_id, metric});
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t MeasurementLedger::accuracy_count() const {
  std::lock_guard lock(mu_);
  return accuracy_count_;
}

std::uint64_t MeasurementLedger::device_total(const std::string& device_id) const {
  std::lock_guard lock(mu_);
  std::uint64_t n = 0;
  for (const auto& [key, c] : counts_) {
    if (key.first == device_id) n += c;
  }
  return n;
}

std::uint64_t MeasurementLedger::total() const {
  std::lock_guard lock(mu_);
  std::uint64_t n = accuracy_count_;
  for (const auto& [key, c] : counts_) n += c;
  return n;
}

std::vector<MeasurementLedger::Entry> MeasurementLedger::report() const {
  std::lock_guard lock(mu_);
  std::vector<Entry> out;
  out.reserve(counts_.size());
  for (const auto& [key, c] : counts_) out.push_back({key.first, key.second, c});
  return out;
}

bool MeasurementLedger::operator==(const MeasurementLedger& other) const {
  if (this == &other) return true;
  std::scoped_lock lock(mu_, other.mu_);
  return counts_ == other.counts_ && accuracy_count_ == other.accuracy_count_;
}

double true_latency(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d,
                    MeasurementLedger& ledger) {
  const double v = modeled_latency(x, space, d);
  ledger.record(d.id, Metric::kLatency);
  return v;
}

double true_energy(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d,
                   MeasurementLedger& ledger) {
  const double v = modeled_energy(x, space, d);
  ledger.record(d.id, Metric::kEnergy);
  return v;
}

double true_accuracy(const DesignPoint& x, const DesignSpace& space, MeasurementLedger& ledger,
                     const AccuracyModel& model) {
  const double v = modeled_accuracy(x, space, model);
  ledger.record_accuracy();
  return v;
}

std::vector<DeviceFeatures> Fleet::training_all() const {
  std::vector<DeviceFeatures> out = training_real;
  out.insert(out.end(), synthetic.begin(), synthetic.end());
  return out;
}

const DeviceFeatures* Fleet::find(const std::string& id) const {
  if (proxy.id == id) return &proxy;
  for (const auto* list : {&training_real, &synthetic, &holdout_monotone, &holdout_adversarial}) {
    for (const auto& d : *list) {
      if (d.id == id) return &d;
    }
  }
  return nullptr;
}

namespace {

double log_uniform(const LogRange& r, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(r.lo), std::log(r.hi));
  return std::exp(u(rng));
}

std::string numbered(const std::string& prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return prefix + buf;
}

}  // namespace

DeviceFeatures sample_heterogeneous(const FleetConfig& config, const DesignSpace& space,
                                    std::string id, Rng& rng) {
  DeviceFeatures d;
  d.id = std::move(id);
  d.throughput = log_uniform(config.throughput, rng);
  d.bandwidth = log_uniform(config.bandwidth, rng);
  d.overhead = log_uniform(config.overhead, rng);
  const double exponent = log_uniform(config.quant_exponent, rng);
  const double max_bits = space.bits_choices().back();
  std::uniform_real_distribution<double> jitter(-config.quant_jitter, config.quant_jitter);
  d.quant_speedup.clear();
  for (int b : space.bits_choices()) {
    const double base = std::pow(max_bits / b, exponent);
    d.quant_speedup[b] = b == space.bits_choices().back() ? 1.0 : base * std::exp(jitter(rng));
  }
  d.power_dynamic = log_uniform(config.power_dynamic, rng);
  d.power_static = log_uniform(config.power_static, rng);
  d.gamma = std::uniform_real_distribution<double>(config.gamma_lo, config.gamma_hi)(rng);
  return d;
}

DeviceFeatures sample_monotone(const FleetConfig& config, std::string id, Rng& rng) {
  DeviceFeatures d = config.proxy;
  d.id = std::move(id);
  const double scale = log_uniform(config.monotone_scale, rng);
  d.throughput *= scale;
  d.bandwidth *= scale;
  d.overhead /= scale;
  const double j = config.monotone_gamma_jitter;
  d.gamma = std::clamp(d.gamma + std::uniform_real_distribution<double>(-j, j)(rng), 0.8, 1.25);
  return d;
}

DeviceFeatures sample_adversarial(const FleetConfig& config, std::string id, Rng& rng) {
  DeviceFeatures d = sample_monotone(config, std::move(id), rng);
  // Low bit-widths become slower than full precision.
  for (auto& [bits, speedup] : d.quant_speedup) speedup = 1.0 / config.proxy.quant_speedup.at(bits);
  d.overhead *= config.adversarial_overhead_factor;
  return d;
}

Fleet generate_fleet(const FleetConfig& config, const DesignSpace& space, Rng& rng) {
  if (config.training_real < 0 || config.synthetic < 0 || config.holdout_monotone < 0 ||
      config.holdout_adversarial < 0) {
    throw Error(ErrorCode::kInvalidArgument, "fleet counts must be non-negative");
  }
  config.proxy.validate(space);
  Fleet fleet;
  fleet.proxy = config.proxy;
  for (int i = 0; i < config.training_real; ++i) {
    fleet.training_real.push_back(sample_heterogeneous(config, space, numbered("train-", i), rng));
  }
  for (int i = 0; i < config.synthetic; ++i) {
    fleet.synthetic.push_back(sample_heterogeneous(config, space, numbered("synth-", i), rng));
  }
  for (int i = 0; i < config.holdout_monotone; ++i) {
    fleet.holdout_monotone.push_back(sample_monotone(config, numbered("mono-", i), rng));
  }
  for (int i = 0; i < config.holdout_adversarial; ++i) {
    fleet.holdout_adversarial.push_back(sample_adversarial(config, numbered("adv-", i), rng));
  }
  return fleet;
}

}  // namespace dnnopt
