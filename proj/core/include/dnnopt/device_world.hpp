#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "dnnopt/design_space.hpp"

namespace dnnopt {

// Coefficients of the analytic cost model that stands in for a physical
// device. Latency of a design is
//   sum_i (work_i / (throughput * quant_speedup[bits]))^gamma
//         + mem_i / bandwidth + overhead * depth_i
// with work_i = depth*width^2*kernel^2 * 16*2^-i and mem_i = depth*width.
struct DeviceFeatures {
  std::string id;
  double throughput = 100.0;    // work-units / ms
  double bandwidth = 50.0;      // mem-units / ms
  double overhead = 0.05;       // ms / layer
  std::map<int, double> quant_speedup{{4, 2.5}, {8, 2.0}, {16, 1.4}, {32, 1.0}};
  double power_dynamic = 0.5;   // mJ / work-unit
  double power_static = 2.0;    // mJ / ms
  double gamma = 1.0;

  static DeviceFeatures default_proxy();

  // Throws kInvalidArgument on non-positive coefficients, gamma outside
  // [0.8, 1.25], or a bit-width of `space` without a speedup entry.
  void validate(const DesignSpace& space) const;

  friend bool operator==(const DeviceFeatures&, const DeviceFeatures&) = default;
};

// Natural log of every coefficient, speedups in the space's bit order. This is
// the device representation fed to device-aware networks.
std::vector<double> log_features(const DeviceFeatures& d, const DesignSpace& space);

struct AccuracyModel {
  double a_max = 0.95;
  double a1 = 0.35;
  double beta = 0.35;
  std::map<int, double> quant_penalty{{4, 0.04}, {8, 0.01}, {16, 0.002}, {32, 0.0}};
  double noise_amplitude = 0.002;
};

double stage_work(const Stage& s, int stage_index);
double stage_mem(const Stage& s);
double capacity(const DesignPoint& x, const DesignSpace& space);
// Deterministic value in [-1, 1] keyed on the design's index list.
double design_hash_unit(const DesignPoint& x);

// Uncharged evaluations of the cost model. Test oracles and report
// post-processing use these; optimizers must go through the charged calls.
double modeled_latency(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d);
double modeled_energy(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d);
double modeled_accuracy(const DesignPoint& x, const DesignSpace& space,
                        const AccuracyModel& model = {});

enum class Metric { kLatency, kEnergy };
const char* to_string(Metric m);

// Append-only audit of oracle queries. Safe to share across threads.
class MeasurementLedger {
 public:
  struct Entry {
    std::string device_id;
    Metric metric;
    std::uint64_t count;
  };

  MeasurementLedger() = default;
  MeasurementLedger(const MeasurementLedger& other);
  MeasurementLedger& operator=(const MeasurementLedger& other);

  void record(const std::string& device_id, Metric metric, std::uint64_t n = 1);
  void record_accuracy(std::uint64_t n = 1);

  std::uint64_t count(const std::string& device_id, Metric metric) const;
  std::uint64_t accuracy_count() const;
  std::uint64_t device_total(const std::string& device_id) const;
  std::uint64_t total() const;

  // Sorted by (device id, metric).
  std::vector<Entry> report() const;

  bool operator==(const MeasurementLedger& other) const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, Metric>, std::uint64_t> counts_;
  std::uint64_t accuracy_count_ = 0;
};

double true_latency(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d,
                    MeasurementLedger& ledger);
double true_energy(const DesignPoint& x, const DesignSpace& space, const DeviceFeatures& d,
                   MeasurementLedger& ledger);
double true_accuracy(const DesignPoint& x, const DesignSpace& space, MeasurementLedger& ledger,
                     const AccuracyModel& model = {});

struct LogRange {
  double lo;
  double hi;
};

struct FleetConfig {
  DeviceFeatures proxy = DeviceFeatures::default_proxy();
  int training_real = 16;
  int synthetic = 32;
  int holdout_monotone = 8;
  int holdout_adversarial = 4;

  LogRange monotone_scale{0.5, 2.0};
  double monotone_gamma_jitter = 0.05;
  double adversarial_overhead_factor = 10.0;

  // Heterogeneous (training / synthetic) devices, sampled log-uniformly.
  LogRange throughput{30.0, 300.0};
  LogRange bandwidth{15.0, 150.0};
  LogRange overhead{0.01, 0.2};
  LogRange quant_exponent{0.3, 0.7};  // speedup(b) = (max_bits / b)^exponent
  double quant_jitter = 0.1;          // multiplicative, per bit-width
  LogRange power_dynamic{0.2, 1.0};
  LogRange power_static{1.0, 4.0};
  double gamma_lo = 0.9;
  double gamma_hi = 1.1;
};

struct Fleet {
  DeviceFeatures proxy;
  std::vector<DeviceFeatures> training_real;
  std::vector<DeviceFeatures> synthetic;
  std::vector<DeviceFeatures> holdout_monotone;
  std::vector<DeviceFeatures> holdout_adversarial;

  // training_real followed by synthetic.
  std::vector<DeviceFeatures> training_all() const;
  const DeviceFeatures* find(const std::string& id) const;
};

DeviceFeatures sample_heterogeneous(const FleetConfig& config, const DesignSpace& space,
                                    std::string id, Rng& rng);
DeviceFeatures sample_monotone(const FleetConfig& config, std::string id, Rng& rng);
DeviceFeatures sample_adversarial(const FleetConfig& config, std::string id, Rng& rng);

Fleet generate_fleet(const FleetConfig& config, const DesignSpace& space, Rng& rng);

}  // namespace dnnopt
