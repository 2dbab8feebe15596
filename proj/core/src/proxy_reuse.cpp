#include "dnnopt/proxy_reuse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dnnopt {

void BisectionSettings::validate() const {
  if (delta < 0.0) throw Error(ErrorCode::kInvalidArgument, "delta must be positive (or 0 for default)");
  if (!(granularity > 0.0 && granularity < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "granularity outside (0,1)");
  }
  if (max_iterate < 1) throw Error(ErrorCode::kInvalidArgument, "max_iterate must be >= 1");
}

TCache::TCache(double granularity) : granularity_(granularity) {
  if (!(granularity > 0.0 && granularity < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "granularity outside (0,1)");
  }
}

std::int64_t TCache::key(double t) const { return std::llround(t / granularity_); }

double TCache::quantize(double t) const { return static_cast<double>(key(t)) * granularity_; }

const DesignPoint* TCache::find(double t) const {
  auto it = entries_.find(key(t));
  return it == entries_.end() ? nullptr : &it->second;
}

void TCache::insert(double t, DesignPoint x) { entries_.insert_or_assign(key(t), std::move(x)); }

InnerSolver evolutionary_inner(const DesignSpace& space, const SearchParams& params) {
  return [space, params](const Objective& f) { return evolutionary_search(f, space, params); };
}

InnerSolver brute_force_inner(const DesignSpace& space, std::uint64_t limit) {
  return [space, limit](const Objective& f) { return brute_force_argmin(f, space, limit); };
}

namespace {

void check_weight(double t, const char* name) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::kInvalidArgument, std::string(name) + " outside [0,1]");
}

double predicted_accuracy(const DesignPoint& x, const DesignSpace& space, const PerformancePredictors& p) {
  return p.accuracy.predict(encode(x, space));
}

}  // namespace

double proxy_objective(std::span<const double> encoding, double t, const PerformancePredictors& p) {
  check_weight(t, "t");
  return -(1.0 - t) * p.accuracy.predict(encoding) + t * p.latency.predict(encoding) / p.scale.latency;
}

double proxy_objective_2d(std::span<const double> encoding, double t1, double t2,
                          const PerformancePredictors& p) {
  check_weight(t1, "t1");
  check_weight(t2, "t2");
  if (t1 + t2 > 1.0 + 1e-12) throw Error(ErrorCode::kInvalidArgument, "t1 + t2 exceeds 1");
  return -(1.0 - t1 - t2) * p.accuracy.predict(encoding) +
         t1 * p.latency.predict(encoding) / p.scale.latency +
         t2 * p.energy.predict(encoding) / p.scale.energy;
}

InnerSolution solve_inner(double t, TCache& cache, const DesignSpace& space,
                          const PerformancePredictors& p, const InnerSolver& inner) {
  check_weight(t, "t");
  if (const DesignPoint* hit = cache.find(t)) return {*hit, true, 0};
  const SearchResult r = inner([&](const DesignPoint& x) {
    return proxy_objective(encode(x, space), t, p);
  });
  cache.insert(t, r.best);
  return {r.best, false, r.evaluations};
}

BisectionResult bisection_optimize(const DesignSpace& space, const DeviceFeatures& target,
                                   double bound, const BisectionSettings& settings, TCache& cache,
                                   const PerformancePredictors& p, const InnerSolver& inner,
                                   MeasurementLedger& ledger) {
  if (!(bound > 0.0)) throw Error(ErrorCode::kInvalidArgument, "latency bound must be positive");
  settings.validate();
  const double delta = settings.delta_for(bound);

  struct Visit {
    double t;
    DesignPoint x;
    double latency;
  };
  std::vector<Visit> visits;
  BisectionResult result;
  double t_min = 0.0;
  double t_max = 1.0;
  bool settled = false;
  for (int i = 1; i <= settings.max_iterate; ++i) {
    const double t = cache.quantize(0.5 * (t_min + t_max));
    const DesignPoint x = solve_inner(t, cache, space, p, inner).design;
    // The current iterate x*(t) is the one measured.
    const double latency = true_latency(x, space, target, ledger);
    ++result.measurements;
    visits.push_back({t, x, latency});
    std::string verdict;
    if (latency >= bound + delta) {
      t_min = t;
      verdict = "too_slow";
    } else if (latency <= bound - delta) {
      t_max = t;
      verdict = "too_fast";
    } else {
      verdict = "within_band";
      settled = true;
    }
    result.trace.push_back({i, t, latency, bound, verdict});
    if (settled) break;
  }

  if (settled) {
    const Visit& v = visits.back();
    result.design = v.x;
    result.t = v.t;
    result.latency = v.latency;
    result.feasible = true;
    return result;
  }
  const Visit* best = nullptr;
  double best_acc = -std::numeric_limits<double>::infinity();
  for (const Visit& v : visits) {
    if (v.latency >= bound + delta) continue;
    const double acc = predicted_accuracy(v.x, space, p);
    if (acc > best_acc) {
      best_acc = acc;
      best = &v;
    }
  }
  result.feasible = best != nullptr;
  if (!best) {
    best = &*std::min_element(visits.begin(), visits.end(),
                              [](const Visit& a, const Visit& b) { return a.latency < b.latency; });
  }
  result.design = best->x;
  result.t = best->t;
  result.latency = best->latency;
  return result;
}

namespace {

struct GridPoint {
  std::int64_t i;  // t1 = i * step
  std::int64_t j;  // t2 = j * step
};

}  // namespace

Grid2dResult grid_optimize_2d(const DesignSpace& space, const DeviceFeatures& target,
                              double latency_bound, double energy_bound,
                              const Grid2dSettings& settings, const PerformancePredictors& p,
                              const InnerSolver& inner, MeasurementLedger& ledger) {
  if (!(latency_bound > 0.0) || !(energy_bound > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bounds must be positive");
  }
  if (settings.levels < 1 || settings.coarse_divisions < 1 || settings.refine_factor < 1 ||
      settings.measurements_per_level < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid grid settings");
  }

  struct Solved {
    double t1, t2;
    DesignPoint x;
    double acc;       // predicted
    double proxy_lat; // predicted on the proxy
    double proxy_en;
  };
  struct Measured {
    double latency, energy;
  };
  std::map<std::pair<double, double>, DesignPoint> inner_cache;
  std::map<DesignPoint, Measured> measured;

  Grid2dResult result;
  bool have_feasible = false;
  double best_acc = -std::numeric_limits<double>::infinity();
  double best_violation = std::numeric_limits<double>::infinity();
  double ratio_lat = 1.0;
  double ratio_en = 1.0;

  // Grid resolution is in integer units of the finest step so keys are exact.
  std::int64_t finest = settings.coarse_divisions;
  for (int l = 1; l < settings.levels; ++l) finest *= settings.refine_factor;
  std::int64_t step = finest / settings.coarse_divisions;
  std::int64_t center_i = 0;
  std::int64_t center_j = 0;

  const ConstraintSpec constraints{latency_bound, energy_bound};
  for (int level = 0; level < settings.levels; ++level) {
    std::vector<GridPoint> points;
    if (level == 0) {
      for (std::int64_t i = 0; i <= finest; i += step) {
        for (std::int64_t j = 0; i + j <= finest; j += step) points.push_back({i, j});
      }
    } else {
      step = std::max<std::int64_t>(1, step / settings.refine_factor);
      const std::int64_t r = settings.refine_radius;
      for (std::int64_t di = -r; di <= r; ++di) {
        for (std::int64_t dj = -r; dj <= r; ++dj) {
          const std::int64_t i = center_i + di * step;
          const std::int64_t j = center_j + dj * step;
          if (i >= 0 && j >= 0 && i + j <= finest) points.push_back({i, j});
        }
      }
    }

    std::vector<Solved> solved;
    for (const GridPoint& g : points) {
      const double t1 = static_cast<double>(g.i) / static_cast<double>(finest);
      const double t2 = static_cast<double>(g.j) / static_cast<double>(finest);
      auto it = inner_cache.find({t1, t2});
      if (it == inner_cache.end()) {
        const SearchResult r = inner([&](const DesignPoint& x) {
          return proxy_objective_2d(encode(x, space), t1, t2, p);
        });
        it = inner_cache.emplace(std::make_pair(t1, t2), r.best).first;
      }
      const Encoding enc = encode(it->second, space);
      solved.push_back({t1, t2, it->second, p.accuracy.predict(enc), p.latency.predict(enc),
                        p.energy.predict(enc)});
    }
    // Highest predicted accuracy first; ties by design then weights.
    std::sort(solved.begin(), solved.end(), [](const Solved& a, const Solved& b) {
      if (a.acc != b.acc) return a.acc > b.acc;
      if (a.x != b.x) return a.x < b.x;
      return std::tie(a.t1, a.t2) < std::tie(b.t1, b.t2);
    });

    const Solved* incumbent = nullptr;
    for (int m = 0; m < settings.measurements_per_level; ++m) {
      const Solved* pick = nullptr;
      double pick_violation = std::numeric_limits<double>::infinity();
      for (const Solved& s : solved) {
        if (measured.count(s.x)) continue;
        if (have_feasible && s.acc <= best_acc) break;
        const double v = constraints.violation(ratio_lat * s.proxy_lat, ratio_en * s.proxy_en);
        if (v == 0.0) {
          pick = &s;
          break;
        }
        if (!have_feasible && v < pick_violation) {
          pick_violation = v;
          pick = &s;
        }
      }
      if (!pick) break;
      const Measured meas{true_latency(pick->x, space, target, ledger),
                          true_energy(pick->x, space, target, ledger)};
      measured.emplace(pick->x, meas);
      ++result.measurements;
      ratio_lat = meas.latency / pick->proxy_lat;
      ratio_en = meas.energy / pick->proxy_en;
      const bool feasible = constraints.satisfied(meas.latency, meas.energy);
      result.trace.push_back({level, pick->t1, pick->t2, meas.latency, meas.energy, feasible});
      const double violation = constraints.violation(meas.latency, meas.energy);
      const bool improves = feasible ? (!have_feasible || pick->acc > best_acc)
                                     : (!have_feasible && violation < best_violation);
      if (improves) {
        result.design = pick->x;
        result.t1 = pick->t1;
        result.t2 = pick->t2;
        result.latency = meas.latency;
        result.energy = meas.energy;
        result.feasible = feasible;
        if (feasible) {
          have_feasible = true;
          best_acc = pick->acc;
        } else {
          best_violation = violation;
        }
        incumbent = pick;
      }
    }
    if (incumbent) {
      center_i = std::llround(incumbent->t1 * static_cast<double>(finest));
      center_j = std::llround(incumbent->t2 * static_cast<double>(finest));
    }
  }
  if (result.measurements == 0) throw Error(ErrorCode::kInvalidArgument, "grid produced no candidates");
  return result;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "spearman: length mismatch");
  if (a.size() < 3) throw Error(ErrorCode::kInvalidArgument, "spearman: need at least 3 points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw Error(ErrorCode::kUndefinedCorrelation, "spearman: constant input");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

MonotonicityCheck check_monotonicity(const MlpRegressor& proxy_latency, const DesignSpace& space,
                                     std::span<const DesignPoint> probes,
                                     std::span<const double> target_latency, double threshold) {
  if (probes.size() != target_latency.size()) {
    throw Error(ErrorCode::kInvalidArgument, "probe and latency counts differ");
  }
  std::vector<double> predicted;
  predicted.reserve(probes.size());
  for (const auto& x : probes) predicted.push_back(proxy_latency.predict(encode(x, space)));
  const double rho = spearman(predicted, target_latency);
  return {rho, rho >= threshold};
}

namespace {

std::vector<DesignPoint> draw_probes(const DesignSpace& space, int probe_count, Rng& rng) {
  std::vector<DesignPoint> probes;
  for (int i = 0; i < probe_count; ++i) probes.push_back(sample_uniform(space, rng));
  return probes;
}

}  // namespace

MonotonicityCheck check_monotonicity(const MlpRegressor& proxy_latency, const DesignSpace& space,
                                     const DeviceFeatures& target, int probe_count,
                                     double threshold, MeasurementLedger& ledger, Rng& rng) {
  if (probe_count < 10) throw Error(ErrorCode::kInvalidArgument, "probe_count must be >= 10");
  const auto probes = draw_probes(space, probe_count, rng);
  std::vector<double> measured;
  for (const auto& x : probes) measured.push_back(true_latency(x, space, target, ledger));
  return check_monotonicity(proxy_latency, space, probes, measured, threshold);
}

MatchOutcome match_proxy(const ProxyPool& pool, const DesignSpace& space,
                         const DeviceFeatures& target, double threshold, int probe_count,
                         MeasurementLedger& ledger, Rng& rng) {
  if (probe_count < 10) throw Error(ErrorCode::kInvalidArgument, "probe_count must be >= 10");
  MatchOutcome out;
  if (pool.entries.empty()) return out;

  const auto target_features = log_features(target, space);
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t k = 0; k < pool.entries.size(); ++k) {
    const auto f = log_features(pool.entries[k].device, space);
    double d2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) d2 += (f[i] - target_features[i]) * (f[i] - target_features[i]);
    order.emplace_back(std::sqrt(d2), k);
  }
  std::sort(order.begin(), order.end());

  out.probes = draw_probes(space, probe_count, rng);
  for (const auto& x : out.probes) out.probe_latency.push_back(true_latency(x, space, target, ledger));

  for (const auto& [distance, k] : order) {
    const auto check = check_monotonicity(pool.entries[k].predictors.latency, space, out.probes,
                                          out.probe_latency, threshold);
    out.tried.emplace_back(pool.entries[k].device.id, check.rho);
    if (check.monotone) {
      out.index = k;
      break;
    }
  }
  return out;
}

ProxyAssignment assign_proxy(ProxyPool& pool, const DesignSpace& space,
                             const DeviceFeatures& target, double threshold, int probe_count,
                             MeasurementLedger& ledger, Rng& rng, const ProxyTrainer& trainer,
                             double granularity) {
  MatchOutcome match = match_proxy(pool, space, target, threshold, probe_count, ledger, rng);
  if (match.index) return {*match.index, true, std::move(match)};
  if (match.probes.empty()) {
    // Empty pool: nothing was probed yet, but the trainer still gets probes
    // so the new proxy is built from one consistent sample.
    match.probes = draw_probes(space, probe_count, rng);
    for (const auto& x : match.probes) match.probe_latency.push_back(true_latency(x, space, target, ledger));
  }
  ProxyEntry entry{target, trainer(target, match.probes, match.probe_latency), TCache(granularity)};
  pool.entries.push_back(std::move(entry));
  return {pool.entries.size() - 1, false, std::move(match)};
}

}  // namespace dnnopt
