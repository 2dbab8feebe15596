#include "dnnopt/search.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace dnnopt {

void SearchParams::validate() const {
  if (population < 2) throw Error(ErrorCode::kInvalidArgument, "population must be >= 2");
  if (generations < 1) throw Error(ErrorCode::kInvalidArgument, "generations must be >= 1");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mutation_rate outside [0,1]");
  }
  if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "elite_fraction outside (0,1)");
  }
}

namespace {

bool better(double value, const DesignPoint& x, double best_value, const DesignPoint& best) {
  return value < best_value || (value == best_value && x < best);
}

}  // namespace

SearchResult evolutionary_search(const Objective& objective, const DesignSpace& space,
                                 const SearchParams& params) {
  params.validate();
  Rng rng(params.seed);
  std::map<DesignPoint, double> memo;
  auto evaluate = [&](const DesignPoint& x) {
    auto it = memo.find(x);
    if (it != memo.end()) return it->second;
    const double v = objective(x);
    memo.emplace(x, v);
    return v;
  };

  const auto pop_size = static_cast<std::size_t>(params.population);
  const auto elite_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(params.elite_fraction * params.population)));

  std::vector<DesignPoint> population;
  population.reserve(pop_size);
  for (std::size_t i = 0; i < pop_size; ++i) population.push_back(sample_uniform(space, rng));

  SearchResult result;
  bool have_best = false;
  for (int gen = 0; gen < params.generations; ++gen) {
    std::vector<std::pair<double, DesignPoint>> scored;
    scored.reserve(population.size());
    for (const auto& x : population) scored.emplace_back(evaluate(x), x);
    std::sort(scored.begin(), scored.end());
    scored.erase(std::unique(scored.begin(), scored.end()), scored.end());

    if (!have_best || better(scored.front().first, scored.front().second, result.best_value, result.best)) {
      result.best_value = scored.front().first;
      result.best = scored.front().second;
      have_best = true;
    }
    result.trace.push_back({gen, result.best_value});
    if (gen + 1 == params.generations) break;

    std::vector<DesignPoint> elites;
    for (std::size_t i = 0; i < scored.size() && elites.size() < elite_count; ++i) {
      elites.push_back(scored[i].second);
    }
    population = elites;
    std::uniform_int_distribution<std::size_t> pick(0, elites.size() - 1);
    while (population.size() < pop_size) {
      const DesignPoint& a = elites[pick(rng)];
      const DesignPoint& b = elites[pick(rng)];
      population.push_back(mutate(crossover(a, b, space, rng), params.mutation_rate, space, rng));
    }
  }
  result.evaluations = memo.size();
  return result;
}

SearchResult brute_force_argmin(const Objective& objective, const DesignSpace& space,
                                std::uint64_t limit) {
  const auto all = enumerate_all(space, limit);
  SearchResult result;
  result.best = all.front();
  result.best_value = objective(all.front());
  for (std::size_t i = 1; i < all.size(); ++i) {
    const double v = objective(all[i]);
    if (v < result.best_value) {
      result.best_value = v;
      result.best = all[i];
    }
  }
  result.evaluations = all.size();
  return result;
}

double relaxed_objective_true(const DesignPoint& x, const DesignSpace& space,
                              const DeviceFeatures& d, const TradeoffWeights& lambda,
                              const ObjectiveScale& scale, MeasurementLedger& ledger,
                              const AccuracyModel& accuracy) {
  lambda.validate();
  double value = -true_accuracy(x, space, ledger, accuracy);
  if (lambda.lambda1 != 0.0) value += lambda.lambda1 * true_energy(x, space, d, ledger) / scale.energy;
  if (lambda.lambda2 != 0.0) value += lambda.lambda2 * true_latency(x, space, d, ledger) / scale.latency;
  return value;
}

double relaxed_objective_model(const DesignPoint& x, const DesignSpace& space,
                               const DeviceFeatures& d, const TradeoffWeights& lambda,
                               const ObjectiveScale& scale, const AccuracyModel& accuracy) {
  lambda.validate();
  double value = -modeled_accuracy(x, space, accuracy);
  if (lambda.lambda1 != 0.0) value += lambda.lambda1 * modeled_energy(x, space, d) / scale.energy;
  if (lambda.lambda2 != 0.0) value += lambda.lambda2 * modeled_latency(x, space, d) / scale.latency;
  return value;
}

void ConstraintSpec::validate() const {
  if (latency_bound && !(*latency_bound > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "latency bound must be positive");
  }
  if (energy_bound && !(*energy_bound > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "energy bound must be positive");
  }
}

bool ConstraintSpec::satisfied(double latency, double energy) const noexcept {
  return (!latency_bound || latency <= *latency_bound) && (!energy_bound || energy <= *energy_bound);
}

double ConstraintSpec::violation(double latency, double energy) const noexcept {
  double v = 0.0;
  if (latency_bound) v += std::max(0.0, latency / *latency_bound - 1.0);
  if (energy_bound) v += std::max(0.0, energy / *energy_bound - 1.0);
  return v;
}

std::vector<double> calibration_axis() {
  std::vector<double> axis{0.0};
  for (int k = 0; k <= 20; ++k) axis.push_back(1e-3 * std::ldexp(1.0, k));
  return axis;
}

CalibrationResult calibrate_lambda(const DesignSpace& space, const DeviceFeatures& d,
                                   const ConstraintSpec& constraints, const LambdaMinimizer& inner,
                                   MeasurementLedger& ledger, const AccuracyModel& accuracy) {
  if (!constraints.any()) {
    throw Error(ErrorCode::kInvalidArgument, "calibrate_lambda needs at least one bound");
  }
  constraints.validate();
  const auto axis = calibration_axis();
  const std::vector<double> zero{0.0};
  const auto& energy_axis = constraints.energy_bound ? axis : zero;
  const auto& latency_axis = constraints.latency_bound ? axis : zero;

  struct Measured {
    double latency, energy, accuracy;
  };
  std::map<DesignPoint, Measured> measured;

  CalibrationResult best;
  bool have = false;
  double best_violation = 0.0;
  std::size_t candidates = 0;
  for (double l1 : energy_axis) {
    for (double l2 : latency_axis) {
      const TradeoffWeights lambda{l1, l2};
      const DesignPoint x = inner(lambda);
      ++candidates;
      auto it = measured.find(x);
      if (it == measured.end()) {
        Measured m{true_latency(x, space, d, ledger), true_energy(x, space, d, ledger),
                   true_accuracy(x, space, ledger, accuracy)};
        it = measured.emplace(x, m).first;
      }
      const Measured& m = it->second;
      const bool feasible = constraints.satisfied(m.latency, m.energy);
      const double violation = constraints.violation(m.latency, m.energy);
      bool take = false;
      if (!have) {
        take = true;
      } else if (feasible != best.feasible) {
        take = feasible;
      } else if (feasible) {
        take = m.accuracy > best.accuracy || (m.accuracy == best.accuracy && x < best.design);
      } else {
        take = violation < best_violation ||
               (violation == best_violation && m.accuracy > best.accuracy);
      }
      if (take) {
        best = {lambda, x, feasible, m.latency, m.energy, m.accuracy, 0};
        best_violation = violation;
        have = true;
      }
    }
  }
  best.candidates = candidates;
  return best;
}

}  // namespace dnnopt
