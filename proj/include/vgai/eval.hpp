#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vgai/rollout.hpp"
#include "vgai/seeding.hpp"

namespace vgai {

/// (1/N) sum_i |v_i - mean(v)|^2 for one step.
inline double velocity_variance(const MatrixN2& velocities) {
  const auto n = velocities.rows();
  std::vector<double> terms(static_cast<std::size_t>(n));
  Eigen::RowVector2d mean;
  for (int c = 0; c < 2; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) terms[static_cast<std::size_t>(i)] = velocities(i, c);
    mean(c) = detail::order_free_sum(terms) / static_cast<double>(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) terms[static_cast<std::size_t>(i)] = (velocities.row(i) - mean).squaredNorm();
  return detail::order_free_sum(terms) / static_cast<double>(n);
}

/// Flocking cost: per-step velocity variance summed over the recorded steps.
inline double velocity_variance_cost(const Trajectory& traj) {
  double c = 0.0;
  for (const auto& rec : traj.steps) c += velocity_variance(rec.state.velocities);
  return c;
}

inline double velocity_variance_cost(const std::vector<MatrixN2>& velocities) {
  double c = 0.0;
  for (const auto& v : velocities) c += velocity_variance(v);
  return c;
}

inline constexpr double kFlockingThreshold = 3.0;

/// Normalized costs strictly below 3 count as a flock.
inline bool flocking_success(double normalized_cost) { return normalized_cost < kFlockingThreshold; }

struct CostReport {
  std::string controller;
  double raw_cost = 0.0;
  double expert_raw_cost = 0.0;
  double normalized_cost = 0.0;
  std::vector<double> variance_series;
  bool success = false;
  bool diverged = false;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline CostReport cost_report(const Trajectory& traj, std::uint64_t seed, const std::string& config_hash = {}) {
  CostReport r;
  r.controller = traj.controller;
  r.seed = seed;
  r.config_hash = config_hash;
  r.diverged = traj.diverged;
  for (const auto& rec : traj.steps) r.variance_series.push_back(velocity_variance(rec.state.velocities));
  for (double v : r.variance_series) r.raw_cost += v;
  return r;
}

/// Ratio of a controller's raw cost to the expert's from the same initialization.
inline double normalized_cost(const CostReport& controller, const CostReport& expert) {
  if (controller.seed != expert.seed) {
    throw ConfigError("normalized_cost: reports come from different initialization seeds");
  }
  if (controller.config_hash != expert.config_hash) {
    throw ConfigError("normalized_cost: reports come from different configurations");
  }
  if (!(expert.raw_cost > 0.0)) throw Error("normalized_cost: expert cost is zero (degenerate initialization)");
  return controller.raw_cost / expert.raw_cost;
}

/// Fills the expert and normalized fields of `report` in place.
inline CostReport& normalize(CostReport& report, const CostReport& expert) {
  report.expert_raw_cost = expert.raw_cost;
  report.normalized_cost = report.diverged ? std::numeric_limits<double>::infinity() : normalized_cost(report, expert);
  report.success = !report.diverged && flocking_success(report.normalized_cost);
  return report;
}

using ControllerFactory = std::function<std::unique_ptr<Controller>(std::uint64_t seed)>;

/// Rolls out the expert and `factory`'s controller from the same seeded
/// initialization and returns the normalized report.
inline CostReport evaluate(const Environment& env, const ControllerFactory& factory, std::uint64_t seed,
                           const std::string& config_hash = {}, Trajectory* keep = nullptr) {
  const SwarmState init = initialize_swarm(env.sim, env.comm, seed);
  ExpertController expert(env.expert);
  const CostReport ex = cost_report(simulate(init, expert, env), seed, config_hash);
  auto controller = factory(seed);
  Trajectory traj = simulate(init, *controller, env);
  CostReport r = cost_report(traj, seed, config_hash);
  if (keep) *keep = std::move(traj);
  return normalize(r, ex);
}

inline ControllerFactory expert_factory(const Environment& env) {
  return [cfg = env.expert](std::uint64_t) { return std::make_unique<ExpertController>(cfg); };
}

inline ControllerFactory position_based_factory(const Environment& env) {
  return [cfg = env.expert](std::uint64_t) { return std::make_unique<PositionBasedController>(cfg); };
}

inline ControllerFactory learned_factory(const Environment& env, const ModelParams& params,
                                         std::optional<Degradation> degradation = std::nullopt) {
  return [&params, max = env.sim.max_accel, degradation](std::uint64_t seed) {
    return std::make_unique<LearnedController>(params, max, degradation, derive_seed(seed, 300, 0));
  };
}

// ---------------------------------------------------------------------------
// Summary statistics

struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t count = 0;
};

/// Median and quartiles with linear interpolation between order statistics.
inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  s.median = quantile(0.5);
  s.q1 = quantile(0.25);
  s.q3 = quantile(0.75);
  return s;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { taps, features, init_velocity, radius, knn, team_size };

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::taps: return "K";
    case SweepAxis::features: return "F";
    case SweepAxis::init_velocity: return "v_init";
    case SweepAxis::radius: return "R";
    case SweepAxis::knn: return "K_NN";
    case SweepAxis::team_size: return "N";
  }
  return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "K") return SweepAxis::taps;
  if (s == "F") return SweepAxis::features;
  if (s == "v_init") return SweepAxis::init_velocity;
  if (s == "R") return SweepAxis::radius;
  if (s == "K_NN") return SweepAxis::knn;
  if (s == "N") return SweepAxis::team_size;
  throw ConfigError("unknown sweep axis '" + s + "' (expected K|F|v_init|R|K_NN|N)");
}

struct SweepCell {
  Environment env;
  ModelSpec spec;
  double value = 0.0;
};

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string controller;
  Summary normalized;
  bool success = false;  // median normalized cost below the threshold
  std::vector<CostReport> reports;
};

/// Supplies trained parameters for a sweep cell; nullptr means "missing".
using CheckpointProvider = std::function<const ModelParams*(const SweepCell&)>;

struct SweepSpec {
  SweepAxis axis = SweepAxis::taps;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  bool include_position_based = true;
  bool include_learned = true;
  std::size_t threads = 1;
};

inline SweepCell make_cell(const Environment& base, const ModelSpec& spec, SweepAxis axis, double value) {
  SweepCell c{base, spec, value};
  switch (axis) {
    case SweepAxis::taps: c.spec.taps = static_cast<int>(value); break;
    case SweepAxis::features: c.spec.encoder_features = static_cast<int>(value); break;
    case SweepAxis::init_velocity: c.env.sim.init_velocity = value; break;
    case SweepAxis::radius: c.env.comm = DiskModel{value}; break;
    case SweepAxis::knn: c.env.comm = KnnModel{static_cast<int>(value)}; break;
    case SweepAxis::team_size: c.env.sim.agents = static_cast<int>(value); break;
  }
  return c;
}

class MissingCheckpoint : public Error {
 public:
  using Error::Error;
};

/// Evaluates every cell of the sweep over all seeds and reports medians and
/// interquartile ranges of the normalized cost.
inline std::vector<SweepRow> run_sweep(const SweepSpec& sweep, const Environment& base, const ModelSpec& spec,
                                       const CheckpointProvider& checkpoints, const std::string& config_hash = {}) {
  if (sweep.seeds.empty()) throw ConfigError("sweep requires at least one seed");
  std::vector<SweepRow> rows;
  for (double value : sweep.values) {
    const SweepCell cell = make_cell(base, spec, sweep.axis, value);
    std::vector<std::pair<std::string, ControllerFactory>> controllers;
    if (sweep.include_position_based) controllers.emplace_back("position-based", position_based_factory(cell.env));
    const ModelParams* params = nullptr;
    if (sweep.include_learned) {
      params = checkpoints ? checkpoints(cell) : nullptr;
      if (!params) throw MissingCheckpoint("no checkpoint for " + to_string(sweep.axis) + "=" + std::to_string(value));
      controllers.emplace_back(to_string(params->spec.controller) + "/" + to_string(params->spec.perception),
                               learned_factory(cell.env, *params));
    }
    for (const auto& [label, factory] : controllers) {
      SweepRow row;
      row.axis = to_string(sweep.axis);
      row.value = value;
      row.controller = label;
      row.reports.resize(sweep.seeds.size());
      auto run_one = [&, f = factory](std::size_t s) {
        return evaluate(cell.env, f, sweep.seeds[s], config_hash);
      };
      if (sweep.threads > 1) {
        for (std::size_t s0 = 0; s0 < sweep.seeds.size(); s0 += sweep.threads) {
          std::vector<std::future<CostReport>> jobs;
          for (std::size_t s = s0; s < std::min(sweep.seeds.size(), s0 + sweep.threads); ++s) {
            jobs.push_back(std::async(std::launch::async, run_one, s));
          }
          for (std::size_t j = 0; j < jobs.size(); ++j) row.reports[s0 + j] = jobs[j].get();
        }
      } else {
        for (std::size_t s = 0; s < sweep.seeds.size(); ++s) row.reports[s] = run_one(s);
      }
      std::vector<double> costs;
      for (const auto& r : row.reports) costs.push_back(r.normalized_cost);
      row.normalized = summarize(costs);
      row.success = flocking_success(row.normalized.median);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// True when medians never increase along the listed order.
inline bool weakly_decreasing(const std::vector<double>& medians) {
  for (std::size_t i = 1; i < medians.size(); ++i)
    if (medians[i] > medians[i - 1]) return false;
  return true;
}

}  // namespace vgai
