#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>

#include "vgai/comm_graph.hpp"
#include "vgai/types.hpp"

namespace vgai {

struct AgentState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
};

/// Snapshot of the whole swarm; row i of each matrix belongs to agent i.
struct SwarmState {
  std::int64_t time_index = 0;
  MatrixN2 positions;
  MatrixN2 velocities;
  MatrixN2 accelerations;

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }

  AgentState agent(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    return {positions.row(r).transpose(), velocities.row(r).transpose(),
            accelerations.row(r).transpose()};
  }

  static SwarmState from_agents(const std::vector<AgentState>& agents, std::int64_t t = 0) {
    SwarmState s;
    s.time_index = t;
    const auto n = static_cast<Eigen::Index>(agents.size());
    s.positions.resize(n, 2);
    s.velocities.resize(n, 2);
    s.accelerations.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& a = agents[static_cast<std::size_t>(i)];
      s.positions.row(i) = a.position.transpose();
      s.velocities.row(i) = a.velocity.transpose();
      s.accelerations.row(i) = a.acceleration.transpose();
    }
    return s;
  }
};

struct SimConfig {
  int agents = 50;
  double sample_time = 0.01;   // T_s [s]
  int horizon = 100;           // steps per rollout
  double max_accel = 30.0;     // u_max [m/s^2]
  double init_velocity = 3.0;  // v_init [m/s]
  double min_spacing = 0.2;    // [m]
  double init_disk_radius = 1.5;  // degree predicate radius when the comm model is KNN
  int max_init_attempts = 1000;

  void validate() const {
    if (agents < 2) throw ConfigError("sim.agents must be >= 2");
    if (!(sample_time > 0.0)) throw ConfigError("sim.sample_time must be > 0");
    if (horizon < 1) throw ConfigError("sim.horizon must be >= 1");
    if (!(max_accel > 0.0)) throw ConfigError("sim.max_accel must be > 0");
    if (!(init_velocity >= 0.0)) throw ConfigError("sim.init_velocity must be >= 0");
    if (!(min_spacing > 0.0)) throw ConfigError("sim.min_spacing must be > 0");
    if (!(init_disk_radius > 0.0)) throw ConfigError("sim.init_disk_radius must be > 0");
    if (max_init_attempts < 1) throw ConfigError("sim.max_init_attempts must be >= 1");
  }
};

class InitializationError : public Error {
 public:
  InitializationError(int attempts, const std::string& why)
      : Error("swarm initialization failed after " + std::to_string(attempts) + " attempts: " + why),
        attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

inline Vec2 saturate(const Vec2& u, double max_accel) {
  return u.cwiseMax(-max_accel).cwiseMin(max_accel);
}

inline MatrixN2 saturate(const MatrixN2& u, double max_accel) {
  return u.cwiseMax(-max_accel).cwiseMin(max_accel);
}

/// Advances every agent by one sample interval with u held constant.
inline SwarmState step(const SwarmState& state, const MatrixN2& accelerations,
                       const SimConfig& config) {
  const auto n = state.positions.rows();
  if (accelerations.rows() != n) {
    throw DimensionError("step: " + std::to_string(accelerations.rows()) +
                         " accelerations for " + std::to_string(n) + " agents");
  }
  if (!accelerations.allFinite() || !state.positions.allFinite() || !state.velocities.allFinite()) {
    throw NonFiniteError("step: non-finite input");
  }
  const double ts = config.sample_time;
  SwarmState next;
  next.time_index = state.time_index + 1;
  next.positions = accelerations * (ts * ts / 2.0) + state.velocities * ts + state.positions;
  next.velocities = accelerations * ts + state.velocities;
  next.accelerations = accelerations;
  return next;
}

namespace detail {

inline Vec2 uniform_in_disc(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double rho = radius * std::sqrt(unit(rng));
  const double theta = 2.0 * std::numbers::pi * unit(rng);
  return {rho * std::cos(theta), rho * std::sin(theta)};
}

}  // namespace detail

/// Random initial swarm: positions uniform in a disc of radius sqrt(N), per-agent
/// velocities uniform in [-v_init, v_init]^2 plus one flock-wide bias uniform in
/// [-0.3 v_init, 0.3 v_init]^2.
///
/// A configuration is accepted when every agent has at least two neighbours
/// under the disk model and no pair is closer than `min_spacing`. Offending
/// agents are re-drawn in place until both predicates hold; each re-draw round
/// counts as one attempt.
inline SwarmState initialize_swarm(const SimConfig& config, const CommModel& model,
                                   std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int n = config.agents;
  const double disc = std::sqrt(static_cast<double>(n));
  const double radius = std::holds_alternative<DiskModel>(model) ? std::get<DiskModel>(model).radius
                                                                 : config.init_disk_radius;
  const double r2 = radius * radius;
  const double s2 = config.min_spacing * config.min_spacing;

  MatrixN2 pos(n, 2);
  for (int i = 0; i < n; ++i) pos.row(i) = detail::uniform_in_disc(rng, disc).transpose();

  std::vector<char> redraw(static_cast<std::size_t>(n));
  int attempt = 0;
  for (;; ++attempt) {
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    std::fill(redraw.begin(), redraw.end(), 0);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d2 = (pos.row(i) - pos.row(j)).squaredNorm();
        if (d2 <= s2) redraw[static_cast<std::size_t>(j)] = 1;
        if (d2 > 0.0 && d2 <= r2) {
          ++degree[static_cast<std::size_t>(i)];
          ++degree[static_cast<std::size_t>(j)];
        }
      }
    }
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      if (degree[static_cast<std::size_t>(i)] < 2) redraw[static_cast<std::size_t>(i)] = 1;
      ok = ok && !redraw[static_cast<std::size_t>(i)];
    }
    if (ok) break;
    if (attempt + 1 >= config.max_init_attempts) {
      throw InitializationError(attempt + 1, "degree or spacing predicate still violated");
    }
    for (int i = 0; i < n; ++i) {
      if (redraw[static_cast<std::size_t>(i)]) pos.row(i) = detail::uniform_in_disc(rng, disc).transpose();
    }
  }

  std::uniform_real_distribution<double> vel(-config.init_velocity, config.init_velocity);
  std::uniform_real_distribution<double> bias(-0.3 * config.init_velocity, 0.3 * config.init_velocity);
  MatrixN2 v(n, 2);
  for (int i = 0; i < n; ++i) {
    v(i, 0) = vel(rng);
    v(i, 1) = vel(rng);
  }
  const double bx = bias(rng);
  const double by = bias(rng);
  v.col(0).array() += bx;
  v.col(1).array() += by;

  SwarmState s;
  s.time_index = 0;
  s.positions = pos;
  s.velocities = v;
  s.accelerations = MatrixN2::Zero(n, 2);
  return s;
}

}  // namespace vgai
