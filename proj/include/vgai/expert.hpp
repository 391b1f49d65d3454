#pragma once

#include "vgai/audit.hpp"
#include "vgai/comm_graph.hpp"
#include "vgai/dynamics.hpp"
#include "vgai/types.hpp"

namespace vgai {

struct ExpertConfig {
  double rho = 1.0;         // potential activation radius [m]
  double max_accel = 30.0;  // [m/s^2]

  void validate() const {
    if (!(rho > 0.0)) throw ConfigError("expert.rho must be > 0");
    if (!(max_accel > 0.0)) throw ConfigError("expert.max_accel must be > 0");
  }
};

/// Collision-avoidance potential U(r_i, r_j): 1/d^2 - log(d^2) inside rho,
/// constant 1/rho^2 - log(rho^2) outside.
inline double potential(const Vec2& ri, const Vec2& rj, double rho) {
  const double d2 = (ri - rj).squaredNorm();
  if (d2 <= rho * rho) return 1.0 / d2 - std::log(d2);
  return 1.0 / (rho * rho) - std::log(rho * rho);
}

/// Gradient of the collision potential with respect to r_i.
inline Vec2 potential_gradient(const Vec2& ri, const Vec2& rj, double rho) {
  const Vec2 rij = ri - rj;
  const double d2 = rij.squaredNorm();
  if (d2 == 0.0) throw SingularityError("potential_gradient: coincident agents");
  if (d2 > rho * rho) return Vec2::Zero();
  return (-2.0 / (d2 * d2) - 2.0 / d2) * rij;
}

namespace detail {

// Unsaturated flocking control of agent i restricted to the senders in `others`.
template <class Range>
Vec2 flocking_term(const SwarmState& s, Eigen::Index i, const Range& others, double rho) {
  const Vec2 ri = s.positions.row(i).transpose();
  const Vec2 vi = s.velocities.row(i).transpose();
  std::vector<double> tx, ty;
  for (auto j : others) {
    if (static_cast<Eigen::Index>(j) == i) continue;
    const Vec2 t = -(vi - s.velocities.row(j).transpose()) - potential_gradient(ri, s.positions.row(j).transpose(), rho);
    tx.push_back(t.x());
    ty.push_back(t.y());
  }
  return {order_free_sum(tx), order_free_sum(ty)};
}

}  // namespace detail

/// Centralized expert: u*_i = -sum_j (v_i - v_j) - sum_j grad U(r_i, r_j), saturated.
inline MatrixN2 centralized_control(const SwarmState& state, const ExpertConfig& config) {
  const auto n = state.positions.rows();
  MatrixN2 u(n, 2);
  std::vector<Eigen::Index> everyone(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) everyone[static_cast<std::size_t>(j)] = j;
  for (Eigen::Index i = 0; i < n; ++i) {
    u.row(i) = saturate(detail::flocking_term(state, i, everyone, config.rho), config.max_accel).transpose();
  }
  audit::counters().global_reads += static_cast<std::uint64_t>(n * (n - 1));
  return u;
}

/// One-hop baseline: the expert law with both sums restricted to N_i(t).
inline MatrixN2 position_based_control(const SwarmState& state, const GraphSnapshot& snapshot,
                                       const ExpertConfig& config) {
  const auto n = state.positions.rows();
  if (static_cast<Eigen::Index>(snapshot.size()) != n) throw DimensionError("position_based_control: graph size");
  MatrixN2 u(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nbrs = snapshot.neighbors[static_cast<std::size_t>(i)];
    u.row(i) = saturate(detail::flocking_term(state, i, nbrs, config.rho), config.max_accel).transpose();
  }
  return u;
}

}  // namespace vgai
