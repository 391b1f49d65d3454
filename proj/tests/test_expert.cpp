#include <gtest/gtest.h>

#include "support.hpp"
#include "vgai/audit.hpp"
#include "vgai/eval.hpp"
#include "vgai/expert.hpp"

using namespace vgai;

namespace {

SwarmState two(Vec2 r1, Vec2 v1, Vec2 r2, Vec2 v2) {
  return SwarmState::from_agents({{r1, v1, Vec2::Zero()}, {r2, v2, Vec2::Zero()}});
}

Vec2 fd_gradient(const Vec2& ri, const Vec2& rj, double rho, double h = 1e-6) {
  Vec2 g;
  for (int c = 0; c < 2; ++c) {
    Vec2 up = ri, down = ri;
    up(c) += h;
    down(c) -= h;
    g(c) = (potential(up, rj, rho) - potential(down, rj, rho)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(PotentialGradient, ConstantBranch) {
  EXPECT_EQ(potential_gradient({2, 0}, {0, 0}, 1.0), Vec2::Zero());
}

TEST(PotentialGradient, UnitSeparation) {
  const Vec2 g = potential_gradient({1, 0}, {0, 0}, 1.0);
  EXPECT_DOUBLE_EQ(g.x(), -4.0);
  EXPECT_DOUBLE_EQ(g.y(), 0.0);
  const Vec2 fd = fd_gradient({1, 0}, {0, 0}, 1.5);
  EXPECT_NEAR(fd.x(), -4.0, 4.0 * 1e-5);
}

TEST(PotentialGradient, MatchesFiniteDifferencesBothBranches) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ang(0, 6.283185307179586), dist(0.2, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double d = dist(rng);
    if (std::abs(d - 1.0) < 1e-3) continue;
    const double a = ang(rng);
    const Vec2 rj{0.3, -0.7};
    const Vec2 ri = rj + d * Vec2{std::cos(a), std::sin(a)};
    const Vec2 g = potential_gradient(ri, rj, 1.0);
    const Vec2 fd = fd_gradient(ri, rj, 1.0);
    if (d > 1.0) {
      EXPECT_EQ(g, Vec2::Zero());
      EXPECT_LT(fd.norm(), 1e-6);
    } else {
      EXPECT_LT((g - fd).norm() / g.norm(), 1e-5) << "d=" << d;
    }
  }
}

TEST(PotentialGradient, Antisymmetric) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix m = test::random_matrix(2, 2, rng, 1.0);
    const Vec2 a = m.row(0).transpose(), b = m.row(1).transpose();
    EXPECT_EQ(potential_gradient(a, b, 1.0), -potential_gradient(b, a, 1.0));
  }
}

TEST(PotentialGradient, CoincidentThrows) {
  EXPECT_THROW(potential_gradient({1, 1}, {1, 1}, 1.0), SingularityError);
}

TEST(CentralizedControl, ConsensusFixedPoint) {
  auto s = SwarmState::from_agents({{{0, 0}, {1, 2}, {}}, {{3, 0}, {1, 2}, {}}, {{0, 3}, {1, 2}, {}}});
  EXPECT_EQ(centralized_control(s, {}), MatrixN2::Zero(3, 2));
}

TEST(CentralizedControl, TwoAgentsHandEvaluation) {
  const auto u = centralized_control(two({0, 0}, {1, 0}, {5, 0}, {0, 0}), {});
  EXPECT_EQ(u.row(0), (Eigen::RowVector2d{-1, 0}));
  EXPECT_EQ(u.row(1), (Eigen::RowVector2d{1, 0}));
}

TEST(CentralizedControl, Saturates) {
  const auto u = centralized_control(two({0, 0}, {100, 0}, {5, 0}, {0, 0}), {});
  EXPECT_EQ(u(0, 0), -30.0);
}

TEST(CentralizedControl, ConsensusTermPreservesMeanVelocity) {
  std::mt19937_64 rng(12);
  SimConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    // Spread out so no pair is inside the potential range; small velocities avoid saturation.
    std::vector<AgentState> agents;
    for (int i = 0; i < 8; ++i) {
      agents.push_back({Vec2{3.0 * i, 2.0 * (i % 3)}, test::random_matrix(2, 1, rng, 1.0).col(0), Vec2::Zero()});
    }
    const auto s = SwarmState::from_agents(agents);
    const auto next = step(s, centralized_control(s, {}), cfg);
    const Eigen::RowVector2d drift = next.velocities.colwise().mean() - s.velocities.colwise().mean();
    EXPECT_LT(drift.norm(), 1e-12);
  }
}

TEST(CentralizedControl, CountsGlobalReads) {
  audit::reset();
  centralized_control(two({0, 0}, {1, 0}, {5, 0}, {0, 0}), {});
  EXPECT_GT(audit::counters().global_reads, 0u);
}

TEST(CentralizedControl, PermutationEquivariant) {
  std::mt19937_64 rng(15);
  SimConfig cfg;
  cfg.agents = 20;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = initialize_swarm(cfg, DiskModel{1.5}, seed);
    const auto perm = test::random_permutation(20, rng);
    EXPECT_EQ(centralized_control(test::permute_state(s, perm), {}),
              test::permute_rows(centralized_control(s, {}), perm));
  }
}

TEST(Expert, BeatsZeroControl) {
  Environment env;
  env.sim.agents = 20;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto init = initialize_swarm(env.sim, env.comm, seed);
    ExpertController expert(env.expert);
    ZeroController zero;
    EXPECT_LT(velocity_variance_cost(simulate(init, expert, env)), velocity_variance_cost(simulate(init, zero, env)));
  }
}

TEST(Expert, FlocksOnTenSeedsAtFullScale) {
  Environment env;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto init = initialize_swarm(env.sim, env.comm, seed);
    ExpertController expert(env.expert);
    const auto traj = simulate(init, expert, env);
    const auto final = step(traj.steps.back().state, traj.steps.back().executed, env.sim);
    EXPECT_LT(velocity_variance(final.velocities), velocity_variance(init.velocities)) << "seed " << seed;
  }
}

TEST(PositionBased, CompleteGraphMatchesCentralized) {
  std::mt19937_64 rng(2);
  SimConfig cfg;
  cfg.agents = 6;
  const auto s = initialize_swarm(cfg, DiskModel{1.5}, 3);
  std::vector<std::vector<int>> all(6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if (i != j) all[static_cast<std::size_t>(i)].push_back(j);
  EXPECT_EQ(position_based_control(s, snapshot_from_neighbors(all), {}), centralized_control(s, {}));
}

TEST(PositionBased, EmptyGraphGivesZero) {
  SimConfig cfg;
  cfg.agents = 6;
  const auto s = initialize_swarm(cfg, DiskModel{1.5}, 3);
  EXPECT_EQ(position_based_control(s, empty_snapshot(6), {}), MatrixN2::Zero(6, 2));
}

TEST(PositionBased, PathDiffersAtEndNodes) {
  auto s = SwarmState::from_agents({{{0, 0}, {1, 0}, {}}, {{1.2, 0}, {0, 2}, {}}, {{2.4, 0}, {-1, 1}, {}}});
  const auto path = build_gso(s.positions, DiskModel{1.5});
  ASSERT_EQ(path.neighbors[0].size(), 1u);
  const auto local = position_based_control(s, path, {});
  const auto global = centralized_control(s, {});
  EXPECT_NE(local.row(0), global.row(0));
  EXPECT_NE(local.row(2), global.row(2));
  EXPECT_EQ(local.row(1), global.row(1));
}
