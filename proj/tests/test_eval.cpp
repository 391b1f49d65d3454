#include <gtest/gtest.h>

#include "support.hpp"
#include "vgai/eval.hpp"

using namespace vgai;

namespace {

Environment desk_env(int agents = 20) {
  Environment env;
  env.sim.agents = agents;
  return env;
}

Trajectory from_velocities(const std::vector<MatrixN2>& vs) {
  Trajectory traj;
  for (const auto& v : vs) {
    StepRecord rec;
    rec.state.positions = MatrixN2::Zero(v.rows(), 2);
    rec.state.velocities = v;
    traj.steps.push_back(rec);
  }
  return traj;
}

}  // namespace

TEST(Cost, TwoAgentsOneStep) {
  MatrixN2 v(2, 2);
  v << 1, 0, -1, 0;
  EXPECT_EQ(velocity_variance_cost(std::vector<MatrixN2>{v}), 1.0);
  EXPECT_EQ(velocity_variance_cost(from_velocities({v})), 1.0);
}

TEST(Cost, IdenticalVelocitiesCostNothing) {
  const MatrixN2 v = MatrixN2::Constant(5, 2, 2.5);
  EXPECT_EQ(velocity_variance_cost(std::vector<MatrixN2>{v, v, v}), 0.0);
}

TEST(Cost, InvariantUnderCommonShift) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixN2 v = test::random_matrix(6, 2, rng, 3.0);
    MatrixN2 shifted = v;
    shifted.rowwise() += Eigen::RowVector2d{0.25, -4.0};
    EXPECT_NEAR(velocity_variance(shifted), velocity_variance(v), 1e-12);
  }
}

TEST(Cost, InvariantUnderRelabeling) {
  std::mt19937_64 rng(2);
  const auto env = desk_env();
  ExpertController expert(env.expert);
  const auto traj = simulate(initialize_swarm(env.sim, env.comm, 3), expert, env);
  const auto perm = test::random_permutation(20, rng);
  std::vector<MatrixN2> permuted;
  for (const auto& rec : traj.steps) permuted.push_back(test::permute_rows(rec.state.velocities, perm));
  EXPECT_NEAR(velocity_variance_cost(permuted), velocity_variance_cost(traj), 1e-12 * velocity_variance_cost(traj));
}

TEST(Cost, AdditiveOverSegments) {
  std::mt19937_64 rng(3);
  std::vector<MatrixN2> all;
  for (int t = 0; t < 10; ++t) all.push_back(test::random_matrix(4, 2, rng));
  const std::vector<MatrixN2> head(all.begin(), all.begin() + 4), tail(all.begin() + 4, all.end());
  EXPECT_NEAR(velocity_variance_cost(all), velocity_variance_cost(head) + velocity_variance_cost(tail), 1e-12);
}

TEST(Normalized, ExpertIsOne) {
  const auto env = desk_env();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = evaluate(env, expert_factory(env), seed);
    EXPECT_EQ(r.normalized_cost, 1.0);
    EXPECT_TRUE(r.success);
  }
}

TEST(Normalized, ZeroControlNoBetterThanExpert) {
  const auto env = desk_env();
  const ControllerFactory zero = [](std::uint64_t) { return std::make_unique<ZeroController>(); };
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_GE(evaluate(env, zero, seed).normalized_cost, 1.0);
}

TEST(Normalized, LinearInRawCost) {
  CostReport a, e;
  a.raw_cost = 2.0;
  e.raw_cost = 4.0;
  EXPECT_EQ(normalized_cost(a, e), 0.5);
  a.raw_cost = 6.0;
  EXPECT_EQ(normalized_cost(a, e), 1.5);
}

TEST(Normalized, PairingErrors) {
  CostReport a, e;
  a.raw_cost = 1.0;
  e.raw_cost = 1.0;
  a.seed = 1;
  EXPECT_THROW(normalized_cost(a, e), ConfigError);
  a.seed = 0;
  a.config_hash = "x";
  EXPECT_THROW(normalized_cost(a, e), ConfigError);
  a.config_hash = "";
  e.raw_cost = 0.0;
  EXPECT_THROW(normalized_cost(a, e), Error);
}

TEST(Success, Threshold) {
  EXPECT_TRUE(flocking_success(2.24));
  EXPECT_FALSE(flocking_success(4.13));
  EXPECT_FALSE(flocking_success(3.0));
}

TEST(Summary, MedianAndQuartiles) {
  const auto s = summarize({5, 1, 4, 2, 3});
  EXPECT_EQ(s.median, 3.0);
  EXPECT_EQ(s.q1, 2.0);
  EXPECT_EQ(s.q3, 4.0);
  EXPECT_EQ(s.count, 5u);
  EXPECT_EQ(summarize({1, 2}).median, 1.5);
  EXPECT_EQ(summarize({}).count, 0u);
}

TEST(Sweep, SingleCellEqualsDirectReport) {
  const auto env = desk_env(12);
  SweepSpec sweep;
  sweep.axis = SweepAxis::init_velocity;
  sweep.values = {env.sim.init_velocity};
  sweep.seeds = {1000};
  sweep.include_learned = false;
  const auto rows = run_sweep(sweep, env, ModelSpec{}, {});
  ASSERT_EQ(rows.size(), 1u);
  const auto direct = evaluate(env, position_based_factory(env), 1000);
  EXPECT_EQ(rows[0].normalized.median, direct.normalized_cost);
  EXPECT_EQ(rows[0].reports[0].raw_cost, direct.raw_cost);
}

TEST(Sweep, ThreadedMatchesSerial) {
  const auto env = desk_env(12);
  SweepSpec sweep;
  sweep.axis = SweepAxis::radius;
  sweep.values = {1.5, 2.0};
  sweep.seeds = {1000, 1001, 1002};
  sweep.include_learned = false;
  const auto serial = run_sweep(sweep, env, ModelSpec{}, {});
  sweep.threads = 3;
  const auto threaded = run_sweep(sweep, env, ModelSpec{}, {});
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(serial[i].normalized.median, threaded[i].normalized.median);
}

TEST(Sweep, MissingCheckpointNamesCell) {
  const auto env = desk_env(12);
  SweepSpec sweep;
  sweep.axis = SweepAxis::taps;
  sweep.values = {2};
  sweep.seeds = {1000};
  try {
    run_sweep(sweep, env, ModelSpec{}, [](const SweepCell&) -> const ModelParams* { return nullptr; });
    FAIL() << "expected MissingCheckpoint";
  } catch (const MissingCheckpoint& e) {
    EXPECT_NE(std::string(e.what()).find("K=2"), std::string::npos) << e.what();
  }
}

TEST(Sweep, CellsApplyAxis) {
  const Environment env;
  const ModelSpec spec;
  EXPECT_EQ(make_cell(env, spec, SweepAxis::taps, 3).spec.taps, 3);
  EXPECT_EQ(make_cell(env, spec, SweepAxis::team_size, 24).env.sim.agents, 24);
  EXPECT_EQ(std::get<KnnModel>(make_cell(env, spec, SweepAxis::knn, 10).env.comm).neighbors, 10);
  EXPECT_EQ(std::get<DiskModel>(make_cell(env, spec, SweepAxis::radius, 2.0).env.comm).radius, 2.0);
  EXPECT_THROW(sweep_axis_from_string("Q"), ConfigError);
}

TEST(Sweep, WeaklyDecreasing) {
  EXPECT_TRUE(weakly_decreasing({1.99, 1.79, 1.66}));
  EXPECT_TRUE(weakly_decreasing({2.0, 2.0}));
  EXPECT_FALSE(weakly_decreasing({1.0, 1.1}));
}
