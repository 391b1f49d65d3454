#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "vgai/perception.hpp"

using namespace vgai;

namespace {

SwarmState at(std::initializer_list<std::pair<double, double>> pts) {
  std::vector<AgentState> agents;
  for (auto [x, y] : pts) agents.push_back({Vec2{x, y}, Vec2::Zero(), Vec2::Zero()});
  return SwarmState::from_agents(agents);
}

// Straight transcription of the nine-entry summary, independent of the library code.

}  // namespace

TEST(ExactFeatures, IsolatedAgentIsZero) {
  const auto s = at({{0, 0}, {10, 0}});
  const auto g = build_gso(s.positions, DiskModel{1.5});
  EXPECT_EQ(exact_features(s, g, 0), (Eigen::Matrix<double, 6, 1>::Zero()));
}

TEST(ExactFeatures, OneNeighbourHandEvaluation) {
  auto s = at({{1, 0}, {0, 0}});
  s.velocities.setConstant(0.7);
  const auto g = build_gso(s.positions, DiskModel{1.5});
  Eigen::Matrix<double, 6, 1> expected;
  expected << 0, 0, 1, 0, 1, 0;
  EXPECT_EQ(exact_features(s, g, 0), expected);
}

TEST(ExactFeatures, InvariantToRelabellingOthers) {
  SimConfig cfg;
  cfg.agents = 12;
  std::mt19937_64 rng(3);
  const auto s = initialize_swarm(cfg, DiskModel{1.5}, 4);
  const auto g = build_gso(s.positions, DiskModel{1.5});
  for (int trial = 0; trial < 10; ++trial) {
    auto perm = test::random_permutation(12, rng);
    // keep agent 0 in place
    const auto pos0 = std::find(perm.begin(), perm.end(), 0) - perm.begin();
    std::swap(perm[0], perm[static_cast<std::size_t>(pos0)]);
    const auto sp = test::permute_state(s, perm);
    const auto gp = build_gso(sp.positions, DiskModel{1.5});
    EXPECT_EQ(exact_features(sp, gp, 0), exact_features(s, g, 0));
  }
}

TEST(RenderObservation, EmptyWhenNobodyInRange) {
  ViewConfig view;
  const auto obs = render_observation(at({{0, 0}, {20, 0}}), 0, view);
  EXPECT_EQ(obs.panorama, Vector::Zero(view.bins));
}

TEST(RenderObservation, AgentDueEastAtHalfIntensity) {
  ViewConfig view;  // rho_vis = 0.5, so d = 1 gives intensity 0.5
  const auto obs = render_observation(at({{0, 0}, {1, 0}}), 0, view);
  EXPECT_DOUBLE_EQ(obs.panorama(0), 0.5);
  EXPECT_DOUBLE_EQ(obs.panorama.maxCoeff(), 0.5);
  // half-width atan(0.5) ~ 0.46 rad spans several bins on either side
  const double half = std::atan(0.5), width = 2 * std::numbers::pi / view.bins;
  for (int b = 0; b < view.bins; ++b) {
    const double centre = (b + 0.5) * width;
    const double dist = std::min(centre, 2 * std::numbers::pi - centre);
    EXPECT_EQ(obs.panorama(b), b == 0 || dist <= half ? 0.5 : 0.0) << "bin " << b;
  }
}

TEST(RenderObservation, NearerAgentIsWiderAndBrighter) {
  ViewConfig view;
  const auto near = render_observation(at({{0, 0}, {0.8, 0}}), 0, view);
  const auto far = render_observation(at({{0, 0}, {3, 0}}), 0, view);
  EXPECT_GT(near.panorama.maxCoeff(), far.panorama.maxCoeff());
  EXPECT_GT((near.panorama.array() > 0).count(), (far.panorama.array() > 0).count());
}

TEST(RenderObservation, CoincidentBearingsTakeMaximum) {
  ViewConfig view;
  const auto both = render_observation(at({{0, 0}, {1, 1}, {3, 3}}), 0, view);
  const auto a = render_observation(at({{0, 0}, {1, 1}}), 0, view);
  const auto b = render_observation(at({{0, 0}, {3, 3}}), 0, view);
  EXPECT_EQ(both.panorama, a.panorama.cwiseMax(b.panorama));
}

TEST(RenderObservation, RotationByWholeBinsShiftsPanorama) {
  ViewConfig view;
  std::mt19937_64 rng(8);
  const double width = 2 * std::numbers::pi / view.bins;
  for (int shift : {1, 5, 16, 40}) {
    const Matrix pts = test::random_matrix(6, 2, rng, 2.0);
    MatrixN2 rotated(6, 2);
    const double a = shift * width;
    for (Eigen::Index i = 0; i < 6; ++i) {
      rotated(i, 0) = std::cos(a) * pts(i, 0) - std::sin(a) * pts(i, 1);
      rotated(i, 1) = std::sin(a) * pts(i, 0) + std::cos(a) * pts(i, 1);
    }
    SwarmState s0, s1;
    s0.positions = pts;
    s1.positions = rotated;
    s0.velocities = s1.velocities = s0.accelerations = s1.accelerations = MatrixN2::Zero(6, 2);
    const auto p0 = render_observation(s0, 0, view).panorama;
    const auto p1 = render_observation(s1, 0, view).panorama;
    for (int b = 0; b < view.bins; ++b) EXPECT_NEAR(p1((b + shift) % view.bins), p0(b), 1e-9) << "shift " << shift;
  }
}

TEST(Degrade, ZeroSigmaIsIdentity) {
  std::mt19937_64 rng(1);
  Observation obs{Vector::LinSpaced(64, 0, 1)};
  EXPECT_EQ(degrade(obs, GaussianNoise{0.0}, rng).panorama, obs.panorama);
}

TEST(Degrade, BlurWidthOneIsIdentity) {
  std::mt19937_64 rng(1);
  Observation obs{Vector::LinSpaced(64, 0, 1)};
  EXPECT_EQ(degrade(obs, Blur{1}, rng).panorama, obs.panorama);
}

TEST(Degrade, BlurOfDeltaIsPlateau) {
  std::mt19937_64 rng(1);
  Observation obs{Vector::Zero(64)};
  obs.panorama(10) = 1.0;
  const auto out = degrade(obs, Blur{5}, rng).panorama;
  EXPECT_EQ((out.array() > 0).count(), 5);
  for (int b = 8; b <= 12; ++b) EXPECT_DOUBLE_EQ(out(b), 0.2);
  EXPECT_NEAR(out.sum(), 1.0, 1e-15);
}

TEST(Degrade, NoiseIsSeededAndClipped) {
  Observation obs{Vector::Constant(64, 0.5)};
  std::mt19937_64 a(3), b(3);
  const auto x = degrade(obs, GaussianNoise{0.8}, a).panorama;
  EXPECT_EQ(x, degrade(obs, GaussianNoise{0.8}, b).panorama);
  EXPECT_GE(x.minCoeff(), 0.0);
  EXPECT_LE(x.maxCoeff(), 1.0);
  EXPECT_NE(x, obs.panorama);
}

TEST(Encoder, ZeroInputZeroBiasGivesZero) {
  std::mt19937_64 rng(2);
  EncoderShape shape;
  auto p = init_encoder(shape, rng);
  p.conv1_b.setZero();
  p.conv2_b.setZero();
  p.fc_b.setZero();
  EXPECT_EQ(encode(Observation{Vector::Zero(64)}, p), Vector::Zero(6));
}

TEST(Encoder, Deterministic) {
  std::mt19937_64 rng(2);
  const auto p = init_encoder({}, rng);
  Observation obs{Vector::LinSpaced(64, 0, 1)};
  EXPECT_EQ(encode(obs, p), encode(obs, p));
}

TEST(Encoder, RejectsWrongWidth) {
  std::mt19937_64 rng(2);
  const auto p = init_encoder({}, rng);
  EXPECT_THROW(encode(Observation{Vector::Zero(32)}, p), DimensionError);
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  EncoderShape shape;
  shape.bins = 16;
  shape.pool = 4;
  shape.channels1 = 3;
  shape.channels2 = 2;
  shape.kernel1 = 3;
  shape.kernel2 = 5;
  shape.outputs = 3;
  auto p = init_encoder(shape, rng);
  Observation obs{(test::random_matrix(16, 1, rng).array().abs()).matrix().col(0)};
  const Vector d_out = test::random_matrix(3, 1, rng).col(0);
  EncoderCache cache;
  encode(obs, p, &cache);
  auto grad = EncoderParams::zeros(shape);
  encode_backward(cache, d_out, p, grad);

  std::vector<Matrix*> ps, gs;
  EncoderParams::visit(p, [&](const std::string&, Matrix& m) { ps.push_back(&m); });
  EncoderParams::visit(grad, [&](const std::string&, Matrix& m) { gs.push_back(&m); });
  const double h = 1e-6;
  for (std::size_t t = 0; t < ps.size(); ++t) {
    Matrix numeric(ps[t]->rows(), ps[t]->cols());
    for (Eigen::Index i = 0; i < ps[t]->size(); ++i) {
      double& w = ps[t]->data()[i];
      const double saved = w;
      w = saved + h;
      const double up = d_out.dot(encode(obs, p));
      w = saved - h;
      const double down = d_out.dot(encode(obs, p));
      w = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    EXPECT_LT(test::rel_error(*gs[t], numeric), 1e-4) << "tensor " << t;
  }
}

TEST(Encoder, SameGeometrySameFeatures) {
  std::mt19937_64 rng(6);
  const auto p = init_encoder({}, rng);
  // Agents 0 and 2 both see a single neighbour 1 m due east.
  const auto s = at({{0, 0}, {1, 0}, {10, 10}, {11, 10}});
  ViewConfig view;
  EXPECT_EQ(encode(render_observation(s, 0, view), p), encode(render_observation(s, 2, view), p));
}

TEST(DetectionFeatures, EmptyIsZero) {
  EXPECT_EQ(detection_features({}), (Eigen::Matrix<double, 9, 1>::Zero()));
}

TEST(DetectionFeatures, SingleDetection) {
  const auto f = detection_features({{0.5, 0.5, 0.2, 0.1, 1.0}});
  EXPECT_DOUBLE_EQ(f(0), 0.5);
  EXPECT_DOUBLE_EQ(f(1), 0.5);
  EXPECT_NEAR(f(2), 0.02, 1e-17);
  EXPECT_DOUBLE_EQ(f(6), 0.5);
  EXPECT_DOUBLE_EQ(f(7), 0.5);
  EXPECT_NEAR(f(8), 0.02, 1e-17);
}

TEST(DetectionFeatures, EqualAreasReduceToPlainMeans) {
  const auto f = detection_features({{0.0, 0.3, 0.1, 0.1, 1.0}, {0.5, 0.3, 0.1, 0.1, 1.0}, {1.0, 0.3, 0.1, 0.1, 1.0}});
  EXPECT_NEAR(f(3), 0.5, 1e-15);
  EXPECT_NEAR(f(4), 0.3, 1e-15);
  EXPECT_NEAR(f(6), 0.5, 1e-15);
}

TEST(DetectionFeatures, MatchesBruteForce) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> count(0, 8);
  for (int trial = 0; trial < 100; ++trial) {
    DetectionSet dets(static_cast<std::size_t>(count(rng)));
    for (auto& d : dets) d = {u(rng), u(rng), u(rng) * 0.3, u(rng) * 0.3, u(rng)};
    if (trial % 10 == 0 && !dets.empty()) dets.push_back(dets.front());  // exact tie
    EXPECT_EQ(detection_features(dets), test::brute_force_features(dets)) << "trial " << trial;
  }
}

TEST(SynthesizeDetections, NobodyVisible) {
  EXPECT_TRUE(synthesize_detections(at({{0, 0}, {50, 0}}), 0, {}).empty());
}

TEST(SynthesizeDetections, ClosedFormProjection) {
  CameraConfig cam;
  const auto dets = synthesize_detections(at({{0, 0}, {0, 2}}), 0, cam);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_DOUBLE_EQ(dets[0].x, 0.25);  // bearing pi/2
  EXPECT_DOUBLE_EQ(dets[0].y, 0.5);
  EXPECT_DOUBLE_EQ(dets[0].w, cam.box_scale * cam.rho_vis / 2.0);
  EXPECT_DOUBLE_EQ(dets[0].h, dets[0].w);
  EXPECT_EQ(dets[0].confidence, 1.0);
}

TEST(SynthesizeDetections, NearerIsLarger) {
  const auto dets = synthesize_detections(at({{0, 0}, {1, 0}, {0, 3}}), 0, {});
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_GT(dets[0].w * dets[0].h, dets[1].w * dets[1].h);
}
