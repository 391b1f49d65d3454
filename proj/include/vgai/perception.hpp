#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <variant>
#include <vector>

#include "vgai/comm_graph.hpp"
#include "vgai/dynamics.hpp"
#include "vgai/types.hpp"

namespace vgai {

// ---------------------------------------------------------------------------
// Exact relative-state features

inline constexpr int kExactFeatureDim = 6;

/// [sum (v_i - v_j), sum r_ij/|r_ij|^4, sum r_ij/|r_ij|^2] over j in N_i(t).
inline Eigen::Matrix<double, 6, 1> exact_features(const SwarmState& state, const GraphSnapshot& snapshot,
                                                  std::size_t agent) {
  Eigen::Matrix<double, 6, 1> x;
  const auto i = static_cast<Eigen::Index>(agent);
  const Vec2 ri = state.positions.row(i).transpose();
  const Vec2 vi = state.velocities.row(i).transpose();
  std::array<std::vector<double>, 6> terms;
  for (int j : snapshot.neighbors.at(agent)) {
    const Vec2 rij = ri - state.positions.row(j).transpose();
    const double d2 = rij.squaredNorm();
    if (d2 == 0.0) throw SingularityError("exact_features: coincident neighbour");
    const Vec2 dv = vi - state.velocities.row(j).transpose();
    const Vec2 a = rij / (d2 * d2);
    const Vec2 b = rij / d2;
    for (int c = 0; c < 2; ++c) {
      terms[static_cast<std::size_t>(c)].push_back(dv(c));
      terms[static_cast<std::size_t>(2 + c)].push_back(a(c));
      terms[static_cast<std::size_t>(4 + c)].push_back(b(c));
    }
  }
  for (int k = 0; k < 6; ++k) x(k) = detail::order_free_sum(terms[static_cast<std::size_t>(k)]);
  return x;
}

inline Matrix exact_feature_matrix(const SwarmState& state, const GraphSnapshot& snapshot) {
  Matrix x(static_cast<Eigen::Index>(state.size()), kExactFeatureDim);
  for (std::size_t i = 0; i < state.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = exact_features(state, snapshot, i).transpose();
  }
  return x;
}

// ---------------------------------------------------------------------------
// Synthetic panoramic observations

struct ViewConfig {
  int bins = 64;
  double rho_vis = 0.5;    // apparent-size scale [m]
  double max_range = 5.0;  // [m]

  void validate() const {
    if (bins < 1) throw ConfigError("view.bins must be >= 1");
    if (!(rho_vis > 0.0)) throw ConfigError("view.rho_vis must be > 0");
    if (!(max_range > 0.0)) throw ConfigError("view.max_range must be > 0");
  }
};

/// World-frame azimuth panorama; bin b spans [b, b+1) * 2 pi / W.
struct Observation {
  Vector panorama;
};

namespace detail {

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a -= two_pi;
  return a;
}

inline double circular_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a - b));
  return std::min(d, 2.0 * std::numbers::pi - d);
}

}  // namespace detail

/// Paints every agent within range at intensity min(1, rho_vis/d) over the bins
/// whose centres lie within atan(rho_vis/d) of its bearing, plus the bin that
/// contains the bearing. Overlaps combine by per-bin maximum.
inline Observation render_observation(const SwarmState& state, std::size_t agent, const ViewConfig& view) {
  view.validate();
  const int w = view.bins;
  const double width = 2.0 * std::numbers::pi / w;
  Observation obs{Vector::Zero(w)};
  const auto i = static_cast<Eigen::Index>(agent);
  for (Eigen::Index j = 0; j < state.positions.rows(); ++j) {
    if (j == i) continue;
    const Vec2 rel = state.positions.row(j).transpose() - state.positions.row(i).transpose();
    const double d = rel.norm();
    if (d == 0.0 || d > view.max_range) continue;
    const double intensity = std::min(1.0, view.rho_vis / d);
    const double half = std::atan(view.rho_vis / d);
    const double bearing = detail::wrap_angle(std::atan2(rel.y(), rel.x()));
    const int home = std::min(w - 1, static_cast<int>(bearing / width));
    obs.panorama(home) = std::max(obs.panorama(home), intensity);
    for (int b = 0; b < w; ++b) {
      if (detail::circular_distance((b + 0.5) * width, bearing) <= half) {
        obs.panorama(b) = std::max(obs.panorama(b), intensity);
      }
    }
  }
  return obs;
}

struct GaussianNoise {
  double sigma = 0.0;
};

struct Blur {
  int width = 1;
};

using Degradation = std::variant<GaussianNoise, Blur>;

/// Additive clipped Gaussian noise or a circular moving average of `width` bins.
inline Observation degrade(const Observation& obs, const Degradation& mode, std::mt19937_64& rng) {
  Observation out = obs;
  if (const auto* g = std::get_if<GaussianNoise>(&mode)) {
    if (g->sigma == 0.0) return out;
    std::normal_distribution<double> noise(0.0, g->sigma);
    for (Eigen::Index b = 0; b < out.panorama.size(); ++b) {
      out.panorama(b) = std::clamp(out.panorama(b) + noise(rng), 0.0, 1.0);
    }
    return out;
  }
  const int k = std::get<Blur>(mode).width;
  if (k < 1) throw ConfigError("blur width must be >= 1");
  if (k == 1) return out;
  const auto w = obs.panorama.size();
  const Eigen::Index lead = (k - 1) / 2;
  for (Eigen::Index p = 0; p < w; ++p) {
    double acc = 0.0;
    for (Eigen::Index m = 0; m < k; ++m) {
      acc += obs.panorama(((p + m - lead) % w + w) % w);
    }
    out.panorama(p) = acc / k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation encoder: conv -> tanh -> conv -> tanh -> avg-pool -> linear

struct EncoderShape {
  int bins = 64;
  int channels1 = 8;
  int kernel1 = 5;
  int channels2 = 8;
  int kernel2 = 5;
  int pool = 4;
  int outputs = 6;

  int pooled_bins() const { return bins / pool; }

  void validate() const {
    if (bins < 1 || channels1 < 1 || channels2 < 1 || kernel1 < 1 || kernel2 < 1 || outputs < 1) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (pool < 1 || bins % pool != 0) throw ConfigError("encoder.pool must divide bins");
  }
};

struct EncoderParams {
  EncoderShape shape;
  Matrix conv1_w;  // channels1 x kernel1
  Matrix conv1_b;  // channels1 x 1
  Matrix conv2_w;  // channels2 x (channels1 * kernel2)
  Matrix conv2_b;  // channels2 x 1
  Matrix fc_w;     // outputs x (channels2 * pooled_bins)
  Matrix fc_b;     // outputs x 1

  static EncoderParams zeros(const EncoderShape& s) {
    s.validate();
    EncoderParams p;
    p.shape = s;
    p.conv1_w = Matrix::Zero(s.channels1, s.kernel1);
    p.conv1_b = Matrix::Zero(s.channels1, 1);
    p.conv2_w = Matrix::Zero(s.channels2, s.channels1 * s.kernel2);
    p.conv2_b = Matrix::Zero(s.channels2, 1);
    p.fc_w = Matrix::Zero(s.outputs, s.channels2 * s.pooled_bins());
    p.fc_b = Matrix::Zero(s.outputs, 1);
    return p;
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("encoder.conv1_w", self.conv1_w);
    f("encoder.conv1_b", self.conv1_b);
    f("encoder.conv2_w", self.conv2_w);
    f("encoder.conv2_b", self.conv2_b);
    f("encoder.fc_w", self.fc_w);
    f("encoder.fc_b", self.fc_b);
  }
};

namespace detail {

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline void init_uniform(Matrix& m, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
}

}  // namespace detail

inline EncoderParams init_encoder(const EncoderShape& s, std::mt19937_64& rng) {
  EncoderParams p = EncoderParams::zeros(s);
  detail::init_uniform(p.conv1_w, s.kernel1, rng);
  detail::init_uniform(p.conv1_b, s.kernel1, rng);
  detail::init_uniform(p.conv2_w, s.channels1 * s.kernel2, rng);
  detail::init_uniform(p.conv2_b, s.channels1 * s.kernel2, rng);
  detail::init_uniform(p.fc_w, s.channels2 * s.pooled_bins(), rng);
  detail::init_uniform(p.fc_b, s.channels2 * s.pooled_bins(), rng);
  return p;
}

/// Intermediate activations retained for the backward pass.
struct EncoderCache {
  Vector input;
  Matrix act1;  // channels1 x bins
  Matrix cols;  // (channels1 * kernel2) x bins
  Matrix act2;  // channels2 x bins
  Vector flat;  // channels2 * pooled_bins
};

namespace detail {

inline Eigen::Index wrap_index(Eigen::Index p, Eigen::Index w) { return ((p % w) + w) % w; }

}  // namespace detail

inline Vector encode(const Observation& obs, const EncoderParams& params, EncoderCache* cache = nullptr) {
  const auto& s = params.shape;
  if (obs.panorama.size() != s.bins) {
    throw DimensionError("encode: panorama has " + std::to_string(obs.panorama.size()) + " bins, encoder expects " +
                         std::to_string(s.bins));
  }
  const Eigen::Index w = s.bins;
  const Eigen::Index lead1 = s.kernel1 / 2;
  const Eigen::Index lead2 = s.kernel2 / 2;

  Matrix taps1(s.kernel1, w);
  for (Eigen::Index m = 0; m < s.kernel1; ++m)
    for (Eigen::Index p = 0; p < w; ++p) taps1(m, p) = obs.panorama(detail::wrap_index(p + m - lead1, w));
  Matrix act1 = ((params.conv1_w * taps1).colwise() + params.conv1_b.col(0)).array().tanh().matrix();

  Matrix cols(s.channels1 * s.kernel2, w);
  for (Eigen::Index c = 0; c < s.channels1; ++c)
    for (Eigen::Index m = 0; m < s.kernel2; ++m)
      for (Eigen::Index p = 0; p < w; ++p) cols(c * s.kernel2 + m, p) = act1(c, detail::wrap_index(p + m - lead2, w));
  Matrix act2 = ((params.conv2_w * cols).colwise() + params.conv2_b.col(0)).array().tanh().matrix();

  const Eigen::Index nb = s.pooled_bins();
  Vector flat(s.channels2 * nb);
  for (Eigen::Index c = 0; c < s.channels2; ++c)
    for (Eigen::Index b = 0; b < nb; ++b) flat(c * nb + b) = act2.row(c).segment(b * s.pool, s.pool).mean();

  Vector out = params.fc_w * flat + params.fc_b.col(0);
  if (cache) {
    cache->input = obs.panorama;
    cache->act1 = std::move(act1);
    cache->cols = std::move(cols);
    cache->act2 = std::move(act2);
    cache->flat = std::move(flat);
  }
  return out;
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
inline void encode_backward(const EncoderCache& cache, const Vector& d_out, const EncoderParams& params,
                            EncoderParams& grad) {
  const auto& s = params.shape;
  const Eigen::Index w = s.bins;
  const Eigen::Index nb = s.pooled_bins();
  const Eigen::Index lead1 = s.kernel1 / 2;
  const Eigen::Index lead2 = s.kernel2 / 2;

  grad.fc_w.noalias() += d_out * cache.flat.transpose();
  grad.fc_b.col(0) += d_out;
  const Vector d_flat = params.fc_w.transpose() * d_out;

  Matrix d_h2(s.channels2, w);
  for (Eigen::Index c = 0; c < s.channels2; ++c)
    for (Eigen::Index p = 0; p < w; ++p) {
      const double a = cache.act2(c, p);
      d_h2(c, p) = d_flat(c * nb + p / s.pool) / s.pool * (1.0 - a * a);
    }
  grad.conv2_w.noalias() += d_h2 * cache.cols.transpose();
  grad.conv2_b.col(0) += d_h2.rowwise().sum();
  const Matrix d_cols = params.conv2_w.transpose() * d_h2;

  Matrix d_act1 = Matrix::Zero(s.channels1, w);
  for (Eigen::Index c = 0; c < s.channels1; ++c)
    for (Eigen::Index m = 0; m < s.kernel2; ++m)
      for (Eigen::Index p = 0; p < w; ++p) d_act1(c, detail::wrap_index(p + m - lead2, w)) += d_cols(c * s.kernel2 + m, p);
  const Matrix d_h1 = (d_act1.array() * (1.0 - cache.act1.array().square())).matrix();

  for (Eigen::Index c = 0; c < s.channels1; ++c)
    for (Eigen::Index m = 0; m < s.kernel1; ++m) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < w; ++p) acc += d_h1(c, p) * cache.input(detail::wrap_index(p + m - lead1, w));
      grad.conv1_w(c, m) += acc;
    }
  grad.conv1_b.col(0) += d_h1.rowwise().sum();
}

// ---------------------------------------------------------------------------
// Detection-based features

struct Detection {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 0.0;

  double confident_area() const { return w * h * confidence; }
};

using DetectionSet = std::vector<Detection>;

inline constexpr int kDetectionFeatureDim = 9;

/// Nine-entry summary of a detection set, sorted by confident area s = w*h*c:
/// (x, y, s) of the largest box, the s-weighted mean (x, y) and mean s of the
/// three largest, and the same over all boxes. Empty sets map to zero.
inline Eigen::Matrix<double, 9, 1> detection_features(const DetectionSet& dets) {
  Eigen::Matrix<double, 9, 1> f = Eigen::Matrix<double, 9, 1>::Zero();
  if (dets.empty()) return f;
  DetectionSet sorted = dets;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Detection& a, const Detection& b) { return a.confident_area() > b.confident_area(); });

  auto summarize = [&](std::size_t count, int offset) {
    double sx = 0.0, sy = 0.0, ss = 0.0, px = 0.0, py = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double s = sorted[k].confident_area();
      sx += sorted[k].x * s;
      sy += sorted[k].y * s;
      ss += s;
      px += sorted[k].x;
      py += sorted[k].y;
    }
    const double n = static_cast<double>(count);
    // All-zero areas leave the weighted mean undefined; fall back to the plain mean.
    f(offset) = ss > 0.0 ? sx / ss : px / n;
    f(offset + 1) = ss > 0.0 ? sy / ss : py / n;
    f(offset + 2) = ss / n;
  };

  f(0) = sorted[0].x;
  f(1) = sorted[0].y;
  f(2) = sorted[0].confident_area();
  summarize(std::min<std::size_t>(3, sorted.size()), 3);
  summarize(sorted.size(), 6);
  return f;
}

struct CameraConfig {
  double rho_vis = 0.5;
  double max_range = 5.0;
  double box_scale = 0.1;  // normalized box side at d = rho_vis
};

/// Ideal detector: one box per agent within range, centred on its normalized
/// bearing (x in [0,1), y = 0.5), side box_scale * rho_vis / d, confidence 1.
inline DetectionSet synthesize_detections(const SwarmState& state, std::size_t agent, const CameraConfig& camera) {
  DetectionSet out;
  const auto i = static_cast<Eigen::Index>(agent);
  for (Eigen::Index j = 0; j < state.positions.rows(); ++j) {
    if (j == i) continue;
    const Vec2 rel = state.positions.row(j).transpose() - state.positions.row(i).transpose();
    const double d = rel.norm();
    if (d == 0.0 || d > camera.max_range) continue;
    const double side = camera.box_scale * camera.rho_vis / d;
    const double bearing = detail::wrap_angle(std::atan2(rel.y(), rel.x()));
    out.push_back({bearing / (2.0 * std::numbers::pi), 0.5, side, side, 1.0});
  }
  return out;
}

inline Matrix detection_feature_matrix(const SwarmState& state, const CameraConfig& camera) {
  Matrix x(static_cast<Eigen::Index>(state.size()), kDetectionFeatureDim);
  for (std::size_t i = 0; i < state.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = detection_features(synthesize_detections(state, i, camera)).transpose();
  }
  return x;
}

}  // namespace vgai
