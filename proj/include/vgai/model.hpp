#pragma once

#include <optional>
#include <random>
#include <string>

#include "vgai/comm_graph.hpp"
#include "vgai/controllers.hpp"
#include "vgai/dynamics.hpp"
#include "vgai/perception.hpp"

namespace vgai {

enum class ControllerKind { dagnn, grnn };
enum class PerceptionKind { exact, synthetic, detection };

inline std::string to_string(ControllerKind k) { return k == ControllerKind::dagnn ? "dagnn" : "grnn"; }

inline std::string to_string(PerceptionKind k) {
  switch (k) {
    case PerceptionKind::exact: return "exact";
    case PerceptionKind::synthetic: return "synthetic";
    case PerceptionKind::detection: return "detection";
  }
  return "exact";
}

inline ControllerKind controller_from_string(const std::string& s) {
  if (s == "dagnn") return ControllerKind::dagnn;
  if (s == "grnn") return ControllerKind::grnn;
  throw ConfigError("unknown controller '" + s + "' (expected dagnn|grnn)");
}

inline PerceptionKind perception_from_string(const std::string& s) {
  if (s == "exact") return PerceptionKind::exact;
  if (s == "synthetic") return PerceptionKind::synthetic;
  if (s == "detection") return PerceptionKind::detection;
  throw ConfigError("unknown perception mode '" + s + "' (expected exact|synthetic|detection)");
}

/// Architecture knobs for a learned controller and its state estimator.
struct ModelSpec {
  ControllerKind controller = ControllerKind::grnn;
  PerceptionKind perception = PerceptionKind::exact;
  int taps = 4;                          // K
  std::vector<int> dagnn_hidden{64, 64};
  Activation dagnn_activation = Activation::relu;
  int grnn_hidden = 32;                  // H
  int encoder_features = 6;              // encoder output width
  bool own_velocity = true;              // append v_i to learned-perception features
  EncoderShape encoder{};
  ViewConfig view{};
  CameraConfig camera{};

  int feature_dim() const {
    switch (perception) {
      case PerceptionKind::exact: return kExactFeatureDim;
      case PerceptionKind::synthetic: return encoder_features + (own_velocity ? 2 : 0);
      case PerceptionKind::detection: return kDetectionFeatureDim + (own_velocity ? 2 : 0);
    }
    return kExactFeatureDim;
  }
};

/// Every learnable weight of a controller plus its (optional) encoder.
struct ModelParams {
  ModelSpec spec;
  DagnnParams dagnn;
  GrnnParams grnn;
  EncoderParams encoder;
  Matrix feature_scale;  // F x 1, fixed per-feature input scaling

  int taps() const { return spec.taps; }
  bool has_encoder() const { return spec.perception == PerceptionKind::synthetic; }

  /// Visits the tensors that take part in the forward pass.
  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    if (self.spec.controller == ControllerKind::dagnn) {
      DagnnParams::visit(self.dagnn, f);
    } else {
      GrnnParams::visit(self.grnn, f);
    }
    if (self.has_encoder()) EncoderParams::visit(self.encoder, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit(*this, [&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
};

inline ModelParams make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.taps < 1) throw ConfigError("controller.K must be >= 1");
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.spec = spec;
  p.spec.encoder.outputs = spec.encoder_features;
  p.spec.encoder.bins = spec.view.bins;
  const int f = spec.feature_dim();
  if (spec.controller == ControllerKind::dagnn) {
    p.dagnn = make_dagnn(spec.taps, f, spec.dagnn_hidden, spec.dagnn_activation, &rng);
  } else {
    p.grnn = make_grnn(spec.taps, f, spec.grnn_hidden, &rng);
  }
  if (p.has_encoder()) p.encoder = init_encoder(p.spec.encoder, rng);
  p.feature_scale = Matrix::Ones(f, 1);
  return p;
}

/// Same structure as `params`, all entries zero.
inline ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  ModelParams::visit(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

/// Raw per-agent inputs an estimator consumes at one time step.
struct Perceived {
  Matrix exact;                       // N x 6, always filled
  std::vector<Observation> panoramas; // synthetic mode only
  Matrix detections;                  // detection mode only, N x 9
  MatrixN2 own_velocity;              // proprioceptive v_i
};

inline Perceived perceive(const SwarmState& state, const GraphSnapshot& snapshot, const ModelSpec& spec,
                          const std::optional<Degradation>& degradation = std::nullopt,
                          std::mt19937_64* rng = nullptr) {
  Perceived p;
  p.exact = exact_feature_matrix(state, snapshot);
  p.own_velocity = state.velocities;
  if (spec.perception == PerceptionKind::synthetic) {
    p.panoramas.reserve(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
      Observation obs = render_observation(state, i, spec.view);
      if (degradation) {
        if (!rng) throw ConfigError("degradation requires an RNG");
        obs = degrade(obs, *degradation, *rng);
      }
      p.panoramas.push_back(std::move(obs));
    }
  } else if (spec.perception == PerceptionKind::detection) {
    p.detections = detection_feature_matrix(state, spec.camera);
  }
  return p;
}

/// X(t) from perceived inputs; fills `caches` (one per agent) when given.
inline Matrix feature_matrix(const Perceived& in, const ModelParams& params,
                             std::vector<EncoderCache>* caches = nullptr) {
  const auto& spec = params.spec;
  const Eigen::Index n = in.exact.rows();
  Matrix x;
  switch (spec.perception) {
    case PerceptionKind::exact: x = in.exact; break;
    case PerceptionKind::synthetic: {
      if (static_cast<Eigen::Index>(in.panoramas.size()) != n) throw DimensionError("feature_matrix: missing panoramas");
      x.resize(n, spec.feature_dim());
      if (caches) caches->assign(static_cast<std::size_t>(n), EncoderCache{});
      for (Eigen::Index i = 0; i < n; ++i) {
        auto* cache = caches ? &(*caches)[static_cast<std::size_t>(i)] : nullptr;
        x.row(i).head(spec.encoder_features) = encode(in.panoramas[static_cast<std::size_t>(i)], params.encoder, cache).transpose();
      }
      if (spec.own_velocity) x.rightCols(2) = in.own_velocity;
      break;
    }
    case PerceptionKind::detection: {
      x.resize(n, spec.feature_dim());
      x.leftCols(kDetectionFeatureDim) = in.detections;
      if (spec.own_velocity) x.rightCols(2) = in.own_velocity;
      break;
    }
  }
  return (x.array().rowwise() * params.feature_scale.col(0).transpose().array()).matrix();
}

/// Runtime state of a learned decentralized controller during one rollout.
///
/// Each call consumes only the agents' own perceived inputs and one
/// graph_shift exchange per filter tap.
class LearnerPolicy {
 public:
  explicit LearnerPolicy(const ModelParams& params, std::optional<Degradation> degradation = std::nullopt,
                         std::uint64_t noise_seed = 0)
      : params_(params),
        buffer_(params.taps()),
        hidden_(params.taps()),
        degradation_(std::move(degradation)),
        rng_(noise_seed) {}

  /// Unsaturated control from already-perceived inputs.
  Matrix act(const Perceived& inputs, const GraphSnapshot& snapshot) {
    const Matrix x = feature_matrix(inputs, params_);
    if (params_.spec.controller == ControllerKind::dagnn) {
      buffer_.push(x, snapshot);
      return dagnn_forward_rows(dagnn_aggregate(buffer_), params_.dagnn);
    }
    grnn_step(x, hidden_, snapshot, params_.grnn);
    return grnn_output(hidden_, params_.grnn);
  }

  Matrix act(const SwarmState& state, const GraphSnapshot& snapshot) {
    const Perceived in = perceive(state, snapshot, params_.spec, degradation_, &rng_);
    return act(in, snapshot);
  }

  const ModelParams& params() const { return params_; }

 private:
  const ModelParams& params_;
  HistoryBuffer buffer_;
  HiddenState hidden_;
  std::optional<Degradation> degradation_;
  std::mt19937_64 rng_;
};

}  // namespace vgai
