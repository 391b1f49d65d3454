#pragma once

#include <deque>
#include <random>
#include <string>
#include <vector>

#include "vgai/comm_graph.hpp"
#include "vgai/types.hpp"

namespace vgai {

enum class Activation { identity, relu, tanh };

inline Matrix activate(const Matrix& x, Activation a) {
  switch (a) {
    case Activation::relu: return x.cwiseMax(0.0);
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::identity: break;
  }
  return x;
}

/// d(activation)/d(pre) expressed through the activation output `y`.
inline Matrix activation_slope(const Matrix& y, Activation a) {
  switch (a) {
    case Activation::relu: return (y.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - y.array().square()).matrix();
    case Activation::identity: break;
  }
  return Matrix::Ones(y.rows(), y.cols());
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// Delayed shift register

/// Running products of a time-delayed graph filter.
///
/// After advance(S(t), Y(t)), block k holds S(t) S(t-1) ... S(t-k+1) Y(t-k).
/// Each advance performs one neighbour exchange per block, so the register
/// is what a single agent maintains locally; signals before the first
/// advance are zero.
class ShiftRegister {
 public:
  explicit ShiftRegister(int taps = 1) : taps_(taps) {
    if (taps < 1) throw ConfigError("filter taps K must be >= 1");
  }

  void advance(const GraphSnapshot& snapshot, const Matrix& signal) {
    if (blocks_.empty()) blocks_.assign(static_cast<std::size_t>(taps_), Matrix::Zero(signal.rows(), signal.cols()));
    if (signal.rows() != blocks_[0].rows() || signal.cols() != blocks_[0].cols()) {
      throw DimensionError("ShiftRegister: signal shape changed");
    }
    for (int k = taps_ - 1; k >= 1; --k) {
      blocks_[static_cast<std::size_t>(k)] = graph_shift(snapshot, blocks_[static_cast<std::size_t>(k - 1)]);
    }
    blocks_[0] = signal;
  }

  int taps() const { return taps_; }
  bool empty() const { return blocks_.empty(); }
  const Matrix& block(int k) const { return blocks_.at(static_cast<std::size_t>(k)); }
  const std::vector<Matrix>& blocks() const { return blocks_; }

 private:
  int taps_;
  std::vector<Matrix> blocks_;
};

/// sum_k block_k * taps[k] for a register already advanced to time t.
inline Matrix graph_filter(const ShiftRegister& reg, const std::vector<Matrix>& taps) {
  if (static_cast<int>(taps.size()) != reg.taps()) throw DimensionError("graph_filter: tap count mismatch");
  if (reg.empty()) throw DimensionError("graph_filter: register never advanced");
  Matrix out = Matrix::Zero(reg.block(0).rows(), taps[0].cols());
  for (int k = 0; k < reg.taps(); ++k) {
    const auto& t = taps[static_cast<std::size_t>(k)];
    if (t.rows() != reg.block(k).cols() || t.cols() != out.cols()) throw DimensionError("graph_filter: tap shape");
    out.noalias() += reg.block(k) * t;
  }
  return out;
}

/// S(t) ... S(t-k+1) Y(t-k) evaluated from explicit histories.
///
/// `signals[d]` and `gsos[d]` hold Y(t-d) and S(t-d); entries beyond the end
/// of either history count as zero signals.
inline Matrix delayed_product(const std::vector<const Matrix*>& signals,
                              const std::vector<const GraphSnapshot*>& gsos, int k) {
  const auto kk = static_cast<std::size_t>(k);
  if (kk >= signals.size() || signals[kk] == nullptr) return Matrix();
  Matrix p = *signals[kk];
  for (int d = k - 1; d >= 0; --d) {
    const auto* s = static_cast<std::size_t>(d) < gsos.size() ? gsos[static_cast<std::size_t>(d)] : nullptr;
    if (s == nullptr) return Matrix();
    p = graph_shift(*s, p);
  }
  return p;
}

/// Time-delayed graph convolution from explicit histories (newest first).
inline Matrix graph_filter(const std::vector<const Matrix*>& signals, const std::vector<const GraphSnapshot*>& gsos,
                           const std::vector<Matrix>& taps) {
  if (signals.empty() || signals[0] == nullptr) throw DimensionError("graph_filter: empty signal history");
  Matrix out = Matrix::Zero(signals[0]->rows(), taps.at(0).cols());
  for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
    const Matrix p = delayed_product(signals, gsos, k);
    if (p.size() == 0) continue;
    if (p.cols() != taps[static_cast<std::size_t>(k)].rows()) throw DimensionError("graph_filter: tap shape");
    out.noalias() += p * taps[static_cast<std::size_t>(k)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// History buffer and aggregation sequence

/// Last K (X, S) pairs plus the running shifted products of Z^d(t).
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int taps) : register_(taps) {}

  void push(const Matrix& features, const GraphSnapshot& snapshot) {
    if (!features.allFinite()) throw NonFiniteError("HistoryBuffer: non-finite features");
    register_.advance(snapshot, features);
    history_.push_front({features, snapshot});
    while (static_cast<int>(history_.size()) > register_.taps()) history_.pop_back();
  }

  int taps() const { return register_.taps(); }
  std::size_t size() const { return history_.size(); }
  const ShiftRegister& shifts() const { return register_; }
  const Matrix& features(std::size_t delay) const { return history_.at(delay).features; }
  const GraphSnapshot& snapshot(std::size_t delay) const { return history_.at(delay).snapshot; }

 private:
  struct Entry {
    Matrix features;
    GraphSnapshot snapshot;
  };
  ShiftRegister register_;
  std::deque<Entry> history_;
};

/// Z^d(t) = [X(t), S(t)X(t-1), ..., S(t)...S(t-K+2) X(t-K+1)] as an N x KF matrix.
inline Matrix dagnn_aggregate(const HistoryBuffer& buffer) {
  if (buffer.size() == 0) throw DimensionError("dagnn_aggregate: empty history");
  const auto& blocks = buffer.shifts().blocks();
  const Eigen::Index n = blocks[0].rows();
  const Eigen::Index f = blocks[0].cols();
  Matrix z(n, f * static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t k = 0; k < blocks.size(); ++k) z.middleCols(static_cast<Eigen::Index>(k) * f, f) = blocks[k];
  return z;
}

// ---------------------------------------------------------------------------
// Per-node multilayer perceptron (DAGNN readout)

struct DagnnParams {
  int taps = 4;       // K
  int features = 6;   // F
  Activation hidden_activation = Activation::relu;
  std::vector<Matrix> weights;  // layer l: F_l x F_{l-1}
  std::vector<Matrix> biases;   // layer l: F_l x 1

  int input_dim() const { return taps * features; }
  std::size_t layers() const { return weights.size(); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (std::size_t l = 0; l < self.weights.size(); ++l) {
      f("dagnn.w" + std::to_string(l), self.weights[l]);
      f("dagnn.b" + std::to_string(l), self.biases[l]);
    }
  }
};

inline DagnnParams make_dagnn(int taps, int features, const std::vector<int>& hidden, Activation act,
                              std::mt19937_64* rng) {
  if (taps < 1) throw ConfigError("K must be >= 1");
  if (features < 1) throw ConfigError("F must be >= 1");
  DagnnParams p;
  p.taps = taps;
  p.features = features;
  p.hidden_activation = act;
  std::vector<int> dims{taps * features};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2);
  for (std::size_t l = 1; l < dims.size(); ++l) {
    p.weights.push_back(Matrix::Zero(dims[l], dims[l - 1]));
    p.biases.push_back(Matrix::Zero(dims[l], 1));
    if (rng) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l - 1]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto* m : {&p.weights.back(), &p.biases.back()})
        for (Eigen::Index c = 0; c < m->cols(); ++c)
          for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) = u(*rng);
    }
  }
  return p;
}

/// Activations of every layer for a batch of rows (layer 0 is the input).
struct MlpCache {
  std::vector<Matrix> outputs;
};

/// Row-wise forward pass: each row of `z` is one agent's aggregation sequence.
inline Matrix dagnn_forward_rows(const Matrix& z, const DagnnParams& params, MlpCache* cache = nullptr) {
  if (z.cols() != params.input_dim()) {
    throw DimensionError("dagnn_forward: input width " + std::to_string(z.cols()) + ", expected " +
                         std::to_string(params.input_dim()));
  }
  Matrix a = z;
  if (cache) cache->outputs.assign(1, a);
  for (std::size_t l = 0; l < params.layers(); ++l) {
    Matrix pre = a * params.weights[l].transpose();
    pre.rowwise() += params.biases[l].col(0).transpose();
    const bool last = l + 1 == params.layers();
    a = last ? pre : activate(pre, params.hidden_activation);
    if (cache) cache->outputs.push_back(a);
  }
  return a;
}

/// NN_Theta applied to a single agent's aggregation row; output is unsaturated.
inline Vec2 dagnn_forward(const Vector& z_i, const DagnnParams& params) {
  const Matrix out = dagnn_forward_rows(z_i.transpose(), params);
  return out.row(0).transpose();
}

/// Accumulates parameter gradients into `grad`; returns d(loss)/d(input rows).
inline Matrix dagnn_backward(const MlpCache& cache, const Matrix& d_out, const DagnnParams& params,
                             DagnnParams& grad) {
  Matrix d = d_out;
  for (std::size_t l = params.layers(); l-- > 0;) {
    const bool last = l + 1 == params.layers();
    if (!last) d = (d.array() * activation_slope(cache.outputs[l + 1], params.hidden_activation).array()).matrix();
    grad.weights[l].noalias() += d.transpose() * cache.outputs[l];
    grad.biases[l].col(0) += d.colwise().sum().transpose();
    d = d * params.weights[l];
  }
  return d;
}

// ---------------------------------------------------------------------------
// Graph recurrent network

struct GrnnParams {
  int taps = 4;      // K
  int features = 6;  // F
  int hidden = 32;   // H
  int outputs = 2;   // G
  std::vector<Matrix> a_taps;  // F x H
  std::vector<Matrix> b_taps;  // H x H
  std::vector<Matrix> c_taps;  // H x G
  Matrix hidden_bias;          // H x 1
  Matrix output_bias;          // G x 1

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (std::size_t k = 0; k < self.a_taps.size(); ++k) f("grnn.a" + std::to_string(k), self.a_taps[k]);
    for (std::size_t k = 0; k < self.b_taps.size(); ++k) f("grnn.b" + std::to_string(k), self.b_taps[k]);
    for (std::size_t k = 0; k < self.c_taps.size(); ++k) f("grnn.c" + std::to_string(k), self.c_taps[k]);
    f("grnn.hidden_bias", self.hidden_bias);
    f("grnn.output_bias", self.output_bias);
  }
};

inline GrnnParams make_grnn(int taps, int features, int hidden, std::mt19937_64* rng) {
  if (taps < 1) throw ConfigError("K must be >= 1");
  if (features < 1 || hidden < 1) throw ConfigError("GRNN dimensions must be positive");
  GrnnParams p;
  p.taps = taps;
  p.features = features;
  p.hidden = hidden;
  p.outputs = 2;
  auto fill = [&](Matrix& m, int fan_in) {
    if (!rng) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(*rng);
  };
  for (int k = 0; k < taps; ++k) {
    p.a_taps.push_back(Matrix::Zero(features, hidden));
    fill(p.a_taps.back(), features * taps);
  }
  for (int k = 0; k < taps; ++k) {
    p.b_taps.push_back(Matrix::Zero(hidden, hidden));
    fill(p.b_taps.back(), hidden * taps);
  }
  for (int k = 0; k < taps; ++k) {
    p.c_taps.push_back(Matrix::Zero(hidden, 2));
    fill(p.c_taps.back(), hidden * taps);
  }
  p.hidden_bias = Matrix::Zero(hidden, 1);
  p.output_bias = Matrix::Zero(2, 1);
  fill(p.hidden_bias, features * taps);
  fill(p.output_bias, hidden * taps);
  return p;
}

/// Z^r(t) plus the delayed-filter registers each agent keeps for A, B and C.
class HiddenState {
 public:
  explicit HiddenState(int taps) : input_(taps), previous_(taps), current_(taps) {}

  const Matrix& values() const { return hidden_; }
  bool started() const { return hidden_.size() != 0; }

 private:
  friend Matrix grnn_step(const Matrix&, HiddenState&, const GraphSnapshot&, const GrnnParams&);
  friend Matrix grnn_output(const HiddenState&, const GrnnParams&);

  ShiftRegister input_;     // X(t)
  ShiftRegister previous_;  // Z(t-1)
  ShiftRegister current_;   // Z(t)
  Matrix hidden_;
};

/// Z^r(t) = tanh(A(X;S) + B(Z^r(t-1);S) + bias); returns the new hidden state.
inline Matrix grnn_step(const Matrix& features, HiddenState& state, const GraphSnapshot& snapshot,
                        const GrnnParams& params) {
  const Eigen::Index n = features.rows();
  if (features.cols() != params.features) throw DimensionError("grnn_step: feature width");
  if (static_cast<Eigen::Index>(snapshot.size()) != n) throw DimensionError("grnn_step: graph size");
  if (!state.started()) state.hidden_ = Matrix::Zero(n, params.hidden);
  if (state.hidden_.rows() != n) throw DimensionError("grnn_step: team size changed mid-rollout");
  state.input_.advance(snapshot, features);
  state.previous_.advance(snapshot, state.hidden_);
  Matrix pre = graph_filter(state.input_, params.a_taps) + graph_filter(state.previous_, params.b_taps);
  pre.rowwise() += params.hidden_bias.col(0).transpose();
  state.hidden_ = pre.array().tanh().matrix();
  state.current_.advance(snapshot, state.hidden_);
  return state.hidden_;
}

/// U(t) = C(Z^r(t);S) + bias, unsaturated. Requires a preceding grnn_step.
inline Matrix grnn_output(const HiddenState& state, const GrnnParams& params) {
  if (!state.started()) throw DimensionError("grnn_output: no hidden state yet");
  Matrix u = graph_filter(state.current_, params.c_taps);
  u.rowwise() += params.output_bias.col(0).transpose();
  return u;
}

}  // namespace vgai
