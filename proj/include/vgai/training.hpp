#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vgai/model.hpp"
#include "vgai/rollout.hpp"
#include "vgai/seeding.hpp"

namespace vgai {

// ---------------------------------------------------------------------------
// Loss

/// (1/N) sum_i |u_hat_i - u*_i|_1
inline double imitation_loss(const Matrix& predicted, const Matrix& expert) {
  if (predicted.rows() != expert.rows() || predicted.cols() != expert.cols()) {
    throw DimensionError("imitation_loss: shape mismatch");
  }
  return (predicted - expert).cwiseAbs().sum() / static_cast<double>(predicted.rows());
}

/// Subgradient of imitation_loss w.r.t. `predicted`; zero where the residual is zero.
inline Matrix imitation_loss_gradient(const Matrix& predicted, const Matrix& expert) {
  const Matrix r = predicted - expert;
  const double inv_n = 1.0 / static_cast<double>(predicted.rows());
  return r.unaryExpr([inv_n](double x) { return x > 0.0 ? inv_n : (x < 0.0 ? -inv_n : 0.0); });
}

// ---------------------------------------------------------------------------
// Parameter tensor helpers

inline std::vector<Matrix*> tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  ModelParams::visit(p, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

inline std::vector<const Matrix*> tensors(const ModelParams& p) {
  std::vector<const Matrix*> out;
  ModelParams::visit(p, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

inline double squared_norm(const ModelParams& p) {
  double s = 0.0;
  for (const auto* m : tensors(p)) s += m->squaredNorm();
  return s;
}

inline void axpy(double a, const ModelParams& x, ModelParams& y) {
  auto xs = tensors(x);
  auto ys = tensors(y);
  for (std::size_t i = 0; i < xs.size(); ++i) *ys[i] += a * *xs[i];
}

// ---------------------------------------------------------------------------
// Truncated backpropagation through time

struct WindowGradient {
  double loss = 0.0;
  ModelParams grad;
};

/// Hidden states Z^r(t) of the GRNN along a recorded trajectory, produced by
/// the operational (incremental) forward pass.
inline std::vector<Matrix> grnn_hidden_states(const ModelParams& params, const Trajectory& traj) {
  if (params.spec.controller != ControllerKind::grnn) throw ConfigError("grnn_hidden_states: not a GRNN model");
  HiddenState hs(params.taps());
  std::vector<Matrix> out;
  out.reserve(traj.size());
  for (const auto& rec : traj.steps) {
    out.push_back(grnn_step(feature_matrix(rec.inputs, params), hs, rec.graph, params.grnn));
  }
  return out;
}

namespace detail {

class WindowEngine {
 public:
  WindowEngine(const ModelParams& params, const Trajectory& traj, std::size_t start,
               const std::vector<Matrix>* carried)
      : p_(params), traj_(traj), start_(static_cast<long>(start)), len_(params.taps()), carried_(carried) {
    if (start + static_cast<std::size_t>(len_) > traj.size()) {
      throw DimensionError("bptt: incomplete window at step " + std::to_string(start) + " of a " +
                           std::to_string(traj.size()) + "-step trajectory");
    }
    n_ = static_cast<Eigen::Index>(traj.steps[start].state.size());
  }

  WindowGradient run() {
    WindowGradient out;
    out.grad = zeros_like(p_);
    const long first = std::max(0L, start_ - (len_ - 1));
    for (long tau = first; tau < start_ + len_; ++tau) {
      const bool inside = tau >= start_ && p_.has_encoder();
      auto& caches = enc_cache_[tau];
      x_[tau] = feature_matrix(traj_.steps[static_cast<std::size_t>(tau)].inputs, p_, inside ? &caches : nullptr);
    }
    if (p_.spec.controller == ControllerKind::dagnn) {
      dagnn(out);
    } else {
      grnn(out);
    }
    if (p_.has_encoder()) encoder_backward(out.grad);
    return out;
  }

 private:
  const GraphSnapshot& gso(long t) const { return traj_.steps[static_cast<std::size_t>(t)].graph; }

  // S(t) ... S(t-k+1) Y(t-k); empty matrix when t-k precedes the trajectory.
  Matrix shifted(long t, int k, const Matrix* y) const {
    if (y == nullptr) return Matrix();
    Matrix p = *y;
    for (int d = k - 1; d >= 0; --d) p = graph_shift(gso(t - d), p);
    return p;
  }

  // (S(t) ... S(t-k+1))^T g
  Matrix shifted_adjoint(long t, int k, Matrix g) const {
    for (int d = 0; d < k; ++d) g = graph_shift_transpose(gso(t - d), g);
    return g;
  }

  const Matrix* x_at(long tau) const {
    if (tau < 0) return nullptr;
    return &x_.at(tau);
  }

  void add_dx(long tau, const Matrix& g) {
    if (!p_.has_encoder() || tau < start_) return;
    auto it = dx_.find(tau);
    if (it == dx_.end()) {
      dx_.emplace(tau, g);
    } else {
      it->second += g;
    }
  }

  const MatrixN2& expert(long t) const { return traj_.steps[static_cast<std::size_t>(t)].expert; }

  void dagnn(WindowGradient& out) {
    const int f = p_.dagnn.features;
    for (long t = start_; t < start_ + len_; ++t) {
      Matrix z = Matrix::Zero(n_, static_cast<Eigen::Index>(len_) * f);
      for (int k = 0; k < len_; ++k) {
        const Matrix b = shifted(t, k, x_at(t - k));
        if (b.size() != 0) z.middleCols(k * f, f) = b;
      }
      MlpCache cache;
      const Matrix pred = dagnn_forward_rows(z, p_.dagnn, &cache);
      out.loss += imitation_loss(pred, expert(t)) / len_;
      const Matrix d_pred = imitation_loss_gradient(pred, expert(t)) / len_;
      const Matrix d_z = dagnn_backward(cache, d_pred, p_.dagnn, out.grad.dagnn);
      for (int k = 0; k < len_; ++k) {
        if (t - k >= start_ && p_.has_encoder()) add_dx(t - k, shifted_adjoint(t, k, d_z.middleCols(k * f, f)));
      }
    }
  }

  const Matrix* z_at(long tau) const {
    if (tau < 0) return nullptr;
    if (tau >= start_) return &z_.at(tau);
    return &carried_z_.at(tau);
  }

  void grnn(WindowGradient& out) {
    const auto& g = p_.grnn;
    const int k_taps = g.taps;
    for (long tau = std::max(0L, start_ - k_taps); tau < start_; ++tau) {
      if (carried_) {
        carried_z_[tau] = carried_->at(static_cast<std::size_t>(tau));
      }
    }
    if (!carried_ && start_ > 0) {
      const auto all = grnn_hidden_states(p_, traj_);
      for (long tau = std::max(0L, start_ - k_taps); tau < start_; ++tau) carried_z_[tau] = all[static_cast<std::size_t>(tau)];
    }

    std::map<long, std::vector<Matrix>> a_prod, b_prod, c_prod;
    std::map<long, Matrix> u;
    for (long t = start_; t < start_ + len_; ++t) {
      Matrix pre = Matrix::Zero(n_, g.hidden);
      auto& ap = a_prod[t];
      auto& bp = b_prod[t];
      for (int k = 0; k < k_taps; ++k) {
        ap.push_back(shifted(t, k, x_at(t - k)));
        bp.push_back(shifted(t, k, z_at(t - 1 - k)));
        if (ap.back().size() != 0) pre.noalias() += ap.back() * g.a_taps[static_cast<std::size_t>(k)];
        if (bp.back().size() != 0) pre.noalias() += bp.back() * g.b_taps[static_cast<std::size_t>(k)];
      }
      pre.rowwise() += g.hidden_bias.col(0).transpose();
      z_[t] = pre.array().tanh().matrix();
      auto& cp = c_prod[t];
      Matrix ut = Matrix::Zero(n_, g.outputs);
      for (int k = 0; k < k_taps; ++k) {
        cp.push_back(shifted(t, k, z_at(t - k)));
        if (cp.back().size() != 0) ut.noalias() += cp.back() * g.c_taps[static_cast<std::size_t>(k)];
      }
      ut.rowwise() += g.output_bias.col(0).transpose();
      out.loss += imitation_loss(ut, expert(t)) / len_;
      u[t] = std::move(ut);
    }

    auto& gg = out.grad.grnn;
    std::map<long, Matrix> dz;
    for (long t = start_; t < start_ + len_; ++t) dz[t] = Matrix::Zero(n_, g.hidden);
    for (long t = start_ + len_ - 1; t >= start_; --t) {
      const Matrix du = imitation_loss_gradient(u[t], expert(t)) / len_;
      gg.output_bias.col(0) += du.colwise().sum().transpose();
      for (int k = 0; k < k_taps; ++k) {
        const auto& c = c_prod[t][static_cast<std::size_t>(k)];
        if (c.size() == 0) continue;
        gg.c_taps[static_cast<std::size_t>(k)].noalias() += c.transpose() * du;
        if (t - k >= start_) dz[t - k] += shifted_adjoint(t, k, du * g.c_taps[static_cast<std::size_t>(k)].transpose());
      }
      const Matrix d_pre = (dz[t].array() * (1.0 - z_[t].array().square())).matrix();
      gg.hidden_bias.col(0) += d_pre.colwise().sum().transpose();
      for (int k = 0; k < k_taps; ++k) {
        const auto& a = a_prod[t][static_cast<std::size_t>(k)];
        if (a.size() != 0) {
          gg.a_taps[static_cast<std::size_t>(k)].noalias() += a.transpose() * d_pre;
          if (p_.has_encoder() && t - k >= start_) {
            add_dx(t - k, shifted_adjoint(t, k, d_pre * g.a_taps[static_cast<std::size_t>(k)].transpose()));
          }
        }
        const auto& b = b_prod[t][static_cast<std::size_t>(k)];
        if (b.size() != 0) {
          gg.b_taps[static_cast<std::size_t>(k)].noalias() += b.transpose() * d_pre;
          if (t - 1 - k >= start_) {
            dz[t - 1 - k] += shifted_adjoint(t, k, d_pre * g.b_taps[static_cast<std::size_t>(k)].transpose());
          }
        }
      }
    }
  }

  void encoder_backward(ModelParams& grad) {
    const int ef = p_.spec.encoder_features;
    const Vector scale = p_.feature_scale.col(0).head(ef);
    for (const auto& [tau, g] : dx_) {
      const auto& caches = enc_cache_.at(tau);
      for (Eigen::Index i = 0; i < n_; ++i) {
        const Vector d_out = (g.row(i).head(ef).transpose().array() * scale.array()).matrix();
        encode_backward(caches[static_cast<std::size_t>(i)], d_out, p_.encoder, grad.encoder);
      }
    }
  }

  const ModelParams& p_;
  const Trajectory& traj_;
  long start_;
  int len_;
  const std::vector<Matrix>* carried_;
  Eigen::Index n_ = 0;
  std::map<long, Matrix> x_;
  std::map<long, std::vector<EncoderCache>> enc_cache_;
  std::map<long, Matrix> dx_;
  std::map<long, Matrix> z_;
  std::map<long, Matrix> carried_z_;
};

}  // namespace detail

/// Loss of the K-step window starting at `start` (mean over its steps) and
/// its exact gradient w.r.t. every active parameter.
///
/// GSO entries are constants. Features before the window and (for the GRNN)
/// hidden states before the window are detached: `carried` supplies Z^r(t)
/// for every step, or they are recomputed from the trajectory start.
inline WindowGradient bptt_gradients(const ModelParams& params, const Trajectory& traj, std::size_t start,
                                     const std::vector<Matrix>* carried = nullptr) {
  return detail::WindowEngine(params, traj, start, carried).run();
}

// ---------------------------------------------------------------------------
// Optimizer

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 40;         // per DAGGer phase
  int batch_size = 8;      // windows per Adam step
  double dagger_beta = 0.33;
  int initial_trajectories = 15;
  int dagger_trajectories = 5;
  int dagger_iterations = 1;
  bool blend_actions = false;
  bool normalize_features = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("training.learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("training Adam factors must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("training.epsilon must be > 0");
    if (epochs < 0) throw ConfigError("training.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (!(dagger_beta >= 0.0 && dagger_beta <= 1.0)) throw ConfigError("training.dagger_beta must lie in [0, 1]");
    if (initial_trajectories < 1) throw ConfigError("training.initial_trajectories must be >= 1");
    if (dagger_trajectories < 0 || dagger_iterations < 0) throw ConfigError("DAGGer counts must be >= 0");
  }
};

class Adam {
 public:
  Adam(const ModelParams& like, const TrainConfig& cfg)
      : m_(zeros_like(like)), v_(zeros_like(like)), cfg_(cfg) {}

  void update(ModelParams& params, const ModelParams& grad) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    auto ps = tensors(params);
    auto gs = tensors(grad);
    auto ms = tensors(m_);
    auto vs = tensors(v_);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      *ms[i] = cfg_.beta1 * *ms[i] + (1.0 - cfg_.beta1) * *gs[i];
      *vs[i] = cfg_.beta2 * *vs[i] + (1.0 - cfg_.beta2) * gs[i]->cwiseAbs2();
      const auto m_hat = ms[i]->array() / c1;
      const auto v_hat = vs[i]->array() / c2;
      ps[i]->array() -= cfg_.learning_rate * m_hat / (v_hat.sqrt() + cfg_.epsilon);
    }
  }

  long steps() const { return step_; }

 private:
  ModelParams m_;
  ModelParams v_;
  TrainConfig cfg_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Datasets and DAGGer

struct Dataset {
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  std::size_t count_phase(int phase) const {
    return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                  [phase](const Trajectory& t) { return t.phase == phase; }));
  }
};

struct CollectResult {
  Dataset data;
  std::vector<std::uint64_t> excluded_seeds;  // rollouts that diverged
  std::size_t expert_steps = 0;
  std::size_t total_steps = 0;

  double expert_fraction() const {
    return total_steps == 0 ? 0.0 : static_cast<double>(expert_steps) / static_cast<double>(total_steps);
  }
};

/// Runs `count` rollouts under beta * expert + (1 - beta) * learner.
///
/// With `learner == nullptr` only the expert acts (the first DAGGer phase).
/// Expert labels are recorded at every step. Diverged rollouts are excluded
/// and reported.
inline CollectResult dagger_collect(const Environment& env, const ModelParams* learner, double beta, int count,
                                    std::uint64_t seed, int phase, const ModelSpec& record_spec,
                                    bool blend = false) {
  CollectResult out;
  for (int r = 0; r < count; ++r) {
    const std::uint64_t init_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(r));
    const SwarmState init = initialize_swarm(env.sim, env.comm, init_seed);
    std::unique_ptr<Controller> controller;
    if (learner == nullptr) {
      controller = std::make_unique<ExpertController>(env.expert);
    } else {
      controller = std::make_unique<MixtureController>(
          std::make_unique<ExpertController>(env.expert),
          std::make_unique<LearnedController>(*learner, env.sim.max_accel), beta,
          derive_seed(seed, 200 + static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(r)), blend);
    }
    Trajectory traj = simulate(init, *controller, env, &record_spec);
    traj.seed = init_seed;
    traj.phase = phase;
    if (traj.diverged) {
      out.excluded_seeds.push_back(init_seed);
      continue;
    }
    for (const auto& rec : traj.steps) out.expert_steps += rec.expert_executed ? 1 : 0;
    out.total_steps += traj.size();
    out.data.trajectories.push_back(std::move(traj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int phase = 0;
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Per-feature scale 1/(median |x| + eps) over the dataset; fixed after phase 0.
inline Matrix feature_scale_from(const Dataset& data, const ModelParams& params) {
  const int f = params.spec.feature_dim();
  Matrix scale = Matrix::Ones(f, 1);
  if (params.spec.perception == PerceptionKind::synthetic) {
    // Encoder outputs are learned; only the proprioceptive columns are rescaled.
    if (!params.spec.own_velocity) return scale;
  }
  ModelParams unit = params;
  unit.feature_scale = Matrix::Ones(f, 1);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(f));
  for (const auto& traj : data.trajectories) {
    for (const auto& rec : traj.steps) {
      Perceived in = rec.inputs;
      if (params.spec.perception == PerceptionKind::synthetic) {
        for (int c = 0; c < 2; ++c)
          for (Eigen::Index i = 0; i < in.own_velocity.rows(); ++i)
            cols[static_cast<std::size_t>(f - 2 + c)].push_back(std::abs(in.own_velocity(i, c)));
        continue;
      }
      const Matrix x = feature_matrix(in, unit);
      for (int c = 0; c < f; ++c)
        for (Eigen::Index i = 0; i < x.rows(); ++i) cols[static_cast<std::size_t>(c)].push_back(std::abs(x(i, c)));
    }
  }
  for (int c = 0; c < f; ++c) {
    auto& v = cols[static_cast<std::size_t>(c)];
    if (v.empty()) continue;
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    const double med = v[v.size() / 2];
    scale(c, 0) = med > 1e-9 ? 1.0 / med : 1.0;
  }
  return scale;
}

/// Adam over shuffled, non-overlapping K-step windows of `data`.
inline std::vector<EpochLog> fit(ModelParams& params, const Dataset& data, const TrainConfig& cfg, int epochs,
                                 int phase, std::mt19937_64& rng, Adam& adam,
                                 const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const int k = params.taps();
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t tr = 0; tr < data.size(); ++tr) {
    const auto len = data.trajectories[tr].size();
    for (std::size_t s = 0; s + static_cast<std::size_t>(k) <= len; s += static_cast<std::size_t>(k)) {
      windows.emplace_back(tr, s);
    }
  }
  if (windows.empty()) throw TrainingError("fit: dataset has no complete window");

  std::vector<EpochLog> log;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<Matrix>> carried(data.size());
    if (params.spec.controller == ControllerKind::grnn) {
      for (std::size_t tr = 0; tr < data.size(); ++tr) carried[tr] = grnn_hidden_states(params, data.trajectories[tr]);
    }
    std::shuffle(windows.begin(), windows.end(), rng);
    double loss_sum = 0.0;
    double norm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < windows.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(windows.size(), b + static_cast<std::size_t>(cfg.batch_size));
      ModelParams grad = zeros_like(params);
      double batch_loss = 0.0;
      for (std::size_t w = b; w < end; ++w) {
        const auto [tr, s] = windows[w];
        const auto* hidden = params.spec.controller == ControllerKind::grnn ? &carried[tr] : nullptr;
        WindowGradient wg = bptt_gradients(params, data.trajectories[tr], s, hidden);
        if (!std::isfinite(wg.loss)) {
          std::ostringstream msg;
          msg << "non-finite loss in phase " << phase << " epoch " << epoch << " window (trajectory " << tr
              << ", step " << s << "); last grad norm " << (batches ? norm_sum / batches : 0.0);
          throw TrainingError(msg.str());
        }
        batch_loss += wg.loss;
        axpy(1.0, wg.grad, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - b);
      for (auto* m : tensors(grad)) *m *= scale;
      const double gnorm = std::sqrt(squared_norm(grad));
      if (!std::isfinite(gnorm)) {
        throw TrainingError("non-finite gradient norm in phase " + std::to_string(phase) + " epoch " +
                            std::to_string(epoch) + " at window batch " + std::to_string(b));
      }
      adam.update(params, grad);
      loss_sum += batch_loss;
      norm_sum += gnorm;
      ++batches;
    }
    EpochLog entry;
    entry.phase = phase;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(windows.size());
    entry.grad_norm = norm_sum / static_cast<double>(batches);
    entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  Dataset dataset;
  std::vector<std::uint64_t> excluded_seeds;
};

/// Imitation learning with DAGGer: an expert-only phase followed by
/// `dagger_iterations` mixed-policy phases, each training on the union.
inline TrainResult train(const Environment& env, const ModelSpec& spec, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  env.sim.validate();
  env.expert.validate();
  TrainResult result;
  result.params = make_model(spec, derive_seed(cfg.seed, 1, 0));
  std::mt19937_64 rng(derive_seed(cfg.seed, 2, 0));

  CollectResult first = dagger_collect(env, nullptr, 1.0, cfg.initial_trajectories, cfg.seed, 0, result.params.spec);
  result.dataset = std::move(first.data);
  result.excluded_seeds = first.excluded_seeds;
  if (result.dataset.size() == 0) throw TrainingError("no usable expert trajectories");
  if (cfg.normalize_features) result.params.feature_scale = feature_scale_from(result.dataset, result.params);

  Adam adam(result.params, cfg);
  auto log = fit(result.params, result.dataset, cfg, cfg.epochs, 0, rng, adam, on_epoch);
  result.log.insert(result.log.end(), log.begin(), log.end());

  for (int n = 1; n <= cfg.dagger_iterations; ++n) {
    CollectResult more = dagger_collect(env, &result.params, cfg.dagger_beta, cfg.dagger_trajectories, cfg.seed, n,
                                        result.params.spec, cfg.blend_actions);
    result.excluded_seeds.insert(result.excluded_seeds.end(), more.excluded_seeds.begin(), more.excluded_seeds.end());
    for (auto& t : more.data.trajectories) result.dataset.trajectories.push_back(std::move(t));
    log = fit(result.params, result.dataset, cfg, cfg.epochs, n, rng, adam, on_epoch);
    result.log.insert(result.log.end(), log.begin(), log.end());
  }
  return result;
}

}  // namespace vgai
