#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vgai/comm_graph.hpp"
#include "vgai/dynamics.hpp"
#include "vgai/expert.hpp"
#include "vgai/model.hpp"

namespace vgai {

/// Everything needed to simulate one rollout besides the controller.
struct Environment {
  SimConfig sim{};
  CommModel comm = DiskModel{1.5};
  ExpertConfig expert{};
};

/// One simulated step: the state at t, its graph, what agents perceived,
/// the expert label and the action actually executed.
struct StepRecord {
  SwarmState state;
  GraphSnapshot graph;
  Perceived inputs;
  MatrixN2 expert;
  MatrixN2 executed;
  bool expert_executed = true;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::uint64_t seed = 0;
  int phase = 0;
  bool diverged = false;
  std::string controller;

  std::size_t size() const { return steps.size(); }
};

/// Decentralized or centralized control law driven step by step.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  /// Saturated accelerations for every agent at the current step.
  virtual MatrixN2 control(const SwarmState& state, const GraphSnapshot& snapshot) = 0;
};

class ExpertController final : public Controller {
 public:
  explicit ExpertController(ExpertConfig cfg) : cfg_(cfg) {}
  std::string name() const override { return "expert"; }
  MatrixN2 control(const SwarmState& state, const GraphSnapshot&) override { return centralized_control(state, cfg_); }

 private:
  ExpertConfig cfg_;
};

class PositionBasedController final : public Controller {
 public:
  explicit PositionBasedController(ExpertConfig cfg) : cfg_(cfg) {}
  std::string name() const override { return "position-based"; }
  MatrixN2 control(const SwarmState& state, const GraphSnapshot& snapshot) override {
    return position_based_control(state, snapshot, cfg_);
  }

 private:
  ExpertConfig cfg_;
};

class ZeroController final : public Controller {
 public:
  std::string name() const override { return "zero"; }
  MatrixN2 control(const SwarmState& state, const GraphSnapshot&) override {
    return MatrixN2::Zero(state.positions.rows(), 2);
  }
};

class LearnedController final : public Controller {
 public:
  LearnedController(const ModelParams& params, double max_accel, std::optional<Degradation> degradation = std::nullopt,
                    std::uint64_t noise_seed = 0)
      : policy_(params, std::move(degradation), noise_seed), max_accel_(max_accel) {}
  std::string name() const override {
    return to_string(policy_.params().spec.controller) + "/" + to_string(policy_.params().spec.perception);
  }
  MatrixN2 control(const SwarmState& state, const GraphSnapshot& snapshot) override {
    const Matrix u = policy_.act(state, snapshot);
    return saturate(MatrixN2(u), max_accel_);
  }

 private:
  LearnerPolicy policy_;
  double max_accel_;
};

/// Executes the expert with probability beta at each step, else the learner.
///
/// Both policies are stepped every interval so the learner's delayed
/// registers stay consistent with the executed trajectory.
class MixtureController final : public Controller {
 public:
  MixtureController(std::unique_ptr<Controller> expert, std::unique_ptr<Controller> learner, double beta,
                    std::uint64_t seed, bool blend = false)
      : expert_(std::move(expert)), learner_(std::move(learner)), beta_(beta), blend_(blend), rng_(seed) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("DAGGer beta must lie in [0, 1]");
  }
  std::string name() const override { return "mixture"; }
  MatrixN2 control(const SwarmState& state, const GraphSnapshot& snapshot) override {
    const MatrixN2 ue = expert_->control(state, snapshot);
    const MatrixN2 ul = learner_->control(state, snapshot);
    if (blend_) {
      last_expert_ = false;
      return beta_ * ue + (1.0 - beta_) * ul;
    }
    last_expert_ = coin_(rng_) < beta_;
    return last_expert_ ? ue : ul;
  }
  bool last_was_expert() const { return last_expert_; }

 private:
  std::unique_ptr<Controller> expert_;
  std::unique_ptr<Controller> learner_;
  double beta_;
  bool blend_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> coin_{0.0, 1.0};
  bool last_expert_ = true;
};

/// Runs `controller` from `initial` for env.sim.horizon steps.
///
/// Every record carries the expert label. `record_spec` selects which raw
/// perception inputs are stored for training; by default only exact features.
/// A non-finite state stops the rollout and marks it diverged.
inline Trajectory simulate(const SwarmState& initial, Controller& controller, const Environment& env,
                           const ModelSpec* record_spec = nullptr) {
  Trajectory traj;
  traj.controller = controller.name();
  ModelSpec exact_only;
  exact_only.perception = PerceptionKind::exact;
  const ModelSpec& spec = record_spec ? *record_spec : exact_only;
  auto* mixture = dynamic_cast<MixtureController*>(&controller);

  SwarmState state = initial;
  traj.steps.reserve(static_cast<std::size_t>(env.sim.horizon));
  for (int t = 0; t < env.sim.horizon; ++t) {
    if (!state.positions.allFinite() || !state.velocities.allFinite()) {
      traj.diverged = true;
      break;
    }
    StepRecord rec;
    rec.graph = build_gso(state.positions, env.comm, state.time_index);
    rec.inputs = perceive(state, rec.graph, spec);
    rec.expert = centralized_control(state, env.expert);
    rec.executed = controller.control(state, rec.graph);
    rec.expert_executed = mixture ? mixture->last_was_expert() : controller.name() == "expert";
    if (!rec.executed.allFinite()) {
      traj.diverged = true;
      break;
    }
    rec.state = state;
    SwarmState next = step(state, rec.executed, env.sim);
    traj.steps.push_back(std::move(rec));
    state = std::move(next);
  }
  return traj;
}

}  // namespace vgai
