#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "vgai/comm_graph.hpp"
#include "vgai/dynamics.hpp"
#include "vgai/perception.hpp"
#include "vgai/training.hpp"

namespace vgai::test {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

// Random directed graph with row-normalized weights, or raw positive weights.
inline GraphSnapshot random_snapshot(Eigen::Index n, std::mt19937_64& rng, double density = 0.4,
                                     bool normalized = true, std::int64_t t = 0) {
  std::bernoulli_distribution edge(density);
  std::uniform_real_distribution<double> w(0.1, 2.0);
  if (normalized) {
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && edge(rng)) nb[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
    return snapshot_from_neighbors(nb, t);
  }
  Matrix s = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && edge(rng)) s(i, j) = w(rng);
  return snapshot_from_matrix(s, t);
}

// Schoolbook S*X, summing over j in ascending order.
inline Matrix naive_product(const Matrix& s, const Matrix& x) {
  Matrix out(s.rows(), x.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < s.cols(); ++j)
        if (s(i, j) != 0.0) acc += s(i, j) * x(j, c);
      out(i, c) = acc;
    }
  }
  return out;
}

inline double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

inline Matrix permutation(const std::vector<int>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Row i of the result is row perm[i] of m.
template <class M>
M permute_rows(const M& m, const std::vector<int>& perm) {
  M out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

// Agent i of the result is agent perm[i] of s.
inline SwarmState permute_state(const SwarmState& s, const std::vector<int>& perm) {
  SwarmState out = s;
  out.positions = permute_rows(s.positions, perm);
  out.velocities = permute_rows(s.velocities, perm);
  out.accelerations = permute_rows(s.accelerations, perm);
  return out;
}

// Central differences of the window loss against bptt_gradients.
inline double max_tensor_gradient_error(ModelParams params, const Trajectory& traj, std::size_t start,
                                        const std::vector<Matrix>* carried, double h = 1e-6) {
  const WindowGradient analytic = bptt_gradients(params, traj, start, carried);
  auto ps = tensors(params);
  auto gs = tensors(analytic.grad);
  double worst = 0.0;
  for (std::size_t t = 0; t < ps.size(); ++t) {
    Matrix numeric = Matrix::Zero(ps[t]->rows(), ps[t]->cols());
    for (Eigen::Index i = 0; i < ps[t]->size(); ++i) {
      double& w = ps[t]->data()[i];
      const double saved = w;
      w = saved + h;
      const double up = bptt_gradients(params, traj, start, carried).loss;
      w = saved - h;
      const double down = bptt_gradients(params, traj, start, carried).loss;
      w = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    if (numeric.norm() < 1e-9 && gs[t]->norm() < 1e-9) continue;
    worst = std::max(worst, rel_error(*gs[t], numeric));
  }
  return worst;
}

inline Environment small_env(int agents, int horizon) {
  Environment env;
  env.sim.agents = agents;
  env.sim.horizon = horizon;
  return env;
}

inline ModelSpec toy_spec(ControllerKind kind, PerceptionKind perception, int taps = 2) {
  ModelSpec spec;
  spec.controller = kind;
  spec.perception = perception;
  spec.taps = taps;
  spec.dagnn_hidden = {5};
  spec.dagnn_activation = Activation::tanh;
  spec.grnn_hidden = 4;
  spec.encoder_features = 3;
  spec.view.bins = 16;
  spec.encoder.channels1 = 2;
  spec.encoder.kernel1 = 3;
  spec.encoder.channels2 = 2;
  spec.encoder.kernel2 = 3;
  spec.encoder.pool = 4;
  return spec;
}

// An expert rollout that records the inputs `spec` needs.
inline Trajectory toy_trajectory(const ModelSpec& spec, std::uint64_t seed, int agents = 3, int horizon = 6) {
  const auto env = small_env(agents, horizon);
  ExpertController expert(env.expert);
  auto traj = simulate(initialize_swarm(env.sim, env.comm, seed), expert, env, &spec);
  traj.seed = seed;
  return traj;
}

// Selection sort by confident area, then the weighted means written out longhand.
inline Eigen::Matrix<double, 9, 1> brute_force_features(const DetectionSet& dets) {
  Eigen::Matrix<double, 9, 1> f = Eigen::Matrix<double, 9, 1>::Zero();
  const std::size_t n = dets.size();
  if (n == 0) return f;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto area = [&](std::size_t i) { return dets[i].w * dets[i].h * dets[i].confidence; };
  // Selection sort, descending by area, earlier index first on ties.
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t best = a;
    for (std::size_t b = a + 1; b < n; ++b)
      if (area(order[b]) > area(order[best])) best = b;
    const std::size_t picked = order[best];
    for (std::size_t b = best; b > a; --b) order[b] = order[b - 1];
    order[a] = picked;
  }
  f(0) = dets[order[0]].x;
  f(1) = dets[order[0]].y;
  f(2) = area(order[0]);
  for (int block = 0; block < 2; ++block) {
    const std::size_t m = block == 0 ? std::min<std::size_t>(3, n) : n;
    double num_x = 0, num_y = 0, den = 0, plain_x = 0, plain_y = 0;
    for (std::size_t k = 0; k < m; ++k) {
      const auto& d = dets[order[k]];
      num_x += d.x * area(order[k]);
      num_y += d.y * area(order[k]);
      den += area(order[k]);
      plain_x += d.x;
      plain_y += d.y;
    }
    const int o = 3 + 3 * block;
    f(o) = den > 0 ? num_x / den : plain_x / static_cast<double>(m);
    f(o + 1) = den > 0 ? num_y / den : plain_y / static_cast<double>(m);
    f(o + 2) = den / static_cast<double>(m);
  }
  return f;
}

// Dense delayed product S(t)...S(t-k+1) X(t-k) from newest-first histories.
inline Matrix dense_delayed(const std::vector<Matrix>& x, const std::vector<GraphSnapshot>& s, int k) {
  if (static_cast<std::size_t>(k) >= x.size()) return Matrix::Zero(x[0].rows(), x[0].cols());
  Matrix p = x[static_cast<std::size_t>(k)];
  for (int d = k - 1; d >= 0; --d) p = s[static_cast<std::size_t>(d)].gso * p;
  return p;
}

inline Matrix dense_filter(const std::vector<Matrix>& x, const std::vector<GraphSnapshot>& s, const std::vector<Matrix>& taps) {
  Matrix out = Matrix::Zero(x[0].rows(), taps[0].cols());
  for (std::size_t k = 0; k < taps.size(); ++k) out += dense_delayed(x, s, static_cast<int>(k)) * taps[k];
  return out;
}

}  // namespace vgai::test
