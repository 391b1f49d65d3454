#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "vgai/audit.hpp"
#include "vgai/types.hpp"

namespace vgai {

/// Agents within `radius` metres communicate.
struct DiskModel {
  double radius = 1.5;
};

/// Each agent hears from its `neighbors` nearest agents.
struct KnnModel {
  int neighbors = 10;
};

using CommModel = std::variant<DiskModel, KnnModel>;

inline std::string describe(const CommModel& model) {
  if (const auto* d = std::get_if<DiskModel>(&model)) return "disk(R=" + std::to_string(d->radius) + ")";
  return "knn(K_NN=" + std::to_string(std::get<KnnModel>(model).neighbors) + ")";
}

/// Graph shift operator S(t) together with the in-neighbour lists it encodes.
///
/// Row i of `gso` holds the weights agent i applies to the values it receives;
/// `neighbors[i]` lists the senders in ascending index order and `weights[i]`
/// the matching entries of row i.
struct GraphSnapshot {
  std::int64_t time_index = 0;
  Matrix gso;
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;

  std::size_t size() const { return neighbors.size(); }
};

namespace detail {

inline void validate(const CommModel& model, Eigen::Index n) {
  if (const auto* d = std::get_if<DiskModel>(&model)) {
    if (!(d->radius > 0.0)) throw ConfigError("disk radius must be positive");
    return;
  }
  const int k = std::get<KnnModel>(model).neighbors;
  if (k < 1 || k >= n) {
    throw ConfigError("K_NN must satisfy 1 <= K_NN < N (K_NN=" + std::to_string(k) +
                      ", N=" + std::to_string(n) + ")");
  }
}

}  // namespace detail

/// Builds a snapshot from explicit in-neighbour lists with row-normalized weights.
inline GraphSnapshot snapshot_from_neighbors(std::vector<std::vector<int>> neighbors,
                                             std::int64_t time_index = 0) {
  const auto n = static_cast<Eigen::Index>(neighbors.size());
  GraphSnapshot snap;
  snap.time_index = time_index;
  snap.gso = Matrix::Zero(n, n);
  snap.weights.resize(neighbors.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& list = neighbors[static_cast<std::size_t>(i)];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    const double w = list.empty() ? 0.0 : 1.0 / static_cast<double>(list.size());
    for (int j : list) {
      if (j < 0 || j >= n || j == i) throw DimensionError("neighbour index out of range or self-loop");
      snap.gso(i, j) = w;
    }
    snap.weights[static_cast<std::size_t>(i)].assign(list.size(), w);
  }
  snap.neighbors = std::move(neighbors);
  return snap;
}

/// Builds a snapshot from an arbitrary nonnegative weight matrix (zero diagonal).
inline GraphSnapshot snapshot_from_matrix(const Matrix& gso, std::int64_t time_index = 0) {
  if (gso.rows() != gso.cols()) throw DimensionError("GSO must be square");
  GraphSnapshot snap;
  snap.time_index = time_index;
  snap.gso = gso;
  const auto n = static_cast<std::size_t>(gso.rows());
  snap.neighbors.resize(n);
  snap.weights.resize(n);
  for (Eigen::Index i = 0; i < gso.rows(); ++i) {
    for (Eigen::Index j = 0; j < gso.cols(); ++j) {
      const double s = gso(i, j);
      if (!std::isfinite(s) || s < 0.0) throw NonFiniteError("GSO entries must be finite and nonnegative");
      if (s != 0.0) {
        if (i == j) throw DimensionError("GSO diagonal must be zero");
        snap.neighbors[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        snap.weights[static_cast<std::size_t>(i)].push_back(s);
      }
    }
  }
  return snap;
}

/// Communication graph for the given positions under `model`.
///
/// Disk: symmetric, j hears i iff 0 < |r_i - r_j| <= R. KNN: directed, the
/// in-neighbours of i are its K_NN nearest agents with distance ties broken
/// by ascending index. Weights are 1/|N_i|; isolated agents get a zero row.
inline GraphSnapshot build_gso(const MatrixN2& positions, const CommModel& model,
                               std::int64_t time_index = 0) {
  const Eigen::Index n = positions.rows();
  if (n < 2) throw DimensionError("build_gso requires at least two agents");
  if (!positions.allFinite()) throw NonFiniteError("build_gso: non-finite position");
  detail::validate(model, n);

  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));
  if (const auto* disk = std::get_if<DiskModel>(&model)) {
    const double r2 = disk->radius * disk->radius;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d2 = (positions.row(i) - positions.row(j)).squaredNorm();
        if (d2 > 0.0 && d2 <= r2) {
          neighbors[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
          neighbors[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
        }
      }
    }
  } else {
    const int k = std::get<KnnModel>(model).neighbors;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        dist[static_cast<std::size_t>(j)] = (positions.row(i) - positions.row(j)).squaredNorm();
      }
      order.resize(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      order.erase(order.begin() + i);
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        const double da = dist[static_cast<std::size_t>(a)];
        const double db = dist[static_cast<std::size_t>(b)];
        return da < db || (da == db && a < b);
      });
      neighbors[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
    }
  }
  return snapshot_from_neighbors(std::move(neighbors), time_index);
}

/// One round of neighbour exchanges: row i = sum_{j in N_i} s_ij x_j.
///
/// The products are added in sorted order rather than by neighbour index, so
/// the result is exactly equivariant under relabelling of the agents.
inline Matrix graph_shift(const GraphSnapshot& snapshot, const Matrix& signal) {
  const auto n = static_cast<Eigen::Index>(snapshot.size());
  if (signal.rows() != n) {
    throw DimensionError("graph_shift: signal has " + std::to_string(signal.rows()) +
                         " rows for a graph of " + std::to_string(n) + " agents");
  }
  Matrix out = Matrix::Zero(n, signal.cols());
  auto& audit = audit::counters();
  std::vector<double> terms;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nbrs = snapshot.neighbors[static_cast<std::size_t>(i)];
    const auto& w = snapshot.weights[static_cast<std::size_t>(i)];
    for (Eigen::Index f = 0; f < signal.cols(); ++f) {
      terms.clear();
      for (std::size_t m = 0; m < nbrs.size(); ++m) terms.push_back(w[m] * signal(nbrs[m], f));
      out(i, f) = detail::order_free_sum(terms);
    }
    audit.shift_reads += nbrs.size();
  }
  return out;
}

/// Adjoint of graph_shift: returns S^T g.
inline Matrix graph_shift_transpose(const GraphSnapshot& snapshot, const Matrix& g) {
  const auto n = static_cast<Eigen::Index>(snapshot.size());
  if (g.rows() != n) throw DimensionError("graph_shift_transpose: row mismatch");
  Matrix out = Matrix::Zero(n, g.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nbrs = snapshot.neighbors[static_cast<std::size_t>(i)];
    const auto& w = snapshot.weights[static_cast<std::size_t>(i)];
    for (std::size_t m = 0; m < nbrs.size(); ++m) out.row(nbrs[m]) += w[m] * g.row(i);
  }
  return out;
}

inline std::size_t min_degree(const GraphSnapshot& snapshot) {
  std::size_t best = snapshot.neighbors.empty() ? 0 : snapshot.neighbors.front().size();
  for (const auto& list : snapshot.neighbors) best = std::min(best, list.size());
  return best;
}

/// Snapshot with no edges; stands in for S(t) before the first exchange.
inline GraphSnapshot empty_snapshot(std::size_t n, std::int64_t time_index = 0) {
  return snapshot_from_neighbors(std::vector<std::vector<int>>(n), time_index);
}

}  // namespace vgai
