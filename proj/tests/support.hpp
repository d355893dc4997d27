#pragma once

// Fixtures and independent oracles shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sgt/graph.hpp"
#include "sgt/mesh.hpp"

namespace sgt::testing {

/// Triangulated rows x cols grid with randomly chosen diagonals and jittered
/// positions; connected for rows, cols >= 2.
inline graph::MeshGraph random_mesh_graph(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  std::bernoulli_distribution coin(0.5);
  Points positions(rows * cols, 3);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      positions.row(r * cols + c) << c + jitter(rng), r + jitter(rng), jitter(rng);
  std::vector<Face> faces;
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const int a = r * cols + c, b = a + 1, d = a + cols, e = d + 1;
      if (coin(rng)) {
        faces.push_back({a, b, e});
        faces.push_back({a, e, d});
      } else {
        faces.push_back({a, b, d});
        faces.push_back({b, e, d});
      }
    }
  }
  return graph::build_mesh_graph(std::move(positions), std::move(faces));
}

/// Random graph on n nodes: a random spanning tree plus extra random edges.
inline graph::MeshGraph random_connected_graph(int n, int extra_edges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<graph::Edge> edges;
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    edges.emplace_back(pick(rng), v);
  }
  std::uniform_int_distribution<int> any(0, n - 1);
  while (extra_edges > 0) {
    const int a = any(rng), b = any(rng);
    if (a == b) continue;
    edges.emplace_back(a, b);
    --extra_edges;
  }
  return graph::graph_from_edges(n, std::move(edges));
}

/// Union-find component count.
inline int union_find_components(int n, const std::vector<graph::Edge>& edges) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int count = n;
  for (const auto& [a, b] : edges) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --count;
    }
  }
  return count;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline double max_relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

}  // namespace sgt::testing
