#include "sgt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

#include "sgt/eigensolver.hpp"
#include "sgt/errors.hpp"

namespace sgt::graph {
namespace {

// Dense path limit; larger graphs use shift-invert subspace iteration when
// only a few eigenpairs are requested.
constexpr int kDenseLimit = 1200;

void canonicalize(std::vector<Edge>& edges) {
  for (auto& e : edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

std::vector<int> degrees(int n, const std::vector<Edge>& edges) {
  std::vector<int> degree(n, 0);
  for (const auto& [a, b] : edges) {
    ++degree[a];
    ++degree[b];
  }
  return degree;
}

void fix_signs(Eigen::MatrixXd& vectors) {
  for (int c = 0; c < vectors.cols(); ++c) {
    for (int r = 0; r < vectors.rows(); ++r) {
      const double value = vectors(r, c);
      if (std::abs(value) > 1e-10) {
        if (value < 0) vectors.col(c) *= -1.0;
        break;
      }
    }
  }
}

}  // namespace

SparseMatrix MeshGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    triplets.emplace_back(a, b, 1.0);
    triplets.emplace_back(b, a, 1.0);
  }
  SparseMatrix a(num_vertices(), num_vertices());
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

std::vector<std::vector<int>> MeshGraph::neighbors() const {
  std::vector<std::vector<int>> out(num_vertices());
  for (const auto& [a, b] : edges) {
    out[a].push_back(b);
    out[b].push_back(a);
  }
  for (auto& list : out) std::sort(list.begin(), list.end());
  return out;
}

MeshGraph build_mesh_graph(Points positions, std::vector<Face> faces) {
  const int n = static_cast<int>(positions.rows());
  std::vector<Edge> edges;
  edges.reserve(faces.size() * 3);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (int idx : face) {
      if (idx < 0 || idx >= n) {
        throw StructuralError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw StructuralError("face " + std::to_string(f) + " is degenerate (repeated vertex)");
    }
    edges.emplace_back(face[0], face[1]);
    edges.emplace_back(face[1], face[2]);
    edges.emplace_back(face[2], face[0]);
  }
  canonicalize(edges);
  MeshGraph g;
  g.degree = degrees(n, edges);
  g.positions = std::move(positions);
  g.faces = std::move(faces);
  g.edges = std::move(edges);
  return g;
}

MeshGraph graph_from_edges(int num_vertices, std::vector<Edge> edges, Points positions) {
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_vertices || b >= num_vertices) {
      throw StructuralError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") outside [0, " + std::to_string(num_vertices) + ")");
    }
    if (a == b) throw StructuralError("self loop at vertex " + std::to_string(a));
  }
  if (positions.rows() != 0 && positions.rows() != num_vertices) {
    throw ArgumentError("positions do not match the vertex count");
  }
  canonicalize(edges);
  MeshGraph g;
  g.degree = degrees(num_vertices, edges);
  g.positions = std::move(positions);
  g.edges = std::move(edges);
  return g;
}

int connected_components(const MeshGraph& g, std::vector<int>* labels) {
  const int n = g.num_vertices();
  const auto adj = g.neighbors();
  std::vector<int> comp(n, -1);
  int count = 0;
  std::queue<int> frontier;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = count;
    frontier.push(s);
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int w : adj[v]) {
        if (comp[w] < 0) {
          comp[w] = count;
          frontier.push(w);
        }
      }
    }
    ++count;
  }
  if (labels != nullptr) *labels = std::move(comp);
  return count;
}

Laplacian laplacian(const MeshGraph& g) {
  const int n = g.num_vertices();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(g.edges.size() * 2 + n);
  for (const auto& [a, b] : g.edges) {
    triplets.emplace_back(a, b, -1.0);
    triplets.emplace_back(b, a, -1.0);
  }
  for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, static_cast<double>(g.degree[i]));
  SparseMatrix l(n, n);
  l.setFromTriplets(triplets.begin(), triplets.end());
  return {std::move(l)};
}

Spectrum eigendecompose(const Laplacian& l, int k) {
  const int n = l.size();
  if (k < 1 || k > n) {
    throw ArgumentError("eigenpair count " + std::to_string(k) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  linalg::SymmetricEigen eig;
  if (n <= kDenseLimit || 3 * k > n) {
    eig = linalg::dense_symmetric_eigen(Eigen::MatrixXd(l.matrix));
  } else {
    eig = linalg::smallest_eigenpairs(l.matrix, k);
  }
  Spectrum s;
  s.eigenvalues = eig.values.head(k).cwiseMax(0.0);
  s.eigenvectors = eig.vectors.leftCols(k);
  fix_signs(s.eigenvectors);
  return s;
}

double largest_eigenvalue(const Laplacian& l) {
  if (l.size() == 0) throw ArgumentError("empty Laplacian");
  return linalg::largest_eigenvalue(l.matrix);
}

Laplacian scaled_laplacian(const Laplacian& l, double lambda_max) {
  if (!(lambda_max > 0.0)) {
    throw ArgumentError("lambda_max must be positive, got " + std::to_string(lambda_max));
  }
  SparseMatrix identity(l.size(), l.size());
  identity.setIdentity();
  SparseMatrix scaled = (2.0 / lambda_max) * l.matrix - identity;
  scaled.prune(0.0);
  return {std::move(scaled)};
}

}  // namespace sgt::graph
