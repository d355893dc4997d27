#pragma once

#include <array>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace sgt {

using Face = std::array<int, 3>;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using SparseMatrix = Eigen::SparseMatrix<double>;

namespace graph {

/// Undirected edge with `first < second`.
using Edge = std::pair<int, int>;

/// Undirected graph of a mesh. The adjacency is kept as a canonical sorted
/// list of unique edges (i < j); `degree[i]` is the number of incident edges.
struct MeshGraph {
  Points positions;
  std::vector<Face> faces;
  std::vector<Edge> edges;
  std::vector<int> degree;

  int num_vertices() const { return static_cast<int>(degree.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  /// Symmetric 0/1 adjacency with zero diagonal.
  SparseMatrix adjacency() const;
  /// Neighbor lists, each sorted ascending.
  std::vector<std::vector<int>> neighbors() const;
};

/// Builds the graph from face connectivity. Throws StructuralError on an
/// out-of-range index or a face that repeats a vertex.
MeshGraph build_mesh_graph(Points positions, std::vector<Face> faces);

/// Builds a graph from an explicit edge list (duplicates and orientation are
/// normalized). Positions may be empty.
MeshGraph graph_from_edges(int num_vertices, std::vector<Edge> edges, Points positions = {});

/// Component id per vertex (ids ordered by lowest member vertex); returns the count.
int connected_components(const MeshGraph& g, std::vector<int>* labels = nullptr);

struct Laplacian {
  SparseMatrix matrix;
  int size() const { return static_cast<int>(matrix.rows()); }
};

/// L = D - A.
Laplacian laplacian(const MeshGraph& g);

/// Ascending eigenvalues with eigenvector column i paired to eigenvalue i.
struct Spectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  int size() const { return static_cast<int>(eigenvalues.size()); }
  bool is_full() const { return eigenvectors.rows() == eigenvalues.size(); }
};

/// Eigenvalues below this magnitude count as zero.
inline constexpr double kZeroEigenvalue = 1e-8;

/// The k smallest eigenpairs of `l`. Each eigenvector has its first component
/// with magnitude above 1e-10 made positive. Throws ArgumentError unless
/// 1 <= k <= |V|, NumericalError when the solver does not converge.
Spectrum eigendecompose(const Laplacian& l, int k);

/// Largest eigenvalue of `l`.
double largest_eigenvalue(const Laplacian& l);

/// 2 L / lambda_max - I; spectrum lies in [-1, 1] when lambda_max bounds it.
Laplacian scaled_laplacian(const Laplacian& l, double lambda_max);

}  // namespace graph
}  // namespace sgt
