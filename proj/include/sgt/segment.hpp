#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgt/graph.hpp"

namespace sgt::segment {

struct ClusterAssignment {
  int K = 0;
  std::vector<int> labels;
  /// K x d centroids in the spectral embedding.
  Eigen::MatrixXd centroids;
  /// False when k-means hit its iteration cap; labels are the best seen.
  bool converged = true;

  int size() const { return static_cast<int>(labels.size()); }
  std::vector<int> cluster_sizes() const;
};

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;
};

/// Lloyd's k-means with k-means++ seeding. Nearest-centroid ties go to the
/// lowest cluster index; a cluster that empties is re-seeded with the point
/// of the largest cluster farthest from its centroid. Seeding draws visit the
/// rows in lexicographic order, so the result depends on the point multiset
/// and not on row order.
ClusterAssignment kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                         const KMeansOptions& options = {});

struct SegmentOptions {
  /// Embedding width; 0 means K.
  int n_eigvecs = 0;
  /// Scale every embedding row to unit length before clustering.
  bool row_normalize = false;
  KMeansOptions kmeans;
};

/// Rows of the eigenvectors after the constant one (u_2 .. u_{n+1}) clustered
/// into K groups. On a disconnected graph u_1 is not constant, so instead the
/// column means are removed from u_1 .. u_n, which keeps every component
/// indicator in the embedding. Column signs are canonicalized independently
/// of vertex order.
ClusterAssignment segment(const graph::MeshGraph& g, int K, std::uint64_t seed,
                          const SegmentOptions& options = {});

/// Labels of the given vertices (e.g. a subsampled template).
ClusterAssignment restrict_to(const ClusterAssignment& a, const std::vector<int>& vertices);

/// Token i = [region_features.row(labels[i]), positions.row(i)].
Eigen::MatrixXd cluster_feature_broadcast(const std::vector<int>& labels,
                                          const Eigen::MatrixXd& region_features,
                                          const Eigen::MatrixXd& positions);

/// `{"K": int, "labels": [int, ...]}`
std::string to_json(const ClusterAssignment& a);
ClusterAssignment from_json(const std::string& text);

}  // namespace sgt::segment
