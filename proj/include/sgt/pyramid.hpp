#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgt/graph.hpp"

namespace sgt::pyramid {

/// Coarse-to-fine hierarchy. `levels.front()` is the coarsest graph and
/// `levels.back()` the template itself. `parent_maps[l]` has one entry per
/// vertex of level l + 1 giving its parent in level l.
struct GraphPyramid {
  std::vector<graph::MeshGraph> levels;
  std::vector<std::vector<int>> parent_maps;

  int num_levels() const { return static_cast<int>(levels.size()); }
  std::vector<int> level_sizes() const;
  /// Coarsest-level ancestor of a finest-level vertex.
  int root_of(int fine_vertex) const;
};

/// Coarsens `fine` down to each size in `target_sizes` (ascending, last equal
/// to |V|). Each level comes from rounds of greedy matching on the next finer
/// level: vertices are visited in a seeded random order and merged with the
/// unmatched neighbor of largest normalized-cut weight w (1/d_a + 1/d_b),
/// stopping as soon as the target count is reached. Rounds repeat when one
/// matching pass is not enough. Coarse positions are child means, coarse edge
/// weights accumulate but the stored graphs are 0/1.
///
/// Throws ArgumentError for malformed sizes and StructuralError when a level
/// cannot be reached (more components than the target).
GraphPyramid build_pyramid(const graph::MeshGraph& fine, const std::vector<int>& target_sizes,
                           std::uint64_t seed);

/// Fully-connected map over the vertex axis shared by all feature channels:
/// out = weight * signal + bias, weight n_fine x n_coarse, bias n_fine x F.
struct UpsampleWeights {
  Eigen::MatrixXd weight;
  Eigen::MatrixXd bias;

  int fine_size() const { return static_cast<int>(weight.rows()); }
  int coarse_size() const { return static_cast<int>(weight.cols()); }
};

/// Identity on the overlapping block, zero elsewhere.
UpsampleWeights identity_upsample(int n_fine, int n_coarse, int channels);

Eigen::MatrixXd upsample(const UpsampleWeights& w, const Eigen::MatrixXd& signal);

/// upsample() from level `level` to level `level + 1` with size checks
/// against the pyramid.
Eigen::MatrixXd upsample_signal(const GraphPyramid& pyramid, int level, const Eigen::MatrixXd& signal,
                                const UpsampleWeights& w);

struct UpsampleGradient {
  Eigen::MatrixXd weight;
  Eigen::MatrixXd bias;
  Eigen::MatrixXd signal;
};

UpsampleGradient upsample_gradient(const UpsampleWeights& w, const Eigen::MatrixXd& signal,
                                   const Eigen::MatrixXd& upstream);

/// Writes `<stem>.json` (manifest) and `<stem>.sgtf` (edge lists, parent
/// arrays and positions as tensor records).
void save_pyramid(const GraphPyramid& p, const std::string& stem, std::uint64_t seed);
GraphPyramid load_pyramid(const std::string& stem);

}  // namespace sgt::pyramid
