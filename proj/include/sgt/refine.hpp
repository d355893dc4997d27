#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "sgt/mesh.hpp"

namespace sgt::refine {

/// Grazing-hit bookkeeping for ray parity tests.
struct RayStats {
  int retries = 0;
  /// Points whose 8 retries were all grazing; they are reported exterior.
  int failures = 0;
};

/// Ray-parity inside test. The ray direction comes from `seed`; a ray that
/// grazes an edge, a vertex or a face plane is recast in a fresh direction.
/// Faces listed in `excluded` (sorted) are ignored.
bool point_in_mesh(const Eigen::RowVector3d& p, const mesh::TriMesh& mesh, std::uint64_t seed,
                   RayStats* stats = nullptr, const std::vector<int>& excluded = {});

/// Unsigned distance from p to triangle abc.
double point_triangle_distance(const Eigen::RowVector3d& p, const Eigen::RowVector3d& a,
                               const Eigen::RowVector3d& b, const Eigen::RowVector3d& c);
double distance_to_surface(const Eigen::RowVector3d& p, const mesh::TriMesh& mesh);

/// Uniform grid over a point set for nearest-vertex queries.
class VertexGrid {
 public:
  /// Cell size defaults to the mean edge length of `mesh`.
  explicit VertexGrid(const mesh::TriMesh& mesh, double cell = 0.0);
  /// Index of the nearest point (lowest index on ties); -1 when empty.
  int nearest(const Eigen::RowVector3d& p, int skip = -1) const;

 private:
  std::int64_t key(int x, int y, int z) const;
  const Points* points_;
  double cell_;
  Eigen::RowVector3d origin_;
  Eigen::Array3i dims_;
  std::vector<std::vector<int>> cells_;
};

struct CollisionMask {
  std::vector<char> interior;
  RayStats stats;
  int count() const;
};

/// interior[i] = source vertex i lies inside `target`. Throws ArgumentError
/// when the target is not watertight.
CollisionMask collision_mask(const mesh::TriMesh& source, const mesh::TriMesh& target, std::uint64_t seed);
/// Self test: each vertex is cast against its own mesh minus incident faces.
CollisionMask self_collision_mask(const mesh::TriMesh& m, std::uint64_t seed);

/// Sum over masked source vertices of the distance to the nearest target
/// vertex, counted only when the two unit normals point in opposite
/// directions. With `self`, a vertex's own index is skipped in the search.
/// The gradient with respect to source positions goes to `gradient`.
double collision_loss(const mesh::TriMesh& source, const CollisionMask& mask, const mesh::TriMesh& target,
                      Points* gradient = nullptr, bool self = false);

/// As-rigid-as-possible energy with uniform weights and per-vertex optimal
/// rotations. Cells whose rest edges all vanish are skipped and counted.
double arap_energy(const mesh::TriMesh& rest, const Points& deformed, Points* gradient = nullptr,
                   int* skipped_cells = nullptr);

struct RefineConfig {
  double arap_weight = 1.0;
  int max_iters = 200;
  double step_size = 1e-2;
  double convergence_tol = 1e-7;
  std::uint64_t ray_direction_seed = 0;
  /// Adds the source's self-collision term.
  bool self_collision = false;
  double voxel_cm = 0.5;

  void validate() const;
};

struct PlausibilityReport {
  double max_penetration_mm = 0.0;
  double intersection_volume_cm3 = 0.0;
  double voxel_size_cm = 0.5;

  nlohmann::ordered_json to_json() const;
};

/// Meshes are in meters. Penetration is the largest distance from a vertex
/// of either mesh lying inside the other to that other surface; volume counts
/// voxel centers inside both meshes.
PlausibilityReport plausibility_metrics(const mesh::TriMesh& a, const mesh::TriMesh& b, double voxel_cm = 0.5,
                                        std::uint64_t seed = 0);

struct RefineResult {
  mesh::TriMesh mesh;
  PlausibilityReport before, after;
  int iterations = 0;
  double initial_loss = 0.0, final_loss = 0.0;
  bool converged = false;
  /// Loss rose for 10 consecutive iterations; the best iterate is returned.
  bool diverged = false;
};

/// Gradient descent with backtracking on collision + arap_weight * ARAP over
/// the source positions; the mask is recomputed at every evaluation.
RefineResult refine_mesh(const mesh::TriMesh& source, const mesh::TriMesh& target, const RefineConfig& config);

}  // namespace sgt::refine
