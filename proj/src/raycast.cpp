#include <algorithm>
#include <cmath>
#include <limits>

#include "sgt/errors.hpp"
#include "sgt/random.hpp"
#include "sgt/refine.hpp"

namespace sgt::refine {
namespace {

using Vec = Eigen::RowVector3d;

constexpr int kMaxRetries = 8;

enum class Hit { none, crossing, grazing };

// Möller-Trumbore with explicit detection of degenerate contacts.
Hit intersect(const Vec& origin, const Vec& dir, const Vec& a, const Vec& b, const Vec& c) {
  const Vec e1 = b - a, e2 = c - a;
  const Vec pv = dir.cross(e2);
  const double det = e1.dot(pv);
  const double scale = e1.norm() * e2.norm();
  constexpr double kEps = 1e-10;
  if (std::abs(det) <= kEps * scale) {
    // Ray parallel to the face plane: grazing only if it lies in it.
    const Vec n = e1.cross(e2);
    const double plane_dist = std::abs((origin - a).dot(n)) / std::max(n.norm(), 1e-300);
    return plane_dist <= kEps * std::sqrt(scale) ? Hit::grazing : Hit::none;
  }
  const double inv = 1.0 / det;
  const Vec s = origin - a;
  const double u = s.dot(pv) * inv;
  if (u < -kEps || u > 1 + kEps) return Hit::none;
  const Vec q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < -kEps || u + v > 1 + kEps) return Hit::none;
  const double t = e2.dot(q) * inv;
  if (t < -kEps) return Hit::none;
  if (t <= kEps || u <= kEps || v <= kEps || u + v >= 1 - kEps) return Hit::grazing;
  return Hit::crossing;
}

Vec random_direction(Rng& rng) {
  for (;;) {
    Vec d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const double n = d.norm();
    if (n > 1e-3 && n <= 1) return d / n;
  }
}

void require_watertight(const mesh::TriMesh& m, const char* what) {
  if (!mesh::is_watertight(m)) throw ArgumentError(std::string(what) + " mesh is not watertight");
}

}  // namespace

namespace {

// Rays are flipped into the half-space of `outward` when it is nonzero.
bool parity(const Vec& p, const mesh::TriMesh& mesh, std::uint64_t seed, RayStats* stats,
            const std::vector<int>& excluded, const Vec& outward) {
  Rng rng(seed);
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    Vec dir = random_direction(rng);
    if (dir.dot(outward) < 0) dir = -dir;
    int crossings = 0;
    bool grazed = false;
    auto skip = excluded.begin();
    for (int f = 0; f < mesh.num_faces() && !grazed; ++f) {
      while (skip != excluded.end() && *skip < f) ++skip;
      if (skip != excluded.end() && *skip == f) continue;
      const auto& face = mesh.faces[f];
      switch (intersect(p, dir, mesh.positions.row(face[0]), mesh.positions.row(face[1]),
                        mesh.positions.row(face[2]))) {
        case Hit::crossing: ++crossings; break;
        case Hit::grazing: grazed = true; break;
        case Hit::none: break;
      }
    }
    if (!grazed) return crossings % 2 == 1;
    if (stats && attempt < kMaxRetries) ++stats->retries;
  }
  if (stats) ++stats->failures;
  return false;
}

}  // namespace

bool point_in_mesh(const Eigen::RowVector3d& p, const mesh::TriMesh& mesh, std::uint64_t seed, RayStats* stats,
                   const std::vector<int>& excluded) {
  return parity(p, mesh, seed, stats, excluded, Vec::Zero());
}

double point_triangle_distance(const Eigen::RowVector3d& p, const Eigen::RowVector3d& a,
                               const Eigen::RowVector3d& b, const Eigen::RowVector3d& c) {
  // Closest point by Voronoi region of the triangle (Ericson, Real-Time Collision Detection).
  const Vec ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vec bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

double distance_to_surface(const Eigen::RowVector3d& p, const mesh::TriMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    best = std::min(best, point_triangle_distance(p, mesh.positions.row(f[0]), mesh.positions.row(f[1]),
                                                  mesh.positions.row(f[2])));
  }
  return best;
}

VertexGrid::VertexGrid(const mesh::TriMesh& mesh, double cell) : points_(&mesh.positions), cell_(cell) {
  if (mesh.num_vertices() == 0) {
    cell_ = 1.0;
    origin_.setZero();
    dims_.setOnes();
    cells_.resize(1);
    return;
  }
  if (cell_ <= 0) {
    const auto edges = mesh::edge_set(mesh);
    double total = 0;
    for (double l : edges.lengths) total += l;
    cell_ = edges.size() > 0 ? total / edges.size() : 1.0;
  }
  const Vec lo = mesh.positions.colwise().minCoeff(), hi = mesh.positions.colwise().maxCoeff();
  cell_ = std::max({cell_, (hi - lo).maxCoeff() / 256.0, 1e-12});
  origin_ = lo;
  for (int k = 0; k < 3; ++k) dims_[k] = static_cast<int>((hi[k] - lo[k]) / cell_) + 1;
  cells_.resize(static_cast<std::size_t>(dims_.prod()));
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    const Vec r = (mesh.positions.row(i) - origin_) / cell_;
    cells_[key(std::min(static_cast<int>(r[0]), dims_[0] - 1), std::min(static_cast<int>(r[1]), dims_[1] - 1),
               std::min(static_cast<int>(r[2]), dims_[2] - 1))]
        .push_back(i);
  }
}

std::int64_t VertexGrid::key(int x, int y, int z) const {
  return (static_cast<std::int64_t>(z) * dims_[1] + y) * dims_[0] + x;
}

int VertexGrid::nearest(const Eigen::RowVector3d& p, int skip) const {
  const Eigen::Index n = points_->rows();
  if (n == 0 || (n == 1 && skip == 0)) return -1;
  const Vec r = (p - origin_) / cell_;
  int c[3];
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(static_cast<int>(std::floor(r[k])), 0, dims_[k] - 1);
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  const int max_ring = dims_.maxCoeff();
  for (int ring = 0; ring <= max_ring; ++ring) {
    for (int z = c[2] - ring; z <= c[2] + ring; ++z) {
      if (z < 0 || z >= dims_[2]) continue;
      for (int y = c[1] - ring; y <= c[1] + ring; ++y) {
        if (y < 0 || y >= dims_[1]) continue;
        for (int x = c[0] - ring; x <= c[0] + ring; ++x) {
          if (x < 0 || x >= dims_[0]) continue;
          if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != ring) continue;
          for (int i : cells_[key(x, y, z)]) {
            if (i == skip) continue;
            const double d2 = (points_->row(i) - p).squaredNorm();
            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
      }
    }
    // Unvisited cells lie at least ring * cell from the projection of p onto
    // the grid box, and p is further off by its distance to that box.
    if (best >= 0) {
      Vec projected = p;
      for (int k = 0; k < 3; ++k) projected[k] = origin_[k] + std::clamp(r[k], 0.0, double(dims_[k])) * cell_;
      const double reach2 = (p - projected).squaredNorm() + std::pow(ring * cell_, 2);
      if (reach2 >= best_d2) return best;
    }
  }
  return best;
}

int CollisionMask::count() const {
  return static_cast<int>(std::count(interior.begin(), interior.end(), 1));
}

CollisionMask collision_mask(const mesh::TriMesh& source, const mesh::TriMesh& target, std::uint64_t seed) {
  require_watertight(target, "target");
  CollisionMask m;
  m.interior.resize(source.num_vertices());
  for (int i = 0; i < source.num_vertices(); ++i) {
    m.interior[i] = point_in_mesh(source.positions.row(i), target, seed, &m.stats) ? 1 : 0;
  }
  return m;
}

CollisionMask self_collision_mask(const mesh::TriMesh& m, std::uint64_t seed) {
  require_watertight(m, "self");
  std::vector<std::vector<int>> incident(m.num_vertices());
  for (int f = 0; f < m.num_faces(); ++f)
    for (int v : m.faces[f]) incident[v].push_back(f);
  CollisionMask out;
  out.interior.resize(m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i) {
    // A ray leaving a surface vertex inward would count its own exit.
    out.interior[i] = parity(m.positions.row(i), m, seed, &out.stats, incident[i], m.normals.row(i)) ? 1 : 0;
  }
  return out;
}

PlausibilityReport plausibility_metrics(const mesh::TriMesh& a, const mesh::TriMesh& b, double voxel_cm,
                                        std::uint64_t seed) {
  if (!(voxel_cm > 0)) throw ArgumentError("voxel size must be positive");
  require_watertight(a, "first");
  require_watertight(b, "second");
  PlausibilityReport r;
  r.voxel_size_cm = voxel_cm;

  double deepest = 0;
  auto penetrate = [&](const mesh::TriMesh& src, const mesh::TriMesh& dst) {
    const CollisionMask m = collision_mask(src, dst, seed);
    for (int i = 0; i < src.num_vertices(); ++i)
      if (m.interior[i]) deepest = std::max(deepest, distance_to_surface(src.positions.row(i), dst));
  };
  penetrate(a, b);
  penetrate(b, a);
  r.max_penetration_mm = deepest * 1000.0;

  const double s = voxel_cm / 100.0;
  const Vec lo = a.positions.colwise().minCoeff().cwiseMax(b.positions.colwise().minCoeff());
  const Vec hi = a.positions.colwise().maxCoeff().cwiseMin(b.positions.colwise().maxCoeff());
  if ((hi - lo).minCoeff() <= 0) return r;
  Eigen::Array3i n;
  for (int k = 0; k < 3; ++k) n[k] = static_cast<int>(std::ceil((hi[k] - lo[k]) / s - 1e-9));
  std::int64_t inside = 0;
  for (int z = 0; z < n[2]; ++z)
    for (int y = 0; y < n[1]; ++y)
      for (int x = 0; x < n[0]; ++x) {
        const Vec c = lo + s * Vec(x + 0.5, y + 0.5, z + 0.5);
        if (point_in_mesh(c, a, seed) && point_in_mesh(c, b, seed)) ++inside;
      }
  r.intersection_volume_cm3 = static_cast<double>(inside) * voxel_cm * voxel_cm * voxel_cm;
  return r;
}

nlohmann::ordered_json PlausibilityReport::to_json() const {
  return {{"max_penetration_mm", max_penetration_mm},
          {"intersection_volume_cm3", intersection_volume_cm3},
          {"voxel_size_cm", voxel_size_cm}};
}

}  // namespace sgt::refine
