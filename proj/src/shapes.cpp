#include "sgt/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "sgt/errors.hpp"

namespace sgt::shapes {
namespace {

struct Profile {
  double t;
  double half_width;
  double half_thickness;
};

// Forearm, wrist, palm, finger block, tip. Meters.
constexpr Profile kHandProfile[] = {
    {0.00, 0.030, 0.028}, {0.30, 0.028, 0.024}, {0.38, 0.026, 0.019},
    {0.46, 0.041, 0.017}, {0.66, 0.044, 0.016}, {0.74, 0.040, 0.012},
    {0.94, 0.030, 0.009}, {1.00, 0.022, 0.007},
};
constexpr double kHandLength = 0.30;
constexpr double kCapFraction = 0.04;
constexpr int kHandRings = 84;

Profile profile_at(double t) {
  const auto* it = std::upper_bound(std::begin(kHandProfile), std::end(kHandProfile), t,
                                    [](double v, const Profile& p) { return v < p.t; });
  if (it == std::begin(kHandProfile)) return kHandProfile[0];
  if (it == std::end(kHandProfile)) return kHandProfile[std::size(kHandProfile) - 1];
  const Profile& a = *(it - 1);
  const Profile& b = *it;
  const double s = (t - a.t) / (b.t - a.t);
  double cap = 1.0;
  if (t < kCapFraction) cap = std::sqrt(1.0 - std::pow((kCapFraction - t) / kCapFraction, 2));
  if (t > 1.0 - kCapFraction) cap = std::sqrt(1.0 - std::pow((t - 1.0 + kCapFraction) / kCapFraction, 2));
  return {t, cap * (a.half_width + s * (b.half_width - a.half_width)),
          cap * (a.half_thickness + s * (b.half_thickness - a.half_thickness))};
}

}  // namespace

mesh::TriMesh icosphere(int subdivisions, double radius, const Eigen::RowVector3d& center) {
  if (subdivisions < 0) throw ArgumentError("negative subdivision count");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::RowVector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int id = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  Points positions(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) {
    positions.row(static_cast<Eigen::Index>(i)) = verts[i] * radius + center;
  }
  return mesh::make_mesh(std::move(positions), std::move(faces));
}

mesh::TriMesh cube(double side, const Eigen::RowVector3d& origin) {
  Points positions(8, 3);
  for (int v = 0; v < 8; ++v) {
    positions.row(v) = origin + side * Eigen::RowVector3d(v & 1, (v >> 1) & 1, (v >> 2) & 1);
  }
  std::vector<Face> faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return mesh::make_mesh(std::move(positions), std::move(faces));
}

mesh::TriMesh hand_template() {
  const int ring_budget = kHandVertices - 2;
  std::vector<double> ts(kHandRings);
  std::vector<double> perimeter(kHandRings);
  double total = 0.0;
  for (int r = 0; r < kHandRings; ++r) {
    ts[r] = (r + 0.5) / kHandRings;
    const Profile p = profile_at(ts[r]);
    // Ramanujan's ellipse perimeter.
    const double a = p.half_width, b = p.half_thickness;
    perimeter[r] = std::numbers::pi * (3 * (a + b) - std::sqrt((3 * a + b) * (a + 3 * b)));
    total += perimeter[r];
  }
  // Largest-remainder apportionment of the vertex budget over the rings.
  std::vector<int> counts(kHandRings);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int r = 0; r < kHandRings; ++r) {
    const double share = ring_budget * perimeter[r] / total;
    counts[r] = static_cast<int>(std::floor(share));
    assigned += counts[r];
    remainders.emplace_back(share - counts[r], r);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (int i = 0; assigned < ring_budget; ++i, ++assigned) ++counts[remainders[i].second];

  std::vector<Eigen::RowVector3d> verts;
  std::vector<int> ring_start(kHandRings);
  verts.emplace_back(0.0, 0.0, 0.0);
  for (int r = 0; r < kHandRings; ++r) {
    ring_start[r] = static_cast<int>(verts.size());
    const Profile p = profile_at(ts[r]);
    for (int j = 0; j < counts[r]; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / counts[r];
      verts.emplace_back(p.half_width * std::cos(theta), p.half_thickness * std::sin(theta),
                         ts[r] * kHandLength);
    }
  }
  verts.emplace_back(0.0, 0.0, kHandLength);
  const int top = static_cast<int>(verts.size()) - 1;

  std::vector<Face> faces;
  for (int j = 0; j < counts[0]; ++j) {
    faces.push_back({0, ring_start[0] + (j + 1) % counts[0], ring_start[0] + j});
  }
  for (int r = 0; r + 1 < kHandRings; ++r) {
    const int na = counts[r], nb = counts[r + 1];
    const int sa = ring_start[r], sb = ring_start[r + 1];
    int i = 0, j = 0;
    while (i < na || j < nb) {
      const double next_a = static_cast<double>(i + 1) / na;
      const double next_b = static_cast<double>(j + 1) / nb;
      if (j >= nb || (i < na && next_a <= next_b)) {
        faces.push_back({sa + i % na, sa + (i + 1) % na, sb + j % nb});
        ++i;
      } else {
        faces.push_back({sa + i % na, sb + (j + 1) % nb, sb + j % nb});
        ++j;
      }
    }
  }
  const int last = kHandRings - 1;
  for (int j = 0; j < counts[last]; ++j) {
    faces.push_back({ring_start[last] + j, ring_start[last] + (j + 1) % counts[last], top});
  }

  Points positions(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) positions.row(static_cast<Eigen::Index>(i)) = verts[i];
  return mesh::make_mesh(std::move(positions), std::move(faces));
}

mesh::TriMesh mirrored(const mesh::TriMesh& m) {
  Points positions = m.positions;
  positions.col(0) *= -1.0;
  std::vector<Face> faces = m.faces;
  for (Face& f : faces) std::swap(f[1], f[2]);
  return mesh::make_mesh(std::move(positions), std::move(faces));
}

mesh::TriMesh transformed(const mesh::TriMesh& m, const Eigen::Matrix3d& rotation,
                          const Eigen::RowVector3d& translation) {
  Points positions = (m.positions * rotation.transpose()).rowwise() + translation;
  return mesh::make_mesh(std::move(positions), m.faces);
}

mesh::TriMesh merged(const mesh::TriMesh& a, const mesh::TriMesh& b) {
  Points positions(a.num_vertices() + b.num_vertices(), 3);
  positions << a.positions, b.positions;
  std::vector<Face> faces = a.faces;
  for (Face f : b.faces) {
    for (int& idx : f) idx += a.num_vertices();
    faces.push_back(f);
  }
  return mesh::make_mesh(std::move(positions), std::move(faces));
}

double signed_volume(const mesh::TriMesh& m) {
  double volume = 0.0;
  for (const Face& f : m.faces) {
    const Eigen::Vector3d a = m.positions.row(f[0]);
    const Eigen::Vector3d b = m.positions.row(f[1]);
    const Eigen::Vector3d c = m.positions.row(f[2]);
    volume += a.dot(b.cross(c)) / 6.0;
  }
  return volume;
}

}  // namespace sgt::shapes
