#include "sgt/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "sgt/errors.hpp"

namespace sgt::mesh {
namespace {

std::map<graph::Edge, int> edge_face_counts(const std::vector<Face>& faces) {
  std::map<graph::Edge, int> counts;
  for (const Face& f : faces) {
    for (int c = 0; c < 3; ++c) {
      int a = f[c], b = f[(c + 1) % 3];
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  }
  return counts;
}

int parse_index(const std::string& token, int vertex_count, int line) {
  const std::string head = token.substr(0, token.find('/'));
  int value = 0;
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc() || ptr != head.data() + head.size() || value == 0) {
    throw ParseError("bad face index '" + token + "'", line);
  }
  const int idx = value > 0 ? value - 1 : vertex_count + value;
  if (idx < 0 || idx >= vertex_count) {
    throw ParseError("face index " + std::to_string(value) + " out of range (" +
                         std::to_string(vertex_count) + " vertices defined)",
                     line);
  }
  return idx;
}

}  // namespace

Points vertex_normals(const Points& positions, const std::vector<Face>& faces) {
  Points normals = Points::Zero(positions.rows(), 3);
  for (const Face& f : faces) {
    const Eigen::Vector3d a = positions.row(f[0]);
    const Eigen::Vector3d b = positions.row(f[1]);
    const Eigen::Vector3d c = positions.row(f[2]);
    const Eigen::RowVector3d weighted = (b - a).cross(c - a).transpose();
    for (int idx : f) normals.row(idx) += weighted;
  }
  for (int i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 0) normals.row(i) /= len;
  }
  return normals;
}

TriMesh make_mesh(Points positions, std::vector<Face> faces) {
  const int n = static_cast<int>(positions.rows());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= n) {
        throw StructuralError("face " + std::to_string(f) + " references vertex " +
                              std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
      }
    }
  }
  TriMesh mesh;
  mesh.normals = vertex_normals(positions, faces);
  mesh.positions = std::move(positions);
  mesh.faces = std::move(faces);
  return mesh;
}

TriMesh load_obj(std::istream& in, double scale) {
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Face> faces;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    std::istringstream line(raw);
    std::string tag;
    if (!(line >> tag)) continue;
    if (tag == "v") {
      std::string tok[3];
      if (!(line >> tok[0] >> tok[1] >> tok[2])) throw ParseError("vertex needs 3 coordinates", line_no);
      Eigen::RowVector3d p;
      for (int c = 0; c < 3; ++c) {
        std::size_t used = 0;
        try {
          p[c] = std::stod(tok[c], &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok[c].size() || !std::isfinite(p[c])) {
          throw ParseError("bad vertex coordinate '" + tok[c] + "'", line_no);
        }
      }
      verts.push_back(p * scale);
    } else if (tag == "f") {
      std::vector<int> corners;
      std::string tok;
      while (line >> tok) corners.push_back(parse_index(tok, static_cast<int>(verts.size()), line_no));
      if (corners.size() < 3) throw ParseError("face needs at least 3 vertices", line_no);
      for (std::size_t i = 0; i < corners.size(); ++i) {
        for (std::size_t j = i + 1; j < corners.size(); ++j) {
          if (corners[i] == corners[j]) throw ParseError("degenerate face (repeated vertex)", line_no);
        }
      }
      for (std::size_t i = 1; i + 1 < corners.size(); ++i) {
        faces.push_back({corners[0], corners[i], corners[i + 1]});
      }
    }
    // vn, vt, usemtl, o, g, s and the like carry nothing we use.
  }
  Points positions(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) positions.row(static_cast<Eigen::Index>(i)) = verts[i];
  TriMesh mesh = make_mesh(std::move(positions), std::move(faces));
  for (const auto& [edge, count] : edge_face_counts(mesh.faces)) {
    if (count > 2) {
      mesh.non_manifold = true;
      break;
    }
  }
  return mesh;
}

TriMesh load_obj_file(const std::string& path, double scale) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return load_obj(in, scale);
}

void write_obj(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << mesh.positions(i, 0) << ' ' << mesh.positions(i, 1) << ' '
        << mesh.positions(i, 2) << '\n';
  }
  for (const Face& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

void write_obj_file(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  write_obj(out, mesh);
}

EdgeSet edge_set(const Points& positions, const std::vector<Face>& faces) {
  EdgeSet set;
  for (const auto& [edge, count] : edge_face_counts(faces)) {
    set.edges.push_back(edge);
    set.lengths.push_back((positions.row(edge.first) - positions.row(edge.second)).norm());
  }
  return set;
}

bool is_watertight(const TriMesh& mesh) {
  if (mesh.faces.empty()) return false;
  for (const auto& [edge, count] : edge_face_counts(mesh.faces)) {
    if (count != 2) return false;
  }
  return true;
}

graph::MeshGraph to_graph(const TriMesh& mesh) {
  return graph::build_mesh_graph(mesh.positions, mesh.faces);
}

SubsampleMap subsample_count(const TriMesh& mesh, int count, int seed) {
  const int n = mesh.num_vertices();
  if (count < 1 || count > n) {
    throw ArgumentError("subsample count " + std::to_string(count) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<int> kept;
  kept.reserve(count);
  int next = static_cast<int>(((seed % n) + n) % n);
  for (int round = 0; round < count; ++round) {
    kept.push_back(next);
    const Eigen::RowVector3d p = mesh.positions.row(next);
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (mesh.positions.row(i) - p).squaredNorm());
      if (nearest[i] > best_dist) {
        best_dist = nearest[i];
        best = i;
      }
    }
    next = best;
  }
  std::sort(kept.begin(), kept.end());
  SubsampleMap map;
  map.kept_indices = std::move(kept);
  return map;
}

SubsampleMap subsample_uniform(const TriMesh& mesh, int factor, int seed) {
  const int n = mesh.num_vertices();
  if (factor < 1 || factor > n) {
    throw ArgumentError("subsample factor " + std::to_string(factor) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  return subsample_count(mesh, std::max(1, n / factor), seed);
}

std::vector<Face> project_faces(const TriMesh& mesh, const std::vector<int>& kept) {
  const int n = mesh.num_vertices();
  std::vector<int> image(n, 0);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < static_cast<int>(kept.size()); ++k) {
      const double d = (mesh.positions.row(i) - mesh.positions.row(kept[k])).squaredNorm();
      if (d < best) {
        best = d;
        image[i] = k;
      }
    }
  }
  std::vector<Face> out;
  std::set<Face> seen;
  for (const Face& f : mesh.faces) {
    const Face mapped{image[f[0]], image[f[1]], image[f[2]]};
    if (mapped[0] == mapped[1] || mapped[1] == mapped[2] || mapped[0] == mapped[2]) continue;
    Face key = mapped;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    out.push_back(mapped);
  }
  return out;
}

}  // namespace sgt::mesh
