#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sgt/graph.hpp"

namespace sgt::mesh {

/// Triangle mesh in meters. Normals are area-weighted averages of incident
/// face normals; vertices without incident faces keep a zero normal.
struct TriMesh {
  Points positions;
  std::vector<Face> faces;
  Points normals;
  /// Set by load_obj when some edge borders more than two faces.
  bool non_manifold = false;

  int num_vertices() const { return static_cast<int>(positions.rows()); }
  int num_faces() const { return static_cast<int>(faces.size()); }
};

/// Validates indices and computes normals.
TriMesh make_mesh(Points positions, std::vector<Face> faces);

Points vertex_normals(const Points& positions, const std::vector<Face>& faces);

/// Parses Wavefront OBJ text (`v` and `f` records, 1-based or negative
/// relative indices, `#` comments). Polygons are fan-split from their first
/// corner, so a quad `a b c d` becomes (a b c) and (a c d). Positions are
/// multiplied by `scale`. Throws ParseError naming the offending line.
TriMesh load_obj(std::istream& in, double scale = 1.0);
TriMesh load_obj_file(const std::string& path, double scale = 1.0);

/// Writes `v` and `f` records with round-trip precision.
void write_obj(std::ostream& out, const TriMesh& mesh);
void write_obj_file(const std::string& path, const TriMesh& mesh);

struct EdgeSet {
  std::vector<graph::Edge> edges;
  std::vector<double> lengths;
  int size() const { return static_cast<int>(edges.size()); }
};

/// Every undirected face edge once, in canonical order, with its length.
EdgeSet edge_set(const Points& positions, const std::vector<Face>& faces);
inline EdgeSet edge_set(const TriMesh& mesh) { return edge_set(mesh.positions, mesh.faces); }

/// True iff every edge is shared by exactly two faces.
bool is_watertight(const TriMesh& mesh);

graph::MeshGraph to_graph(const TriMesh& mesh);

struct SubsampleMap {
  std::vector<int> kept_indices;  // strictly increasing
  std::vector<Face> coarse_faces;
  int size() const { return static_cast<int>(kept_indices.size()); }
};

/// Farthest-point sampling started from vertex `seed mod |V|`, keeping
/// max(1, floor(|V| / factor)) vertices. Coarse faces are left empty; see
/// project_faces.
SubsampleMap subsample_uniform(const TriMesh& mesh, int factor, int seed);
SubsampleMap subsample_count(const TriMesh& mesh, int count, int seed);

/// Re-triangulates over kept vertices by sending every vertex to its nearest
/// kept vertex and keeping faces whose three images are distinct. Indices
/// in the result refer to positions within `kept`.
std::vector<Face> project_faces(const TriMesh& mesh, const std::vector<int>& kept);

}  // namespace sgt::mesh
