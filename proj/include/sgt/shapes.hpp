#pragma once

#include "sgt/mesh.hpp"

namespace sgt::shapes {

/// Subdivided icosahedron projected to a sphere, outward winding.
/// Vertex counts: 12, 42, 162, 642, 2562 for subdivisions 0..4.
mesh::TriMesh icosphere(int subdivisions, double radius = 1.0,
                        const Eigen::RowVector3d& center = Eigen::RowVector3d::Zero());

/// Axis-aligned cube of the given side with its minimum corner at `origin`,
/// 8 vertices and 12 outward-wound triangles.
mesh::TriMesh cube(double side = 1.0, const Eigen::RowVector3d& origin = Eigen::RowVector3d::Zero());

/// Vertex count of the procedural hand template.
inline constexpr int kHandVertices = 4023;

/// Closed right-hand template: a tube of elliptic rings running from the
/// forearm (z = 0) through wrist, palm and flattened finger block to the tip,
/// closed by a pole at each end. Exactly kHandVertices vertices.
mesh::TriMesh hand_template();

/// Reflects through the x = 0 plane and flips winding (right hand -> left).
mesh::TriMesh mirrored(const mesh::TriMesh& m);

/// Applies p -> R p + t.
mesh::TriMesh transformed(const mesh::TriMesh& m, const Eigen::Matrix3d& rotation,
                          const Eigen::RowVector3d& translation);

/// Concatenates two meshes into one vertex/face list (b's indices shifted).
mesh::TriMesh merged(const mesh::TriMesh& a, const mesh::TriMesh& b);

/// Signed enclosed volume; positive for outward winding.
double signed_volume(const mesh::TriMesh& m);

}  // namespace sgt::shapes
