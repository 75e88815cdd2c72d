#ifndef QCOND_GEOMETRY_HPP
#define QCOND_GEOMETRY_HPP

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "qcond/numerics.hpp"

namespace qcond {

inline constexpr int kMaxRefinementLevel = 8;

// Triangulated disk with its boundary anchored at the origin. Immutable after
// construction; refine() returns a new mesh.
struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;       // positively oriented
  std::vector<std::array<int, 2>> boundary_edges;  // counterclockwise loop
  int anchor_vertex = -1;                          // vertex at the origin
  std::vector<Vec2> boundary_normals;              // per boundary-loop vertex
  int refinement_level = 0;
  double mesh_size_h = 0.0;

  // circle data used for analytic normals and refinement projection
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  // derived lookup tables
  std::vector<int> boundary_loop;             // CCW vertex order; edge i = (loop[i], loop[i+1])
  std::vector<int> boundary_index_of_vertex;  // -1 for interior vertices

  bool is_boundary_vertex(int v) const { return boundary_index_of_vertex[v] >= 0; }
  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_boundary() const { return static_cast<int>(boundary_loop.size()); }
  const Vec2& anchor_normal() const { return boundary_normals[boundary_index_of_vertex[anchor_vertex]]; }
  int anchor_loop_index() const { return boundary_index_of_vertex[anchor_vertex]; }
};

// Disk of the given radius centered at (radius, 0), so the origin lies on the
// boundary and the outward normal there is (-1, 0).
Mesh build_disk_mesh(double radius, int refinement_level);

// One uniform refinement step (midpoint subdivision, boundary midpoints
// projected back onto the circle).
Mesh refine(const Mesh& mesh);

// Analytic outward normal at a boundary vertex; throws for interior vertices.
Vec2 outward_normal(const Mesh& mesh, int boundary_vertex);

// Checks every Mesh invariant; throws ValidationError on the first failure.
void validate_mesh(const Mesh& mesh);

double triangle_area(const Mesh& mesh, int t);
double total_area(const Mesh& mesh);

// Text export/import: vertex table, triangle table, boundary loop, anchor.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

} // namespace qcond

#endif
