#include "qcond/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

constexpr int kRingCount[] = {6, 12, 18, 24, 30};  // ring j carries 6j vertices
constexpr int kBaseRings = 5;

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b(0) - a(0)) * (c(1) - a(1)) - (b(1) - a(1)) * (c(0) - a(0)));
}

void push_ccw(std::vector<std::array<int, 3>>& tris, const std::vector<Vec2>& verts, int a, int b, int c) {
  if (signed_area(verts[a], verts[b], verts[c]) > 0.0)
    tris.push_back({a, b, c});
  else
    tris.push_back({a, c, b});
}

// Fills derived tables (loop order, normals, h) from vertices/triangles/edges.
void finalize(Mesh& mesh) {
  const int n = mesh.num_vertices();
  mesh.boundary_index_of_vertex.assign(n, -1);
  mesh.boundary_loop.clear();
  mesh.boundary_loop.reserve(mesh.boundary_edges.size());
  for (const auto& e : mesh.boundary_edges) mesh.boundary_loop.push_back(e[0]);
  for (int i = 0; i < static_cast<int>(mesh.boundary_loop.size()); ++i)
    mesh.boundary_index_of_vertex[mesh.boundary_loop[i]] = i;

  mesh.boundary_normals.clear();
  mesh.boundary_normals.reserve(mesh.boundary_loop.size());
  for (int v : mesh.boundary_loop)
    mesh.boundary_normals.push_back((mesh.vertices[v] - mesh.center).normalized());

  double h = 0.0;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      h = std::max(h, (mesh.vertices[t[k]] - mesh.vertices[t[(k + 1) % 3]]).norm());
  mesh.mesh_size_h = h;
}

Mesh build_base_disk(double radius) {
  Mesh mesh;
  mesh.radius = radius;
  mesh.center = Vec2(radius, 0.0);
  mesh.refinement_level = 0;

  mesh.vertices.push_back(mesh.center);
  std::vector<std::vector<int>> rings(kBaseRings + 1);
  rings[0] = {0};
  for (int j = 1; j <= kBaseRings; ++j) {
    const int count = kRingCount[j - 1];
    const double r = radius * j / kBaseRings;
    rings[j].resize(count);
    for (int k = 0; k < count; ++k) {
      const double ang = 2.0 * M_PI * k / count;
      Vec2 v = mesh.center + r * Vec2(std::cos(ang), std::sin(ang));
      if (j == kBaseRings && 2 * k == count) v = Vec2::Zero(); // exact anchor
      rings[j][k] = mesh.num_vertices();
      mesh.vertices.push_back(v);
    }
  }
  mesh.anchor_vertex = rings[kBaseRings][kRingCount[kBaseRings - 1] / 2];

  // center fan (mirror-symmetric about the x axis by construction)
  for (int k = 0; k < 6; ++k)
    push_ccw(mesh.triangles, mesh.vertices, 0, rings[1][k], rings[1][(k + 1) % 6]);

  // Annuli: sweep the upper half by angle, then mirror across the x axis.
  // The reflection symmetry gives every seam vertex (the anchor included) a
  // symmetric patch, which the anchor flux recovery relies on.
  for (int j = 1; j < kBaseRings; ++j) {
    const auto& in = rings[j];
    const auto& out = rings[j + 1];
    const int ni = static_cast<int>(in.size());
    const int no = static_cast<int>(out.size());
    std::vector<std::array<std::pair<int, int>, 3>> upper;  // (ring offset 0/1, index)
    int i = 0, o = 0;
    while (i < ni / 2 || o < no / 2) {
      const double ai_next = 2.0 * M_PI * (i + 1) / ni;
      const double ao_next = 2.0 * M_PI * (o + 1) / no;
      const bool advance_outer = (o < no / 2) && (i >= ni / 2 || ao_next <= ai_next);
      if (advance_outer) {
        upper.push_back({std::pair{1, o}, std::pair{1, o + 1}, std::pair{0, i}});
        ++o;
      } else {
        upper.push_back({std::pair{0, i}, std::pair{1, o}, std::pair{0, i + 1}});
        ++i;
      }
    }
    auto global = [&](std::pair<int, int> rk) { return rk.first == 0 ? in[rk.second % ni] : out[rk.second % no]; };
    auto mirrored = [&](std::pair<int, int> rk) {
      const int count = rk.first == 0 ? ni : no;
      return std::pair<int, int>{rk.first, (count - rk.second) % count};
    };
    for (const auto& t : upper) {
      push_ccw(mesh.triangles, mesh.vertices, global(t[0]), global(t[1]), global(t[2]));
      push_ccw(mesh.triangles, mesh.vertices, global(mirrored(t[0])), global(mirrored(t[2])),
               global(mirrored(t[1])));
    }
  }

  const auto& rim = rings[kBaseRings];
  for (int k = 0; k < static_cast<int>(rim.size()); ++k)
    mesh.boundary_edges.push_back({rim[k], rim[(k + 1) % rim.size()]});

  finalize(mesh);
  return mesh;
}

} // namespace

Mesh build_disk_mesh(double radius, int refinement_level) {
  if (!(radius > 0.0)) throw ValidationError("build_disk_mesh: radius must be positive, got " + std::to_string(radius));
  if (refinement_level < 0) throw ValidationError("build_disk_mesh: refinement_level must be nonnegative");
  if (refinement_level > kMaxRefinementLevel)
    throw ResourceLimitError("build_disk_mesh: refinement_level " + std::to_string(refinement_level) +
                             " exceeds the maximum " + std::to_string(kMaxRefinementLevel));
  Mesh mesh = build_base_disk(radius);
  for (int l = 0; l < refinement_level; ++l) mesh = refine(mesh);
  return mesh;
}

Mesh refine(const Mesh& mesh) {
  if (mesh.refinement_level + 1 > kMaxRefinementLevel)
    throw ResourceLimitError("refine: refinement beyond level " + std::to_string(kMaxRefinementLevel));

  Mesh out;
  out.radius = mesh.radius;
  out.center = mesh.center;
  out.refinement_level = mesh.refinement_level + 1;
  out.vertices = mesh.vertices;
  out.anchor_vertex = mesh.anchor_vertex;

  std::set<std::pair<int, int>> boundary_set;
  for (const auto& e : mesh.boundary_edges) boundary_set.insert(std::minmax(e[0], e[1]));

  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    Vec2 m = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
    if (boundary_set.count(key)) m = mesh.center + mesh.radius * (m - mesh.center).normalized();
    const int idx = static_cast<int>(out.vertices.size());
    out.vertices.push_back(m);
    midpoint.emplace(key, idx);
    return idx;
  };

  out.triangles.reserve(mesh.triangles.size() * 4);
  for (const auto& t : mesh.triangles) {
    const int m01 = mid(t[0], t[1]);
    const int m12 = mid(t[1], t[2]);
    const int m20 = mid(t[2], t[0]);
    out.triangles.push_back({t[0], m01, m20});
    out.triangles.push_back({t[1], m12, m01});
    out.triangles.push_back({t[2], m20, m12});
    out.triangles.push_back({m01, m12, m20});
  }

  out.boundary_edges.reserve(mesh.boundary_edges.size() * 2);
  for (const auto& e : mesh.boundary_edges) {
    const int m = mid(e[0], e[1]);
    out.boundary_edges.push_back({e[0], m});
    out.boundary_edges.push_back({m, e[1]});
  }

  finalize(out);
  return out;
}

Vec2 outward_normal(const Mesh& mesh, int boundary_vertex) {
  if (boundary_vertex < 0 || boundary_vertex >= mesh.num_vertices())
    throw ValidationError("outward_normal: vertex index out of range");
  const int bi = mesh.boundary_index_of_vertex[boundary_vertex];
  if (bi < 0) throw ValidationError("outward_normal: vertex " + std::to_string(boundary_vertex) + " is interior");
  return mesh.boundary_normals[bi];
}

void validate_mesh(const Mesh& mesh) {
  if (mesh.anchor_vertex < 0 || mesh.anchor_vertex >= mesh.num_vertices())
    throw ValidationError("mesh: anchor vertex out of range");
  if (mesh.vertices[mesh.anchor_vertex].norm() > 1e-12)
    throw ValidationError("mesh: anchor vertex is not at the origin");
  if (!mesh.is_boundary_vertex(mesh.anchor_vertex))
    throw ValidationError("mesh: anchor vertex is not on the boundary");

  for (const auto& nrm : mesh.boundary_normals)
    if (std::abs(nrm.norm() - 1.0) > 1e-12) throw ValidationError("mesh: non-unit boundary normal");

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    if (signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) <= 0.0)
      throw ValidationError("mesh: triangle " + std::to_string(t) + " is not positively oriented");
  }

  const std::size_t b = mesh.boundary_edges.size();
  std::set<int> seen;
  for (std::size_t i = 0; i < b; ++i) {
    if (mesh.boundary_edges[i][1] != mesh.boundary_edges[(i + 1) % b][0])
      throw ValidationError("mesh: boundary edges are not a single closed loop");
    if (!seen.insert(mesh.boundary_edges[i][0]).second)
      throw ValidationError("mesh: boundary loop revisits a vertex");
  }
}

double triangle_area(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  return signed_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

double total_area(const Mesh& mesh) {
  double a = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) a += triangle_area(mesh, static_cast<int>(t));
  return a;
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os.precision(17);
  os << "qcond-mesh 1\n";
  os << "radius " << mesh.radius << " center " << mesh.center(0) << " " << mesh.center(1) << "\n";
  os << "level " << mesh.refinement_level << "\n";
  os << "anchor " << mesh.anchor_vertex << "\n";
  os << "vertices " << mesh.num_vertices() << "\n";
  for (const auto& v : mesh.vertices) os << v(0) << " " << v(1) << "\n";
  os << "triangles " << mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "boundary " << mesh.boundary_loop.size() << "\n";
  for (int v : mesh.boundary_loop) os << v << "\n";
}

Mesh read_mesh(std::istream& is) {
  Mesh mesh;
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (!is || tag != "qcond-mesh" || version != 1) throw ValidationError("read_mesh: bad header");
  is >> tag >> mesh.radius >> tag >> mesh.center(0) >> mesh.center(1);
  is >> tag >> mesh.refinement_level;
  is >> tag >> mesh.anchor_vertex;
  std::size_t nv = 0, nt = 0, nb = 0;
  is >> tag >> nv;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices) is >> v(0) >> v(1);
  is >> tag >> nt;
  mesh.triangles.resize(nt);
  for (auto& t : mesh.triangles) is >> t[0] >> t[1] >> t[2];
  is >> tag >> nb;
  std::vector<int> loop(nb);
  for (auto& v : loop) is >> v;
  if (!is) throw ValidationError("read_mesh: truncated file");
  mesh.boundary_edges.reserve(nb);
  for (std::size_t i = 0; i < nb; ++i) mesh.boundary_edges.push_back({loop[i], loop[(i + 1) % nb]});
  finalize(mesh);
  validate_mesh(mesh);
  return mesh;
}

} // namespace qcond
