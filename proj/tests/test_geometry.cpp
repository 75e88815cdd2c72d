#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qcond/errors.hpp"
#include "qcond/geometry.hpp"
#include "qcond/numerics.hpp"

using namespace qcond;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("base disk mesh satisfies every invariant") {
  const Mesh mesh = build_disk_mesh(1.0, 0);
  CHECK_NOTHROW(validate_mesh(mesh));
  CHECK(mesh.vertices[mesh.anchor_vertex].norm() <= 1e-12);
  CHECK((mesh.anchor_normal() - Vec2(-1.0, 0.0)).norm() <= 1e-10);
  CHECK(mesh.refinement_level == 0);
  CHECK(mesh.num_boundary() == 30);
}

TEST_CASE("construction argument validation") {
  CHECK_THROWS_AS(build_disk_mesh(0.0, 1), ValidationError);
  CHECK_THROWS_AS(build_disk_mesh(-2.0, 1), ValidationError);
  CHECK_THROWS_AS(build_disk_mesh(1.0, kMaxRefinementLevel + 1), ResourceLimitError);
}

TEST_CASE("refinement doubles the boundary and contracts h") {
  Mesh mesh = build_disk_mesh(1.0, 0);
  for (int l = 1; l <= 4; ++l) {
    const int nb = mesh.num_boundary();
    const double h = mesh.mesh_size_h;
    mesh = refine(mesh);
    CHECK_NOTHROW(validate_mesh(mesh));
    CHECK(mesh.refinement_level == l);
    CHECK(mesh.num_boundary() == 2 * nb);
    CHECK(mesh.mesh_size_h <= 0.75 * h);
    CHECK(mesh.mesh_size_h >= h / 2.0 / 1.5);  // halves within a factor 1.5
    CHECK(mesh.vertices[mesh.anchor_vertex].norm() <= 1e-12);
  }
}

TEST_CASE("triangle areas converge to the disk area at second order") {
  std::vector<double> errors;
  for (int level = 2; level <= 5; ++level) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    errors.push_back(std::abs(total_area(mesh) - M_PI));
  }
  const double rate = fit_log2_rate(errors);
  INFO("area errors ", errors[0], " ", errors[1], " ", errors[2], " ", errors[3], " rate ", rate);
  CHECK(rate > 1.7);
  CHECK(rate < 2.3);
}

TEST_CASE("outward normals are the analytic radial directions") {
  const Mesh mesh = build_disk_mesh(1.0, 3);
  CHECK((outward_normal(mesh, mesh.anchor_vertex) - Vec2(-1.0, 0.0)).norm() <= 1e-12);

  // antipode of the anchor
  int closest = -1;
  double best = 1e300;
  for (int v : mesh.boundary_loop) {
    const double d = (mesh.vertices[v] - Vec2(2.0, 0.0)).norm();
    if (d < best) {
      best = d;
      closest = v;
    }
  }
  CHECK((outward_normal(mesh, closest) - Vec2(1.0, 0.0)).norm() <= 1e-12);

  for (int v : mesh.boundary_loop) {
    const Vec2 exact = (mesh.vertices[v] - mesh.center).normalized();
    CHECK(outward_normal(mesh, v).dot(exact) >= 1.0 - 1e-12);
  }

  // interior vertex rejection (the center is vertex 0)
  CHECK_THROWS_AS(outward_normal(mesh, 0), ValidationError);
  CHECK_THROWS_AS(outward_normal(mesh, -1), ValidationError);
}

TEST_CASE("boundary loop visits every boundary vertex exactly once") {
  const Mesh mesh = build_disk_mesh(1.5, 2);
  std::vector<int> seen(mesh.num_vertices(), 0);
  for (int v : mesh.boundary_loop) seen[v]++;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    CHECK(seen[v] == (mesh.is_boundary_vertex(v) ? 1 : 0));
}

TEST_CASE("meshes survive a text round trip") {
  const Mesh mesh = build_disk_mesh(0.8, 2);
  std::stringstream ss;
  write_mesh(ss, mesh);
  const Mesh back = read_mesh(ss);
  REQUIRE(back.num_vertices() == mesh.num_vertices());
  REQUIRE(back.triangles.size() == mesh.triangles.size());
  CHECK(back.anchor_vertex == mesh.anchor_vertex);
  CHECK(back.refinement_level == mesh.refinement_level);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    CHECK((back.vertices[v] - mesh.vertices[v]).norm() == 0.0);  // 17-digit text is exact
  CHECK(back.boundary_loop == mesh.boundary_loop);
}

TEST_CASE("anchor is exact across radii") {
  for (double radius : {0.5, 1.0, 2.0}) {
    const Mesh mesh = build_disk_mesh(radius, 1);
    CHECK(mesh.vertices[mesh.anchor_vertex].norm() <= 1e-12);
    CHECK((mesh.anchor_normal() - Vec2(-1.0, 0.0)).norm() <= 1e-10);
  }
}

TEST_SUITE_END();
