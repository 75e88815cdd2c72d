#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "qcond/dnmap.hpp"
#include "qcond/errors.hpp"

using namespace qcond;

namespace {

ConductivityModel band_default() {
  return builtin_model("band_analytic", {{"c_base", 2.0}, {"q0x", 0.3}, {"q0y", 0.1}});
}

ProbePoint iso_probe(double s, double m, const Mesh& mesh) {
  return ProbePoint::make(s, Vec2c(cplx(m, 0.0), cplx(0.0, m)), mesh);
}

double max_abs(const Eigen::VectorXcd& v) {
  double out = 0.0;
  for (int i = 0; i < v.size(); ++i) out = std::max(out, std::abs(v(i)));
  return out;
}

} // namespace

TEST_SUITE_BEGIN("dnmap");

TEST_CASE("boundary datum kinds and traces") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const BoundaryDatum c = BoundaryDatum::constant(cplx(2.0, -1.0));
  const Eigen::VectorXcd tc = c.trace(mesh);
  for (int i = 0; i < tc.size(); ++i) CHECK(tc(i) == cplx(2.0, -1.0));

  const Vec2c p(cplx(0.05, 0.0), cplx(0.0, 0.05));
  const BoundaryDatum lin = BoundaryDatum::linear_probe(p);
  const Eigen::VectorXcd tl = lin.trace(mesh);
  for (int i = 0; i < tl.size(); ++i) {
    const Vec2& x = mesh.vertices[mesh.boundary_loop[i]];
    CHECK(tl(i) == x(0) * p(0) + x(1) * p(1));  // exact by construction
  }

  const BoundaryDatum scaled = lin.scaled(cplx(0.5, 0.0));
  CHECK(scaled.probe_p(0) == 0.5 * p(0));
}

TEST_CASE("real DN map: constant data give zero flux, linear data give a0 q.nu") {
  const Mesh mesh = build_disk_mesh(1.0, 3);
  const auto model = builtin_model("constant", {{"a0", 3.0}});

  const DNSample zero = dn_real(mesh, model, BoundaryDatum::constant(cplx(0.6, 0.0)));
  CHECK(max_abs(zero.trace) <= 1e-12);

  const Vec2 q(0.04, 0.02);
  const BoundaryDatum lin = BoundaryDatum::linear_probe(Vec2c(cplx(q(0), 0.0), cplx(q(1), 0.0)));
  const DNSample flux = dn_real(mesh, model, lin);
  double vertex_err = 0.0;
  for (int i = 0; i < mesh.num_boundary(); ++i) {
    const Vec2 nu = mesh.boundary_normals[i];
    vertex_err = std::max(vertex_err, std::abs(flux.trace(i) - cplx(3.0 * q.dot(nu), 0.0)));
  }
  INFO("vertexwise error ", vertex_err);
  CHECK(vertex_err <= 1e-3);
  const Vec2 nu0 = mesh.anchor_normal();
  CHECK(std::abs(flux.anchor_value - cplx(3.0 * q.dot(nu0), 0.0)) <= 2e-5);  // recovery superconvergence
  CHECK(flux.kind == MapKind::kReal);
}

TEST_CASE("real DN map rejects complex data") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  CHECK_THROWS_AS(dn_real(mesh, band_default(), BoundaryDatum::constant(cplx(0.1, 0.1))), ValidationError);
}

TEST_CASE("complex DN map: zero datum cancels exactly") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const DNSample s = dn_complex(mesh, band, iso_probe(0.4, 0.05, mesh), BoundaryDatum::constant(0.0));
  CHECK(max_abs(s.trace) == 0.0);
}

TEST_CASE("complex DN map at a probe equals the linearized map for constant models") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto model = builtin_model("constant", {{"a0", 3.0}});
  const ProbePoint probe = iso_probe(0.0, 0.05, mesh);
  const BoundaryDatum h = BoundaryDatum::constant(cplx(0.02, 0.01));
  const DNSample quasi = dn_complex(mesh, model, probe, h);
  const DNSample lin = dn_linearized(mesh, model, probe, h);
  CHECK(max_abs(quasi.trace - lin.trace) <= 1e-12);
}

TEST_CASE("linearized DN map anchor values match the model oracle") {
  const auto band = band_default();
  const Mesh mesh = build_disk_mesh(1.0, 3);
  const ProbePoint probe = iso_probe(1.0, 0.05, mesh);
  const cplx pnu = probe.p(0) * mesh.anchor_normal()(0) + probe.p(1) * mesh.anchor_normal()(1);

  // constant datum: flux(0) = c ds_a(s,p) (p.nu(0)); measured rel err ~1e-4 at L3
  const cplx c(1.0, 0.0);
  const DNSample sc = dn_linearized(mesh, band, probe, BoundaryDatum::constant(c));
  const auto ev = band.evaluate(cplx(1.0, 0.0), probe.p);
  const cplx oracle_c = c * ev.ds_a * pnu;
  CHECK(std::abs(sc.anchor_value - oracle_c) / std::abs(oracle_c) <= 5e-4);

  // linear datum: flux(0) = (p.nu(0)) [a(s,p) + grad_p a(s,p).p]
  const DNSample sl = dn_linearized(mesh, band, probe, BoundaryDatum::linear_probe(probe.p));
  const cplx oracle_l = pnu * (ev.a + bdot(ev.dp_a, probe.p));
  CHECK(std::abs(sl.anchor_value - oracle_l) / std::abs(oracle_l) <= 5e-4);
}

TEST_CASE("linearized DN map is linear in the datum") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.5, 0.05, mesh);
  auto [coeffs, op] = assemble_linearized(mesh, band, probe);
  (void)coeffs;

  const cplx alpha(0.7, -0.3), beta(-0.2, 1.1);
  const BoundaryDatum h1 = BoundaryDatum::constant(cplx(1.0, 0.0));
  const BoundaryDatum h2 = BoundaryDatum::linear_probe(probe.p);
  const BoundaryDatum combo = BoundaryDatum::custom("combo", [&](const Vec2& x) {
    return alpha * h1.evaluate(x) + beta * h2.evaluate(x);
  });
  const DNSample s1 = dn_linearized_with(op, probe, h1);
  const DNSample s2 = dn_linearized_with(op, probe, h2);
  const DNSample sc = dn_linearized_with(op, probe, combo);
  CHECK(max_abs(sc.trace - (alpha * s1.trace + beta * s2.trace)) <= 1e-10);
}

TEST_CASE("gateaux quotients halve their gap with the step (band) and vanish for constants") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const std::vector<double> steps = {0.04, 0.02, 0.01, 0.005};

  const auto band = band_default();
  auto [sample, table] = gateaux_fd(mesh, band, iso_probe(0.5, 0.05, mesh), BoundaryDatum::constant(1.0), steps);
  CHECK(sample.kind == MapKind::kGateauxFd);
  CHECK(sample.provenance.finite_difference);
  CHECK(sample.provenance.fd_step == 0.005);
  for (double ratio : table.gap_ratios) {
    CHECK(ratio > 0.35);
    CHECK(ratio < 0.65);
  }
  CHECK(table.richardson_gap < 0.1 * table.gaps.back());

  const auto con = builtin_model("constant", {{"a0", 3.0}});
  auto [s2, t2] = gateaux_fd(mesh, con, iso_probe(0.5, 0.05, mesh), BoundaryDatum::constant(1.0), steps);
  (void)s2;
  for (double gap : t2.gaps) CHECK(gap <= 1e-9);
}

TEST_CASE("gateaux step validation") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.2, 0.05, mesh);
  const BoundaryDatum h = BoundaryDatum::constant(1.0);
  CHECK_THROWS_AS(gateaux_fd(mesh, band, probe, h, {0.02, 0.0}), ValidationError);
  CHECK_THROWS_AS(gateaux_fd(mesh, band, probe, h, {0.01, 0.02}), ValidationError);
  CHECK_THROWS_AS(gateaux_fd(mesh, band, probe, h, {}), ValidationError);
  CHECK_THROWS_AS(gateaux_fd(mesh, band, probe, h, {0.2, 0.1}), ValidationError);  // budget
}

TEST_CASE("real and complex maps coincide at p = 0 (10-datum randomized suite)") {
  const Mesh mesh = build_disk_mesh(1.0, 3);
  const auto band = band_default();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const double s = uni(rng);
    const double a1 = 0.015 * uni(rng), a2 = 0.01 * uni(rng), a3 = 0.005 * uni(rng);
    const BoundaryDatum h = BoundaryDatum::custom("rand" + std::to_string(trial), [=](const Vec2& x) {
      const cplx w(x(0) - 1.0, x(1));
      return cplx(a1 * w.real() + a2 * (w * w).real() + a3 * (w * w * w).real(), 0.0);
    });
    worst = std::max(worst, consistency_real_complex(mesh, band, s, h));
  }
  INFO("worst deviation ", worst);
  CHECK(worst <= 1e-9);
}

TEST_CASE("recovered anchor flux superconverges for exact manufactured fields") {
  // v = c and v = p.x solve the linearized problem exactly, with the closed
  // flux (A grad v + b v).nu; these are the fields the reconstruction reads.
  const auto band = band_default();
  std::vector<double> errs_c, errs_l;
  for (int level : {2, 3, 4}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    const ProbePoint probe = iso_probe(0.5, 0.05, mesh);
    const cplx pnu = probe.p(0) * mesh.anchor_normal()(0) + probe.p(1) * mesh.anchor_normal()(1);
    const auto ev = band.evaluate(cplx(0.5, 0.0), probe.p);  // u_sp(0) = s

    const cplx c(1.0, 0.0);
    const DNSample sc = dn_linearized(mesh, band, probe, BoundaryDatum::constant(c));
    errs_c.push_back(std::abs(sc.anchor_value - c * ev.ds_a * pnu));

    const DNSample sl = dn_linearized(mesh, band, probe, BoundaryDatum::linear_probe(probe.p));
    errs_l.push_back(std::abs(sl.anchor_value - pnu * (ev.a + bdot(ev.dp_a, probe.p))));
  }
  INFO("constant-field anchor errors ", errs_c[0], " ", errs_c[1], " ", errs_c[2]);
  INFO("linear-field anchor errors ", errs_l[0], " ", errs_l[1], " ", errs_l[2]);
  CHECK(fit_log2_rate(errs_c) > 1.6);
  CHECK(fit_log2_rate(errs_l) > 1.6);

  // A genuinely curved solution: vertex-pointwise recovery is first order
  // there; the anchor error must still decay.
  const auto con = builtin_model("constant", {{"a0", 2.0}});
  std::vector<double> errs_q;
  for (int level : {1, 2, 3}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    const BoundaryDatum h = BoundaryDatum::custom("harm2", [](const Vec2& x) {
      return cplx(0.2 * (x(0) * x(0) - x(1) * x(1)), 0.0);
    });
    errs_q.push_back(std::abs(dn_real(mesh, con, h).anchor_value));  // exact anchor flux is 0
  }
  INFO("curved-field anchor errors ", errs_q[0], " ", errs_q[1], " ", errs_q[2]);
  CHECK(fit_log2_rate(errs_q) > 0.8);
}

TEST_CASE("samples survive the line-record round trip bitwise") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.37, 0.041, mesh);
  const DNSample original = dn_linearized(mesh, band, probe, BoundaryDatum::linear_probe(probe.p));

  std::stringstream ss;
  write_sample(ss, original);
  const auto back = read_samples(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].kind == original.kind);
  CHECK(back[0].mesh_level == original.mesh_level);
  CHECK(back[0].anchor_value == original.anchor_value);
  CHECK(back[0].probe.s == original.probe.s);
  CHECK(back[0].probe.p == original.probe.p);
  REQUIRE(back[0].trace.size() == original.trace.size());
  for (int i = 0; i < original.trace.size(); ++i) CHECK(back[0].trace(i) == original.trace(i));
  CHECK(sample_key(back[0].probe.s, back[0].probe.p, back[0].datum_kind, back[0].datum_params) ==
        sample_key(original.probe, BoundaryDatum::linear_probe(probe.p)));
}

TEST_CASE("discrete maximum principle for a >= 1 models") {
  const Mesh mesh = build_disk_mesh(1.0, 3);
  const auto band = band_default();
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a1 = 0.3 * uni(rng), a2 = 0.2 * uni(rng), c = 0.2 * uni(rng);
    auto u = solve_quasilinear_real(mesh, band, [=](const Vec2& x) {
      const cplx w(x(0) - 1.0, x(1));
      return c + a1 * w.real() + a2 * (w * w).real();
    }, {});
    double interior = 0.0, boundary = 0.0;
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const double val = std::abs(u.values(v).real());
      if (mesh.is_boundary_vertex(v))
        boundary = std::max(boundary, val);
      else
        interior = std::max(interior, val);
    }
    CHECK(interior <= boundary + 1e-8);
  }
}

TEST_SUITE_END();
