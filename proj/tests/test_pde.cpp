#include <doctest.h>

#include <cmath>
#include <random>

#include "qcond/dnmap.hpp"
#include "qcond/errors.hpp"
#include "qcond/pde.hpp"

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

TEST_SUITE_BEGIN("pde");

TEST_CASE("fem cache geometry identities") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const FemCache cache = FemCache::build(mesh);
  CHECK(cache.vertex_mass.sum() == doctest::Approx(total_area(mesh)).epsilon(1e-13));
  for (const auto& g : cache.tris) {
    CHECK((g.grad[0] + g.grad[1] + g.grad[2]).norm() < 1e-12);
    CHECK(g.area > 0.0);
  }
  double loop_len = 0.0;
  for (int i = 0; i < cache.boundary_hat_mass.size(); ++i) loop_len += cache.boundary_hat_mass(i);
  CHECK(loop_len == doctest::Approx(2.0 * M_PI).epsilon(2e-3));  // polygon perimeter
}

TEST_CASE("probe points carry exact isotropy diagnostics") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const ProbePoint probe = iso_probe(0.3, 0.05, mesh);
  CHECK(probe.isotropy_defect == 0.0);
  CHECK(probe.magnitude == doctest::Approx(0.05 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(probe.transversality == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(probe.admissible(0.1));
  const ProbePoint bad = ProbePoint::make(0.3, Vec2c(cplx(0.05, 0.0), cplx(0.05, 0.0)), mesh);
  CHECK_FALSE(bad.isotropic());
}

TEST_CASE("linearized coefficients: constant model is a0 I with zero drift") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto model = builtin_model("constant", {{"a0", 3.0}});
  const ProbePoint probe = iso_probe(0.4, 0.05, mesh);
  auto [coeffs, op] = assemble_linearized(mesh, model, probe);
  (void)op;
  for (std::size_t t = 0; t < coeffs.A.size(); t += 97) {
    CHECK((coeffs.A[t] - 3.0 * Mat2c::Identity()).norm() == 0.0);
    CHECK(coeffs.b[t].norm() == 0.0);
  }
  CHECK(coeffs.coercivity_margin == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("linearized coefficients: minimal surface closed form on the manifold") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto model = builtin_model("minimal_surface", {{"f0", 2.0}, {"f1", 1.0}});
  const double t = 0.04;
  const ProbePoint probe = iso_probe(0.2, t, mesh);
  auto [coeffs, op] = assemble_linearized(mesh, model, probe);
  (void)op;
  const FemCache cache = FemCache::build(mesh);
  for (std::size_t k = 0; k < cache.tris.size(); k += 53) {
    const Vec2& c = cache.tris[k].centroid;
    const cplx u = cplx(0.2, 0.0) + c(0) * probe.p(0) + c(1) * probe.p(1);
    const cplx f = 2.0 + std::exp(-u * u);
    const cplx fp = -2.0 * u * std::exp(-u * u);
    const Mat2c expected_A = f * Mat2c::Identity() - f * (probe.p * probe.p.transpose());
    const Vec2c expected_b = fp * probe.p;
    CHECK((coeffs.A[k] - expected_A).norm() <= 1e-12);
    CHECK((coeffs.b[k] - expected_b).norm() <= 1e-12);
  }
  CHECK(coeffs.max_b_over_p <= model.ds_a_sup());
}

TEST_CASE("sampled coercivity stays above 0.9 lambda_tilde for builtin probes") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const auto mini = builtin_model("minimal_surface", {{"f0", 2.0}, {"f1", 1.0}});
  for (const auto* model : {&band, &mini}) {
    for (double m : {0.014, 0.0353}) {
      for (double s : {-1.0, 0.0, 1.0}) {
        auto [coeffs, op] = assemble_linearized(mesh, *model, iso_probe(s, m, mesh));
        (void)op;
        CHECK(coeffs.coercivity_margin >= 0.9 * model->constants().lambda_tilde);
      }
    }
  }
}

TEST_CASE("coercivity margin never drops when |p| shrinks") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto mini = builtin_model("minimal_surface", {{"f0", 2.0}, {"f1", 1.0}});
  const auto band0 = builtin_model("band_analytic", {{"c_base", 2.0}, {"q0x", 0.0}, {"q0y", 0.0}});
  for (const auto* model : {&mini, &band0}) {
    for (double s : {0.0, 0.5, 1.0}) {
      double prev = -1e300;
      for (double eta : {1.0, 0.75, 0.5, 0.25}) {  // shrinking magnitude
        auto [coeffs, op] = assemble_linearized(mesh, *model, iso_probe(s, eta * 0.05, mesh));
        (void)op;
        if (prev != -1e300) CHECK(coeffs.coercivity_margin >= prev - 1e-12);
        prev = coeffs.coercivity_margin;
      }
    }
  }
  // With a gradient-coupled family the probe feeds Re(p.q0) straight into
  // Re a, so monotonicity holds for the margin net of that shift.
  const auto band = band_default();
  const Vec2 q0(0.3, 0.1);
  for (double s : {0.0, 0.5, 1.0}) {
    double prev = -1e300;
    for (double eta : {1.0, 0.75, 0.5, 0.25}) {
      const ProbePoint probe = iso_probe(s, eta * 0.05, mesh);
      auto [coeffs, op] = assemble_linearized(mesh, band, probe);
      (void)op;
      const double shift = (probe.p(0) * q0(0) + probe.p(1) * q0(1)).real();
      const double adjusted = coeffs.coercivity_margin - shift;
      if (prev != -1e300) CHECK(adjusted >= prev - 1e-12);
      prev = adjusted;
    }
  }
}

TEST_CASE("ellipticity loss raises an error") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  HypothesisConstants hc;  // lambda_tilde = 0.5
  const auto spiky = ConductivityModel::custom("spiky", [](cplx, const Vec2c&) {
    ModelEval ev;
    ev.a = 0.6;
    ev.ds_a = 0.0;
    ev.dp_a = Vec2c(cplx(20.0, 0.0), cplx(0.0, 0.0));
    return ev;
  }, hc);
  const ProbePoint probe = iso_probe(0.0, 0.06, mesh);
  CHECK_THROWS_AS(assemble_linearized(mesh, spiky, probe), EllipticityError);
}

TEST_CASE("non-isotropic probes need the explicit override") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  const ProbePoint bad = ProbePoint::make(0.2, Vec2c(cplx(0.04, 0.0), cplx(0.04, 0.0)), mesh);
  CHECK_THROWS_AS(assemble_linearized(mesh, band, bad), ValidationError);
  CHECK_NOTHROW(assemble_linearized(mesh, band, bad, SolverOptions{}, /*allow_nonisotropic=*/true));
  const ProbePoint too_big = iso_probe(0.2, 0.09, mesh);  // |p| = 0.127 >= r0
  CHECK_THROWS_AS(assemble_linearized(mesh, band, too_big), ValidationError);
}

TEST_CASE("linear solver reproduces constants and linear fields at second order") {
  const auto band = band_default();
  std::vector<double> errc, errl;
  for (int level : {2, 3}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    const ProbePoint probe = iso_probe(0.5, 0.05, mesh);
    auto [coeffs, op] = assemble_linearized(mesh, band, probe);
    (void)coeffs;
    const cplx c(1.0, 0.5);
    SolveStats stats;
    auto fc = solve_linear_complex(op, nullptr, [c](const Vec2&) { return c; }, &stats);
    CHECK(stats.rel_residual <= 1e-10);
    double ec = 0.0;
    for (int i = 0; i < fc.values.size(); ++i) ec = std::max(ec, std::abs(fc.values(i) - c));
    errc.push_back(ec);
    auto fl = solve_linear_complex(op, nullptr,
                                   [&probe](const Vec2& x) { return x(0) * probe.p(0) + x(1) * probe.p(1); });
    double el = 0.0;
    for (int v = 0; v < mesh.num_vertices(); ++v)
      el = std::max(el,
                    std::abs(fl.values(v) - (mesh.vertices[v](0) * probe.p(0) + mesh.vertices[v](1) * probe.p(1))));
    errl.push_back(el);
  }
  // measured ~2.9e-9 -> 7.2e-10 (constants) and 1.3e-9 -> 3.3e-10 (linears)
  CHECK(errc[0] <= 2e-8);
  CHECK(errc[1] <= 0.4 * errc[0]);
  CHECK(errl[1] <= 0.4 * errl[0]);
}

TEST_CASE("constant-coefficient problems reproduce harmonic polynomials") {
  const auto model = builtin_model("constant", {{"a0", 2.0}});
  std::vector<double> errs;
  for (int level : {2, 3}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    const ProbePoint probe = iso_probe(0.0, 0.03, mesh);
    auto [coeffs, op] = assemble_linearized(mesh, model, probe);
    (void)coeffs;
    auto harm = [](const Vec2& x) { return cplx(x(0) * x(0) - x(1) * x(1), 0.0); };
    auto f = solve_linear_complex(op, nullptr, harm);
    double err = 0.0;
    for (int v = 0; v < mesh.num_vertices(); ++v)
      err = std::max(err, std::abs(f.values(v) - harm(mesh.vertices[v])));
    errs.push_back(err);
  }
  CHECK(errs[0] < 5e-3);
  CHECK(errs[1] < 0.35 * errs[0]);
}

TEST_CASE("newton jacobian matches directional finite differences") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.3, 0.05, mesh);
  auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(mesh.num_vertices());
  for (int k = 0; k < cache->interior_count(); ++k)
    v(cache->interior_list[k]) = cplx(0.0005 * uni(rng), 0.0005 * uni(rng));

  const DiscreteOperator J = assemble_jacobian_at(cache, band, probe, v);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXcd delta = Eigen::VectorXcd::Zero(mesh.num_vertices());
    Eigen::VectorXcd delta_i(cache->interior_count());
    for (int k = 0; k < cache->interior_count(); ++k) {
      delta_i(k) = cplx(uni(rng), uni(rng));
      delta(cache->interior_list[k]) = delta_i(k);
    }
    const Eigen::VectorXcd Jd = J.apply_matrix(delta_i);
    double gap1 = 0.0, gap2 = 0.0;
    for (double eps : {1e-4, 5e-5}) {
      const Eigen::VectorXcd rp = quasilinear_residual(*cache, band, probe, v + eps * delta);
      const Eigen::VectorXcd rm = quasilinear_residual(*cache, band, probe, v - eps * delta);
      double gap = 0.0;
      for (int k = 0; k < cache->interior_count(); ++k) {
        const int vi = cache->interior_list[k];
        gap = std::max(gap, std::abs((rp(vi) - rm(vi)) / (2.0 * eps) - Jd(k)));
      }
      (eps == 1e-4 ? gap1 : gap2) = gap;
    }
    CHECK(gap1 < 1e-6);
    CHECK(gap2 < 0.35 * gap1 + 1e-13);  // second order in the step
  }
}

TEST_CASE("quasilinear real: constants solve immediately") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  SolveStats stats;
  auto u = solve_quasilinear_real(mesh, band, [](const Vec2&) { return 0.7; }, {}, &stats);
  CHECK(stats.newton_iterations <= 1);
  for (int v = 0; v < mesh.num_vertices(); ++v) CHECK(std::abs(u.values(v) - 0.7) <= 1e-12);
}

TEST_CASE("quasilinear real: harmonic polynomial under a constant model") {
  const auto model = builtin_model("constant", {{"a0", 3.0}});
  std::vector<double> errs;
  for (int level : {2, 3}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    auto f = [](const Vec2& x) { return x(0) * x(1); };
    auto u = solve_quasilinear_real(mesh, model, f, {});
    double err = 0.0;
    for (int v = 0; v < mesh.num_vertices(); ++v)
      err = std::max(err, std::abs(u.values(v).real() - f(mesh.vertices[v])));
    errs.push_back(err);
  }
  CHECK(errs[0] < 3e-3);
  CHECK(errs[1] < 0.35 * errs[0]);
}

TEST_CASE("quasilinear real: band model converges quickly and self-converges") {
  const auto band = band_default();
  auto f = [](const Vec2& x) { return 0.1 * x(0); };
  const Mesh coarse = build_disk_mesh(1.0, 1);
  SolveStats stats;
  auto uc = solve_quasilinear_real(coarse, band, f, {}, &stats);
  CHECK(stats.newton_iterations <= 10);
  CHECK(stats.rel_residual <= 1e-10);

  const Mesh fine = build_disk_mesh(1.0, 3);  // refinement keeps coarse vertex ids
  auto uf = solve_quasilinear_real(fine, band, f, {});
  double gap = 0.0;
  for (int v = 0; v < coarse.num_vertices(); ++v)
    gap = std::max(gap, std::abs(uc.values(v) - uf.values(v)));
  INFO("coarse-fine gap ", gap);
  CHECK(gap < 2e-4);
}

TEST_CASE("quasilinear real: datum budget validation") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  SolverOptions opts;
  opts.real_datum_budget = 0.05;
  CHECK_THROWS_AS(solve_quasilinear_real(mesh, band, [](const Vec2&) { return 1.0; }, opts), ValidationError);
}

TEST_CASE("quasilinear complex: zero datum is an exact fixed point") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.3, 0.05, mesh);
  SolveStats stats;
  auto v = solve_quasilinear_complex(mesh, band, probe, [](const Vec2&) { return cplx(0.0, 0.0); }, {}, &stats);
  CHECK(stats.newton_iterations == 0);
  CHECK(max_abs(v.values) == 0.0);
}

TEST_CASE("quasilinear complex equals the linear solve for constant models") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto model = builtin_model("constant", {{"a0", 3.0}});
  const ProbePoint probe = iso_probe(0.2, 0.05, mesh);
  auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));
  auto [coeffs, op] = assemble_linearized(cache, model, probe);
  (void)coeffs;
  auto h = [](const Vec2& x) { return cplx(0.01 * x(0), 0.02 * x(1)); };
  auto lin = solve_linear_complex(op, nullptr, h);
  auto quasi = solve_quasilinear_complex(mesh, model, probe, h, {}, nullptr, &op);
  CHECK(max_abs(lin.values - quasi.values) <= 1e-10);
}

TEST_CASE("quasilinear complex: two newton starts agree (discrete uniqueness)") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.1, 0.05, mesh);
  auto h = [](const Vec2& x) { return cplx(0.01 * x(0), 0.0); };
  auto va = solve_quasilinear_complex(mesh, band, probe, h, {});
  SolverOptions alt;
  alt.newton_start = NewtonStart::kInterpolant;
  auto vb = solve_quasilinear_complex(mesh, band, probe, h, alt);
  CHECK(max_abs(va.values - vb.values) <= 1e-8);
}

TEST_CASE("quasilinear complex: datum budget and iteration cap") {
  const Mesh mesh = build_disk_mesh(1.0, 1);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.0, 0.05, mesh);
  CHECK_THROWS_AS(solve_quasilinear_complex(mesh, band, probe, [](const Vec2&) { return cplx(0.2, 0.0); }, {}),
                  ValidationError);
  SolverOptions strict;
  strict.max_newton = 0;
  CHECK_THROWS_AS(
      solve_quasilinear_complex(mesh, band, probe, [](const Vec2&) { return cplx(0.03, 0.0); }, strict),
      NonconvergenceError);
}

TEST_CASE("linear consistency at p = 0 between real and complex paths") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const double s = 0.4;
  const ProbePoint probe = ProbePoint::make(s, Vec2c::Zero(), mesh);
  auto h = [](const Vec2& x) { return cplx(0.02 * x(0) * x(1), 0.0); };
  auto v = solve_quasilinear_complex(mesh, band, probe, h, {});
  auto u = solve_quasilinear_real(mesh, band, [s, &h](const Vec2& x) { return s + h(x).real(); }, {});
  double gap = 0.0, imag = 0.0;
  for (int k = 0; k < v.values.size(); ++k) {
    gap = std::max(gap, std::abs((u.values(k) - cplx(s, 0.0)) - v.values(k)));
    imag = std::max(imag, std::abs(v.values(k).imag()));
  }
  CHECK(gap <= 1e-10);
  CHECK(imag <= 1e-10);
}

TEST_CASE("probe residual: constant model sees only quadrature noise") {
  const Mesh mesh = build_disk_mesh(1.0, 3);
  const auto model = builtin_model("constant", {{"a0", 3.0}});
  for (const Vec2c& p : {Vec2c(cplx(0.05, 0.0), cplx(0.0, 0.05)), Vec2c(cplx(0.05, 0.0), cplx(0.05, 0.0))}) {
    const ProbePoint probe = ProbePoint::make(0.3, p, mesh);
    CHECK(probe_residual(mesh, model, probe) <= 1e-12);
  }
}

TEST_CASE("probe residual decays only on the isotropic manifold") {
  const auto band = band_default();
  std::vector<double> iso, ctl;
  for (int level : {2, 3}) {
    const Mesh mesh = build_disk_mesh(1.0, level);
    iso.push_back(probe_residual(mesh, band, ProbePoint::make(0.25, Vec2c(cplx(0.05, 0), cplx(0, 0.05)), mesh)));
    ctl.push_back(probe_residual(mesh, band, ProbePoint::make(0.25, Vec2c(cplx(0.05, 0), cplx(0.05, 0)), mesh)));
  }
  CHECK(iso[1] < 0.6 * iso[0]);  // measured ratio ~0.36
  CHECK(ctl[1] > 0.9 * ctl[0]);  // the control stalls
  CHECK(ctl[1] > 10.0 * iso[1]);
}

TEST_CASE("a-priori ratio stays bounded over a randomized datum suite") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.2, 0.04, mesh);
  auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));
  auto [coeffs, op] = assemble_linearized(cache, band, probe);
  (void)coeffs;
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const double a1 = 0.01 * uni(rng), a2 = 0.01 * uni(rng), b1 = 0.01 * uni(rng);
    SolveStats stats;
    solve_quasilinear_complex(mesh, band, probe,
                              [&](const Vec2& x) {
                                const cplx w(x(0) - 1.0, x(1));
                                return cplx(a1, b1) * w + a2 * w * w;
                              },
                              {}, &stats, &op);
    CHECK(stats.apriori_ratio < 10.0);
    CHECK(stats.rel_residual <= 1e-10);
  }
}

TEST_CASE("iterative fallback solves small systems to direct accuracy") {
  const Mesh mesh = build_disk_mesh(1.0, 2);
  const auto band = band_default();
  const ProbePoint probe = iso_probe(0.5, 0.05, mesh);
  auto direct = solve_linear_complex(assemble_linearized(mesh, band, probe).second, nullptr,
                                     [](const Vec2& x) { return cplx(x(0), 0.1 * x(1)); });
  SolverOptions it;
  it.direct_threshold = 10;  // forces BiCGSTAB with diagonal preconditioning
  auto iter = solve_linear_complex(assemble_linearized(mesh, band, probe, it).second, nullptr,
                                   [](const Vec2& x) { return cplx(x(0), 0.1 * x(1)); });
  CHECK(max_abs(direct.values - iter.values) <= 1e-8);
}

TEST_SUITE_END();
