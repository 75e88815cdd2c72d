#include "qcond/pde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

// 16 unit directions for the sampled complex coercivity check: 8 real angles
// and 8 elliptic (quarter-phase) companions.
const std::array<Vec2c, 16>& coercivity_directions() {
  static const std::array<Vec2c, 16> dirs = [] {
    std::array<Vec2c, 16> d;
    for (int k = 0; k < 8; ++k) {
      const double t = M_PI * k / 8.0;
      d[k] = Vec2c(cplx(std::cos(t), 0.0), cplx(std::sin(t), 0.0));
      d[8 + k] = Vec2c(cplx(std::cos(t), 0.0), cplx(0.0, std::sin(t)));
    }
    return d;
  }();
  return dirs;
}

double min_coercivity(const Mat2c& A) {
  double worst = 1e300;
  for (const auto& xi : coercivity_directions()) {
    cplx q = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) q += A(i, j) * xi(i) * std::conj(xi(j));
    worst = std::min(worst, q.real());
  }
  return worst;
}

cplx probe_value(const ProbePoint& probe, const Vec2& x) {
  return cplx(probe.s, 0.0) + x(0) * probe.p(0) + x(1) * probe.p(1);
}

struct CoeffField {
  std::vector<Mat2c> A;
  std::vector<Vec2c> b;
  double margin = 1e300;
  Vec2 worst = Vec2::Zero();
  double max_b_over_p = 0.0;
};

// Coefficients of the Newton derivative at state (z, w) per triangle:
// A = a I + w dp_a^T, b = ds_a w. The probe operator is the case v = 0.
CoeffField jacobian_coefficients(const FemCache& cache, const ConductivityModel& model,
                                 const std::function<void(int, cplx&, Vec2c&)>& state) {
  const auto& tris = cache.tris;
  CoeffField out;
  out.A.resize(tris.size());
  out.b.resize(tris.size());
  for (std::size_t t = 0; t < tris.size(); ++t) {
    cplx z;
    Vec2c w;
    state(static_cast<int>(t), z, w);
    const ModelEval ev = model.evaluate(z, w);
    Mat2c A = ev.a * Mat2c::Identity();
    A += w * ev.dp_a.transpose();
    out.A[t] = A;
    out.b[t] = ev.ds_a * w;
    const double m = min_coercivity(A);
    if (m < out.margin) {
      out.margin = m;
      out.worst = tris[t].centroid;
    }
    const double wn = std::sqrt(std::norm(w(0)) + std::norm(w(1)));
    if (wn > 1e-300) out.max_b_over_p = std::max(out.max_b_over_p, out.b[t].norm() / wn);
  }
  return out;
}

void require_coercive(const CoeffField& coeffs, const ConductivityModel& model) {
  const double floor = 0.9 * model.constants().lambda_tilde;
  if (coeffs.margin < floor) {
    std::ostringstream os;
    os.precision(12);
    os << "sampled complex coercivity " << coeffs.margin << " fell below 0.9*lambda_tilde = " << floor
       << " at x = (" << coeffs.worst(0) << ", " << coeffs.worst(1) << ")";
    throw EllipticityError(os.str());
  }
}

} // namespace

FemCache FemCache::build(const Mesh& mesh) {
  FemCache cache;
  cache.mesh = &mesh;
  const int n = mesh.num_vertices();
  cache.tris.resize(mesh.triangles.size());
  cache.vertex_mass = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    TriGeom& g = cache.tris[t];
    g.v = mesh.triangles[t];
    const Vec2& x0 = mesh.vertices[g.v[0]];
    const Vec2& x1 = mesh.vertices[g.v[1]];
    const Vec2& x2 = mesh.vertices[g.v[2]];
    g.area = 0.5 * ((x1 - x0)(0) * (x2 - x0)(1) - (x1 - x0)(1) * (x2 - x0)(0));
    g.centroid = (x0 + x1 + x2) / 3.0;
    const double inv = 1.0 / (2.0 * g.area);
    g.grad[0] = perp(x2 - x1) * inv;
    g.grad[1] = perp(x0 - x2) * inv;
    g.grad[2] = perp(x1 - x0) * inv;
    for (int k = 0; k < 3; ++k) cache.vertex_mass(g.v[k]) += g.area / 3.0;
  }

  cache.interior_index.assign(n, -1);
  for (int v = 0; v < n; ++v)
    if (!mesh.is_boundary_vertex(v)) {
      cache.interior_index[v] = static_cast<int>(cache.interior_list.size());
      cache.interior_list.push_back(v);
    }

  const int nb = mesh.num_boundary();
  cache.boundary_hat_mass = Eigen::VectorXd::Zero(nb);
  for (int i = 0; i < nb; ++i) {
    const Vec2& prev = mesh.vertices[mesh.boundary_loop[(i + nb - 1) % nb]];
    const Vec2& cur = mesh.vertices[mesh.boundary_loop[i]];
    const Vec2& next = mesh.vertices[mesh.boundary_loop[(i + 1) % nb]];
    cache.boundary_hat_mass(i) = 0.5 * ((cur - prev).norm() + (next - cur).norm());
  }
  return cache;
}

ProbePoint ProbePoint::make(double s, const Vec2c& p, const Vec2& anchor_normal) {
  ProbePoint probe;
  probe.s = s;
  probe.p = p;
  probe.isotropy_defect = std::abs(bdot(p, p));
  probe.magnitude = std::sqrt(std::norm(p(0)) + std::norm(p(1)));
  probe.transversality = std::abs(p(0) * anchor_normal(0) + p(1) * anchor_normal(1));
  return probe;
}

ProbePoint ProbePoint::make(double s, const Vec2c& p, const Mesh& mesh) {
  return make(s, p, mesh.anchor_normal());
}

DiscreteOperator assemble_operator(std::shared_ptr<const FemCache> cache, const std::vector<Mat2c>& A,
                                   const std::vector<Vec2c>& b, const SolverOptions& opts) {
  const FemCache& fc = *cache;
  const Mesh& mesh = *fc.mesh;
  const int nb = mesh.num_boundary();
  const int ni = fc.interior_count();

  std::vector<Eigen::Triplet<cplx>> t_ii, t_ib, t_bi, t_bb;
  t_ii.reserve(fc.tris.size() * 6);
  t_ib.reserve(fc.tris.size() * 3);
  t_bi.reserve(fc.tris.size() * 3);
  t_bb.reserve(fc.tris.size() * 3);

  for (std::size_t t = 0; t < fc.tris.size(); ++t) {
    const TriGeom& g = fc.tris[t];
    const Mat2c& At = A[t];
    const Vec2c& bt = b[t];
    for (int i = 0; i < 3; ++i) {
      const int vi = g.v[i];
      const int row_int = fc.interior_index[vi];
      const int row_bd = mesh.boundary_index_of_vertex[vi];
      for (int j = 0; j < 3; ++j) {
        const int vj = g.v[j];
        // weak entry: grad_i . (A grad_j) + (1/3) b . grad_i
        const Vec2c Agj = At * Vec2c(cplx(g.grad[j](0), 0.0), cplx(g.grad[j](1), 0.0));
        cplx val = bdot(g.grad[i], Agj) + bdot(bt, g.grad[i]) / 3.0;
        val *= g.area;
        const int col_int = fc.interior_index[vj];
        const int col_bd = mesh.boundary_index_of_vertex[vj];
        if (row_int >= 0 && col_int >= 0)
          t_ii.emplace_back(row_int, col_int, val);
        else if (row_int >= 0)
          t_ib.emplace_back(row_int, col_bd, val);
        else if (col_int >= 0)
          t_bi.emplace_back(row_bd, col_int, val);
        else
          t_bb.emplace_back(row_bd, col_bd, val);
      }
    }
  }

  DiscreteOperator op;
  op.cache_ = std::move(cache);
  op.ni_ = ni;
  op.A_ii_.resize(ni, ni);
  op.A_ib_.resize(ni, nb);
  op.A_bi_.resize(nb, ni);
  op.A_bb_.resize(nb, nb);
  op.A_ii_.setFromTriplets(t_ii.begin(), t_ii.end());
  op.A_ib_.setFromTriplets(t_ib.begin(), t_ib.end());
  op.A_bi_.setFromTriplets(t_bi.begin(), t_bi.end());
  op.A_bb_.setFromTriplets(t_bb.begin(), t_bb.end());

  op.iterative_ = ni > opts.direct_threshold;
  op.iterative_tolerance_ = opts.iterative_tolerance;
  op.iterative_max_iterations_ = opts.iterative_max_iterations;
  if (!op.iterative_) {
    op.lu_ = std::make_shared<Eigen::SparseLU<SpMatC>>();
    op.lu_->analyzePattern(op.A_ii_);
    op.lu_->factorize(op.A_ii_);
    if (op.lu_->info() != Eigen::Success)
      throw SolverError("assemble_operator: sparse LU factorization failed (" +
                        std::to_string(static_cast<int>(op.lu_->info())) + "), n = " + std::to_string(ni));
  }
  return op;
}

Eigen::VectorXcd DiscreteOperator::assemble_rhs(const std::function<cplx(const Vec2&)>& g) const {
  const FemCache& fc = *cache_;
  Eigen::VectorXcd F = Eigen::VectorXcd::Zero(fc.mesh->num_vertices());
  if (!g) return F;
  for (const auto& tg : fc.tris) {
    const cplx gc = g(tg.centroid);
    for (int k = 0; k < 3; ++k) F(tg.v[k]) -= tg.area * gc / 3.0;
  }
  return F;
}

Eigen::VectorXcd DiscreteOperator::apply_inverse(const Eigen::VectorXcd& rhs) const {
  if (!iterative_) {
    Eigen::VectorXcd x = lu_->solve(rhs);
    // one step of iterative refinement when warranted
    Eigen::VectorXcd r = rhs - A_ii_ * x;
    const double scale = std::max(rhs.norm(), 1e-300);
    if (r.norm() / scale > 1e-12) x += lu_->solve(r);
    r = rhs - A_ii_ * x;
    if (r.norm() / scale > 1e-9)
      throw SolverError("DiscreteOperator: direct solve residual " + std::to_string(r.norm() / scale));
    return x;
  }
  Eigen::BiCGSTAB<SpMatC, Eigen::DiagonalPreconditioner<cplx>> solver;
  solver.setTolerance(iterative_tolerance_);
  solver.setMaxIterations(iterative_max_iterations_);
  solver.compute(A_ii_);
  Eigen::VectorXcd x = solver.solve(rhs);
  if (solver.info() != Eigen::Success)
    throw SolverError("DiscreteOperator: BiCGSTAB stalled at error " + std::to_string(solver.error()) + " after " +
                      std::to_string(solver.iterations()) + " iterations");
  return x;
}

double DiscreteOperator::datum_forcing_norm(const Eigen::VectorXcd& h_boundary) const {
  return (A_ib_ * h_boundary).norm();
}

Eigen::VectorXcd DiscreteOperator::apply_matrix(const Eigen::VectorXcd& interior_vec) const {
  return A_ii_ * interior_vec;
}

Eigen::VectorXcd DiscreteOperator::solve(const Eigen::VectorXcd& h_boundary,
                                         const std::function<cplx(const Vec2&)>& g, SolveStats* stats) const {
  const FemCache& fc = *cache_;
  const Mesh& mesh = *fc.mesh;
  if (h_boundary.size() != mesh.num_boundary())
    throw ValidationError("DiscreteOperator::solve: boundary datum size mismatch");

  const Eigen::VectorXcd F = assemble_rhs(g);
  Eigen::VectorXcd rhs(ni_);
  for (int k = 0; k < ni_; ++k) rhs(k) = F(fc.interior_list[k]);
  rhs -= A_ib_ * h_boundary;

  const Eigen::VectorXcd x = apply_inverse(rhs);

  Eigen::VectorXcd field = Eigen::VectorXcd::Zero(mesh.num_vertices());
  for (int k = 0; k < ni_; ++k) field(fc.interior_list[k]) = x(k);
  for (int i = 0; i < mesh.num_boundary(); ++i) field(mesh.boundary_loop[i]) = h_boundary(i);

  if (stats) {
    const double rhs_norm = std::max(rhs.norm(), 1e-300);
    stats->rel_residual = (rhs - A_ii_ * x).norm() / rhs_norm;
    double hmax = 0.0;
    for (int i = 0; i < h_boundary.size(); ++i) hmax = std::max(hmax, std::abs(h_boundary(i)));
    double gmax = 0.0;
    if (g)
      for (const auto& tg : fc.tris) gmax = std::max(gmax, std::abs(g(tg.centroid)));
    double vmax = 0.0;
    for (int k = 0; k < field.size(); ++k) vmax = std::max(vmax, std::abs(field(k)));
    stats->apriori_ratio = vmax / std::max(hmax + gmax, 1e-300);
  }
  return field;
}

Eigen::VectorXcd DiscreteOperator::flux_moments(const Eigen::VectorXcd& field,
                                                const std::function<cplx(const Vec2&)>& g) const {
  const FemCache& fc = *cache_;
  const Mesh& mesh = *fc.mesh;
  Eigen::VectorXcd fi(ni_);
  for (int k = 0; k < ni_; ++k) fi(k) = field(fc.interior_list[k]);
  Eigen::VectorXcd fb(mesh.num_boundary());
  for (int i = 0; i < mesh.num_boundary(); ++i) fb(i) = field(mesh.boundary_loop[i]);
  Eigen::VectorXcd m = A_bi_ * fi + A_bb_ * fb;
  if (g) {
    const Eigen::VectorXcd F = assemble_rhs(g);
    for (int i = 0; i < mesh.num_boundary(); ++i) m(i) -= F(mesh.boundary_loop[i]);
  }
  return m;
}

std::pair<LinearizedCoefficients, DiscreteOperator> assemble_linearized(std::shared_ptr<const FemCache> cache,
                                                                        const ConductivityModel& model,
                                                                        const ProbePoint& probe,
                                                                        const SolverOptions& opts,
                                                                        bool allow_nonisotropic) {
  if (!allow_nonisotropic && !probe.isotropic())
    throw ValidationError("assemble_linearized: probe is not isotropic (|p.p| = " +
                          std::to_string(probe.isotropy_defect) + "); pass the override for diagnostic runs");
  if (probe.magnitude >= model.constants().r0)
    throw ValidationError("assemble_linearized: |p| = " + std::to_string(probe.magnitude) +
                          " is not below the model probe radius r0 = " + std::to_string(model.constants().r0));

  const FemCache& fc = *cache;
  const CoeffField coeffs = jacobian_coefficients(fc, model, [&](int t, cplx& z, Vec2c& w) {
    z = probe_value(probe, fc.tris[t].centroid);
    w = probe.p;
  });
  require_coercive(coeffs, model);

  LinearizedCoefficients lin;
  lin.A = coeffs.A;
  lin.b = coeffs.b;
  lin.coercivity_margin = coeffs.margin;
  lin.worst_point = coeffs.worst;
  lin.max_b_over_p = coeffs.max_b_over_p;

  DiscreteOperator op = assemble_operator(std::move(cache), lin.A, lin.b, opts);
  return {std::move(lin), std::move(op)};
}

std::pair<LinearizedCoefficients, DiscreteOperator> assemble_linearized(const Mesh& mesh,
                                                                        const ConductivityModel& model,
                                                                        const ProbePoint& probe,
                                                                        const SolverOptions& opts,
                                                                        bool allow_nonisotropic) {
  auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));
  return assemble_linearized(std::move(cache), model, probe, opts, allow_nonisotropic);
}

ComplexField solve_linear_complex(const DiscreteOperator& op, const std::function<cplx(const Vec2&)>& g,
                                  const std::function<cplx(const Vec2&)>& h, SolveStats* stats) {
  const Mesh& mesh = op.mesh();
  const Eigen::VectorXcd h_b = boundary_values(mesh, h);
  ComplexField field;
  field.mesh = &mesh;
  field.values = op.solve(h_b, g, stats);
  return field;
}

Eigen::VectorXcd quasilinear_residual(const FemCache& cache, const ConductivityModel& model, const ProbePoint& probe,
                                      const Eigen::VectorXcd& v) {
  Eigen::VectorXcd R = Eigen::VectorXcd::Zero(cache.mesh->num_vertices());
  for (const auto& g : cache.tris) {
    const cplx z0 = probe_value(probe, g.centroid);
    const cplx vc = (v(g.v[0]) + v(g.v[1]) + v(g.v[2])) / 3.0;
    Vec2c grad_v = Vec2c::Zero();
    for (int k = 0; k < 3; ++k) grad_v += v(g.v[k]) * Vec2c(cplx(g.grad[k](0), 0.0), cplx(g.grad[k](1), 0.0));
    const Vec2c w = probe.p + grad_v;
    const ModelEval ev = model.evaluate(z0 + vc, w);
    const cplx a0 = model.evaluate(z0, probe.p).a;
    const Vec2c G = ev.a * w - a0 * probe.p;
    for (int k = 0; k < 3; ++k) R(g.v[k]) += g.area * bdot(G, g.grad[k]);
  }
  return R;
}

Eigen::VectorXcd quasilinear_flux_moments(const FemCache& cache, const ConductivityModel& model,
                                          const ProbePoint& probe, const Eigen::VectorXcd& v_field) {
  const Eigen::VectorXcd R = quasilinear_residual(cache, model, probe, v_field);
  const Mesh& mesh = *cache.mesh;
  Eigen::VectorXcd m(mesh.num_boundary());
  for (int i = 0; i < mesh.num_boundary(); ++i) m(i) = R(mesh.boundary_loop[i]);
  return m;
}

Eigen::VectorXcd real_flux_moments(const FemCache& cache, const ConductivityModel& model,
                                   const Eigen::VectorXcd& u_field) {
  const Mesh& mesh = *cache.mesh;
  Eigen::VectorXcd R = Eigen::VectorXcd::Zero(mesh.num_vertices());
  for (const auto& g : cache.tris) {
    const double uc = ((u_field(g.v[0]) + u_field(g.v[1]) + u_field(g.v[2])) / 3.0).real();
    Vec2 grad_u = Vec2::Zero();
    for (int k = 0; k < 3; ++k) grad_u += u_field(g.v[k]).real() * g.grad[k];
    const ModelEval ev = model.evaluate(cplx(uc, 0.0), Vec2c(cplx(grad_u(0), 0.0), cplx(grad_u(1), 0.0)));
    const Vec2 G = ev.a.real() * grad_u;
    for (int k = 0; k < 3; ++k) R(g.v[k]) += g.area * G.dot(g.grad[k]);
  }
  Eigen::VectorXcd m(mesh.num_boundary());
  for (int i = 0; i < mesh.num_boundary(); ++i) m(i) = R(mesh.boundary_loop[i]);
  return m;
}

double probe_residual(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe) {
  const FemCache cache = FemCache::build(mesh);
  Eigen::VectorXcd R = Eigen::VectorXcd::Zero(mesh.num_vertices());
  for (const auto& g : cache.tris) {
    const cplx z = probe_value(probe, g.centroid);
    const ModelEval ev = model.evaluate(z, probe.p);
    const Vec2c G = ev.a * probe.p;
    for (int k = 0; k < 3; ++k) R(g.v[k]) += g.area * bdot(G, g.grad[k]);
  }
  double acc = 0.0;
  for (int v : cache.interior_list) acc += std::norm(R(v)) / cache.vertex_mass(v);
  return std::sqrt(acc);
}

namespace {

double interior_norm(const FemCache& fc, const Eigen::VectorXcd& R) {
  double acc = 0.0;
  for (int v : fc.interior_list) acc += std::norm(R(v));
  return std::sqrt(acc);
}

double interior_norm_real(const FemCache& fc, const Eigen::VectorXd& R) {
  double acc = 0.0;
  for (int v : fc.interior_list) acc += R(v) * R(v);
  return std::sqrt(acc);
}

Eigen::VectorXcd interior_part(const FemCache& fc, const Eigen::VectorXcd& R) {
  Eigen::VectorXcd r(fc.interior_count());
  for (int k = 0; k < fc.interior_count(); ++k) r(k) = R(fc.interior_list[k]);
  return r;
}

double grad_norm_proxy(const FemCache& fc, const Eigen::VectorXcd& v) {
  double vmax = 0.0, gmax = 0.0;
  for (int k = 0; k < v.size(); ++k) vmax = std::max(vmax, std::abs(v(k)));
  for (const auto& g : fc.tris) {
    Vec2c grad = Vec2c::Zero();
    for (int k = 0; k < 3; ++k) grad += v(g.v[k]) * Vec2c(cplx(g.grad[k](0), 0.0), cplx(g.grad[k](1), 0.0));
    gmax = std::max(gmax, std::sqrt(std::norm(grad(0)) + std::norm(grad(1))));
  }
  return vmax + gmax;
}

std::string history_string(const std::vector<double>& history) {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < history.size(); ++i) os << (i ? " " : "") << history[i];
  return os.str();
}

// state callback at an iterate: z = u_sp + v, w = p + grad v per triangle
std::function<void(int, cplx&, Vec2c&)> iterate_state(const FemCache& fc, const ProbePoint& probe,
                                                      const Eigen::VectorXcd& v) {
  return [&fc, &probe, &v](int t, cplx& z, Vec2c& w) {
    const TriGeom& g = fc.tris[t];
    const cplx vc = (v(g.v[0]) + v(g.v[1]) + v(g.v[2])) / 3.0;
    Vec2c grad_v = Vec2c::Zero();
    for (int k = 0; k < 3; ++k) grad_v += v(g.v[k]) * Vec2c(cplx(g.grad[k](0), 0.0), cplx(g.grad[k](1), 0.0));
    z = probe_value(probe, g.centroid) + vc;
    w = probe.p + grad_v;
  };
}

} // namespace

DiscreteOperator assemble_jacobian_at(std::shared_ptr<const FemCache> cache, const ConductivityModel& model,
                                      const ProbePoint& probe, const Eigen::VectorXcd& v_field,
                                      const SolverOptions& opts) {
  const FemCache& fc = *cache;
  const CoeffField coeffs = jacobian_coefficients(fc, model, iterate_state(fc, probe, v_field));
  require_coercive(coeffs, model);
  return assemble_operator(std::move(cache), coeffs.A, coeffs.b, opts);
}

ComplexField solve_quasilinear_complex(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                                       const std::function<cplx(const Vec2&)>& h, const SolverOptions& opts,
                                       SolveStats* stats, const DiscreteOperator* base_op) {
  std::shared_ptr<const FemCache> cache;
  DiscreteOperator local_base;
  if (base_op == nullptr) {
    cache = std::make_shared<const FemCache>(FemCache::build(mesh));
    local_base = assemble_linearized(cache, model, probe, opts).second;
    base_op = &local_base;
  } else {
    cache = std::shared_ptr<const FemCache>(&base_op->cache(), [](const FemCache*) {});
  }
  const FemCache& fc = base_op->cache();

  const Eigen::VectorXcd h_b = boundary_values(mesh, h);
  double hmax = 0.0;
  for (int i = 0; i < h_b.size(); ++i) hmax = std::max(hmax, std::abs(h_b(i)));
  if (hmax > opts.datum_budget)
    throw ValidationError("solve_quasilinear_complex: datum norm " + std::to_string(hmax) +
                          " exceeds the smallness budget " + std::to_string(opts.datum_budget));

  SolveStats local_stats;
  SolveStats* st = stats ? stats : &local_stats;
  st->residual_history.clear();
  st->jacobian_rebuilds = 0;

  // initial iterate: the linearized solution (the implicit-function expansion
  // point), or the closure interpolant for uniqueness cross-checks
  Eigen::VectorXcd v;
  if (opts.newton_start == NewtonStart::kLinearized) {
    v = base_op->solve(h_b);
  } else {
    v = interpolate(mesh, h);
    for (int i = 0; i < mesh.num_boundary(); ++i) v(mesh.boundary_loop[i]) = h_b(i);
  }

  // residual scale: forcing the datum injects into the linearized system
  const double scale = std::max(base_op->datum_forcing_norm(h_b), 1e-300);

  Eigen::VectorXcd R = quasilinear_residual(fc, model, probe, v);
  double rnorm = interior_norm(fc, R);

  bool frozen = opts.frozen_jacobian;
  DiscreteOperator fresh;
  const DiscreteOperator* J = base_op;

  int iter = 0;
  while (true) {
    const double rel = rnorm / scale;
    st->residual_history.push_back(rel);
    if (rel <= opts.tolerance || rnorm <= 1e-15 * scale) break;
    if (iter >= opts.max_newton)
      throw NonconvergenceError("solve_quasilinear_complex: no convergence after " + std::to_string(iter) +
                                " Newton iterations; relative residual history: " + history_string(st->residual_history));

    const Eigen::VectorXcd delta = J->apply_inverse(-interior_part(fc, R));

    double alpha = 1.0;
    Eigen::VectorXcd v_try;
    Eigen::VectorXcd R_try;
    double r_try = 0.0;
    bool accepted = false;
    for (int d = 0; d <= opts.damping_limit; ++d) {
      v_try = v;
      for (int k = 0; k < fc.interior_count(); ++k) v_try(fc.interior_list[k]) += alpha * delta(k);
      R_try = quasilinear_residual(fc, model, probe, v_try);
      r_try = interior_norm(fc, R_try);
      if (r_try < rnorm) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      if (frozen || J == base_op) {
        // rebuild the Jacobian at the current iterate and retry
        const CoeffField coeffs = jacobian_coefficients(fc, model, iterate_state(fc, probe, v));
        require_coercive(coeffs, model);
        fresh = assemble_operator(cache, coeffs.A, coeffs.b, opts);
        J = &fresh;
        frozen = false;
        ++st->jacobian_rebuilds;
        continue; // retry the iteration with the fresh Jacobian
      }
      throw NonconvergenceError("solve_quasilinear_complex: damping failed with a fresh Jacobian; "
                                "relative residual history: " +
                                history_string(st->residual_history));
    }

    // slow contraction under the frozen Jacobian: refresh next round
    if (frozen && r_try > 0.25 * rnorm) {
      const CoeffField coeffs = jacobian_coefficients(fc, model, iterate_state(fc, probe, v_try));
      require_coercive(coeffs, model);
      fresh = assemble_operator(cache, coeffs.A, coeffs.b, opts);
      J = &fresh;
      frozen = false;
      ++st->jacobian_rebuilds;
    }

    v = v_try;
    R = R_try;
    rnorm = r_try;
    ++iter;
  }

  st->newton_iterations = iter;
  st->rel_residual = rnorm / scale;
  st->gradient_norm_proxy = grad_norm_proxy(fc, v);
  double vmax = 0.0;
  for (int k = 0; k < v.size(); ++k) vmax = std::max(vmax, std::abs(v(k)));
  st->apriori_ratio = vmax / std::max(hmax, 1e-300);

  ComplexField field;
  field.mesh = &mesh;
  field.values = std::move(v);
  return field;
}

namespace {

// Real counterpart of the quasilinear machinery, for the direct problem
// div(a(u, grad u) grad u) = 0.
Eigen::VectorXd real_residual(const FemCache& fc, const ConductivityModel& model, const Eigen::VectorXd& u) {
  Eigen::VectorXd R = Eigen::VectorXd::Zero(fc.mesh->num_vertices());
  for (const auto& g : fc.tris) {
    const double uc = (u(g.v[0]) + u(g.v[1]) + u(g.v[2])) / 3.0;
    Vec2 grad_u = Vec2::Zero();
    for (int k = 0; k < 3; ++k) grad_u += u(g.v[k]) * g.grad[k];
    const ModelEval ev = model.evaluate(cplx(uc, 0.0), Vec2c(cplx(grad_u(0), 0.0), cplx(grad_u(1), 0.0)));
    const Vec2 G = ev.a.real() * grad_u;
    for (int k = 0; k < 3; ++k) R(g.v[k]) += g.area * G.dot(g.grad[k]);
  }
  return R;
}

struct RealJacobian {
  SpMatD A_ii;
  Eigen::SparseLU<SpMatD> lu;
  double datum_forcing = 0.0;  // |A_ib u_b|
};

void assemble_real_jacobian(const FemCache& fc, const ConductivityModel& model, const Eigen::VectorXd& u,
                            RealJacobian& jac) {
  const int ni = fc.interior_count();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(fc.tris.size() * 9);
  Eigen::VectorXd forcing = Eigen::VectorXd::Zero(ni);
  for (const auto& g : fc.tris) {
    const double uc = (u(g.v[0]) + u(g.v[1]) + u(g.v[2])) / 3.0;
    Vec2 grad_u = Vec2::Zero();
    for (int k = 0; k < 3; ++k) grad_u += u(g.v[k]) * g.grad[k];
    const ModelEval ev = model.evaluate(cplx(uc, 0.0), Vec2c(cplx(grad_u(0), 0.0), cplx(grad_u(1), 0.0)));
    const double a = ev.a.real();
    const double ds = ev.ds_a.real();
    const Vec2 dp(ev.dp_a(0).real(), ev.dp_a(1).real());
    // sampled real ellipticity of a I + sym(grad_u dp^T)
    const double cross = 0.5 * (grad_u(0) * dp(1) + grad_u(1) * dp(0));
    const double t00 = a + grad_u(0) * dp(0), t11 = a + grad_u(1) * dp(1);
    const double disc = std::sqrt(0.25 * (t00 - t11) * (t00 - t11) + cross * cross);
    if (0.5 * (t00 + t11) - disc <= 0.0)
      throw EllipticityError("solve_quasilinear_real: real ellipticity lost at an iterate");
    for (int i = 0; i < 3; ++i) {
      const int ri = fc.interior_index[g.v[i]];
      if (ri < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const double val = g.area * (a * g.grad[j].dot(g.grad[i]) +
                                     (ds / 3.0 + dp.dot(g.grad[j])) * grad_u.dot(g.grad[i]));
        const int cj = fc.interior_index[g.v[j]];
        if (cj >= 0)
          trips.emplace_back(ri, cj, val);
        else
          forcing(ri) += val * u(g.v[j]);
      }
    }
  }
  jac.datum_forcing = forcing.norm();
  jac.A_ii.resize(ni, ni);
  jac.A_ii.setFromTriplets(trips.begin(), trips.end());
  jac.lu.compute(jac.A_ii);
  if (jac.lu.info() != Eigen::Success) throw SolverError("solve_quasilinear_real: Jacobian factorization failed");
}

} // namespace

ComplexField solve_quasilinear_real(const Mesh& mesh, const ConductivityModel& model,
                                    const std::function<double(const Vec2&)>& f, const SolverOptions& opts,
                                    SolveStats* stats) {
  const FemCache fc = FemCache::build(mesh);

  // quick sampled positivity check on real arguments
  for (int k = 0; k < 9; ++k) {
    const double s = -2.0 + 0.5 * k;
    const ModelEval ev = model.evaluate(cplx(s, 0.0), Vec2c::Zero());
    if (!(ev.a.real() > 0.0))
      throw ValidationError("solve_quasilinear_real: model is not positive at s = " + std::to_string(s));
  }

  Eigen::VectorXd u(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) u(v) = f(mesh.vertices[v]);
  double fmax = 0.0;
  for (int i = 0; i < mesh.num_boundary(); ++i) fmax = std::max(fmax, std::abs(u(mesh.boundary_loop[i])));
  if (fmax > opts.real_datum_budget)
    throw ValidationError("solve_quasilinear_real: datum norm " + std::to_string(fmax) +
                          " exceeds the budget " + std::to_string(opts.real_datum_budget));

  SolveStats local_stats;
  SolveStats* st = stats ? stats : &local_stats;
  st->residual_history.clear();
  st->jacobian_rebuilds = 0;

  Eigen::VectorXd R = real_residual(fc, model, u);
  double rnorm = interior_norm_real(fc, R);
  const double abs_floor = 1e-14 * (1.0 + fmax) * model.constants().Lambda;
  double scale = abs_floor;  // replaced by the datum forcing after the first assembly

  RealJacobian jac;
  int iter = 0;
  while (rnorm > opts.tolerance * scale && rnorm > abs_floor) {
    if (iter >= opts.max_newton)
      throw NonconvergenceError("solve_quasilinear_real: no convergence after " + std::to_string(iter) +
                                " Newton iterations; residual history: " + history_string(st->residual_history));
    assemble_real_jacobian(fc, model, u, jac);
    ++st->jacobian_rebuilds;
    if (iter == 0) {
      scale = std::max(jac.datum_forcing, abs_floor);
      if (rnorm <= opts.tolerance * scale) break;
    }
    Eigen::VectorXd ri(fc.interior_count());
    for (int k = 0; k < fc.interior_count(); ++k) ri(k) = R(fc.interior_list[k]);
    const Eigen::VectorXd delta = jac.lu.solve(-ri);

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd u_try, R_try;
    double r_try = 0.0;
    for (int d = 0; d <= opts.damping_limit; ++d) {
      u_try = u;
      for (int k = 0; k < fc.interior_count(); ++k) u_try(fc.interior_list[k]) += alpha * delta(k);
      R_try = real_residual(fc, model, u_try);
      r_try = interior_norm_real(fc, R_try);
      if (r_try < rnorm) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw NonconvergenceError("solve_quasilinear_real: damping failed at iteration " + std::to_string(iter) +
                                "; residual history: " + history_string(st->residual_history));
    u = u_try;
    R = R_try;
    rnorm = r_try;
    ++iter;
    st->residual_history.push_back(rnorm / scale);
  }

  st->newton_iterations = iter;
  st->rel_residual = rnorm / scale;

  ComplexField field;
  field.mesh = &mesh;
  field.values = u.cast<cplx>();
  return field;
}

Eigen::VectorXcd interpolate(const Mesh& mesh, const std::function<cplx(const Vec2&)>& fn) {
  Eigen::VectorXcd out(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) out(v) = fn(mesh.vertices[v]);
  return out;
}

Eigen::VectorXcd boundary_values(const Mesh& mesh, const std::function<cplx(const Vec2&)>& fn) {
  Eigen::VectorXcd out(mesh.num_boundary());
  for (int i = 0; i < mesh.num_boundary(); ++i) out(i) = fn(mesh.vertices[mesh.boundary_loop[i]]);
  return out;
}

} // namespace qcond
