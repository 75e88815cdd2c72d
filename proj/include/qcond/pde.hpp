#ifndef QCOND_PDE_HPP
#define QCOND_PDE_HPP

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "qcond/conductivity.hpp"
#include "qcond/geometry.hpp"

namespace qcond {

using SpMatC = Eigen::SparseMatrix<cplx>;
using SpMatD = Eigen::SparseMatrix<double>;

// Per-triangle geometry for piecewise-linear elements with the one-point
// (centroid, Gauss order 2) rule.
struct TriGeom {
  std::array<int, 3> v;
  std::array<Vec2, 3> grad;
  double area;
  Vec2 centroid;
};

struct FemCache {
  const Mesh* mesh = nullptr;
  std::vector<TriGeom> tris;
  Eigen::VectorXd vertex_mass;         // integral of each hat function
  Eigen::VectorXd boundary_hat_mass;   // boundary-loop order
  std::vector<int> interior_index;     // -1 on the boundary
  std::vector<int> interior_list;

  static FemCache build(const Mesh& mesh);
  int interior_count() const { return static_cast<int>(interior_list.size()); }
};

struct ProbePoint {
  double s = 0.0;
  Vec2c p = Vec2c::Zero();
  double isotropy_defect = 0.0;  // |p.p| (bilinear product)
  double transversality = 0.0;   // |p.nu(0)|
  double magnitude = 0.0;        // |p|

  static ProbePoint make(double s, const Vec2c& p, const Vec2& anchor_normal);
  static ProbePoint make(double s, const Vec2c& p, const Mesh& mesh);
  bool isotropic() const { return isotropy_defect <= 1e-14 * std::max(1.0, magnitude * magnitude); }
  bool admissible(double r0) const { return isotropic() && magnitude < r0; }
};

struct ComplexField {
  const Mesh* mesh = nullptr;
  Eigen::VectorXcd values;
};

// Coefficients of the linearized operator, sampled at the quadrature points:
// A(x) = a(u_sp,p) I + p grad_p a(u_sp,p)^T, b(x) = ds_a(u_sp,p) p.
struct LinearizedCoefficients {
  std::vector<Mat2c> A;  // per triangle
  std::vector<Vec2c> b;
  double coercivity_margin = 0.0;  // min over points/directions of Re(xi* A xi)
  Vec2 worst_point = Vec2::Zero();
  double max_b_over_p = 0.0;
};

enum class NewtonStart { kLinearized, kInterpolant };

struct SolverOptions {
  double tolerance = 1e-12;
  int max_newton = 25;
  int damping_limit = 6;
  double datum_budget = 0.05;
  double real_datum_budget = 2.0;
  int direct_threshold = 150000;   // unknown count above which the iterative path is used
  double iterative_tolerance = 1e-13;
  int iterative_max_iterations = 20000;
  bool frozen_jacobian = true;     // reuse the base factorization while it contracts
  NewtonStart newton_start = NewtonStart::kLinearized;
};

struct SolveStats {
  double rel_residual = 0.0;
  double apriori_ratio = 0.0;      // |v|_inf / (|h|_inf + |g|_inf)
  int newton_iterations = 0;
  int jacobian_rebuilds = 0;
  std::vector<double> residual_history;
  double gradient_norm_proxy = 0.0;
};

// Assembled divergence-form weak operator with Dirichlet bookkeeping,
// partitioned into interior and boundary blocks and factorized once.
class DiscreteOperator {
public:
  DiscreteOperator() = default;

  const FemCache& cache() const { return *cache_; }
  const Mesh& mesh() const { return *cache_->mesh; }
  int interior_count() const { return ni_; }

  // Dirichlet data in boundary-loop order; g may be empty for zero sources.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& h_boundary,
                         const std::function<cplx(const Vec2&)>& g = nullptr,
                         SolveStats* stats = nullptr) const;

  // Boundary-loop flux moments of a full vertex field through this operator.
  Eigen::VectorXcd flux_moments(const Eigen::VectorXcd& field,
                                const std::function<cplx(const Vec2&)>& g = nullptr) const;

  // Interior backsolve with the stored factorization (Newton corrections).
  Eigen::VectorXcd apply_inverse(const Eigen::VectorXcd& interior_rhs) const;

  // |A_ib h|: the forcing a Dirichlet datum injects into the reduced system.
  double datum_forcing_norm(const Eigen::VectorXcd& h_boundary) const;

  // Interior block action A_ii x (Jacobian consistency checks).
  Eigen::VectorXcd apply_matrix(const Eigen::VectorXcd& interior_vec) const;

  friend DiscreteOperator assemble_operator(std::shared_ptr<const FemCache> cache,
                                            const std::vector<Mat2c>& A, const std::vector<Vec2c>& b,
                                            const SolverOptions& opts);

private:
  std::shared_ptr<const FemCache> cache_;
  int ni_ = 0;
  SpMatC A_ii_, A_ib_, A_bi_, A_bb_;
  std::shared_ptr<Eigen::SparseLU<SpMatC>> lu_;
  bool iterative_ = false;
  double iterative_tolerance_ = 1e-13;
  int iterative_max_iterations_ = 20000;
  Eigen::VectorXcd assemble_rhs(const std::function<cplx(const Vec2&)>& g) const;  // all vertices
};

DiscreteOperator assemble_operator(std::shared_ptr<const FemCache> cache,
                                   const std::vector<Mat2c>& A, const std::vector<Vec2c>& b,
                                   const SolverOptions& opts);

// Coefficients + operator of the linearized problem at a probe. Throws
// EllipticityError when the sampled complex coercivity drops below
// 0.9 * lambda_tilde. Non-isotropic probes need the explicit override.
std::pair<LinearizedCoefficients, DiscreteOperator> assemble_linearized(
    std::shared_ptr<const FemCache> cache, const ConductivityModel& model, const ProbePoint& probe,
    const SolverOptions& opts = {}, bool allow_nonisotropic = false);

std::pair<LinearizedCoefficients, DiscreteOperator> assemble_linearized(
    const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
    const SolverOptions& opts = {}, bool allow_nonisotropic = false);

ComplexField solve_linear_complex(const DiscreteOperator& op, const std::function<cplx(const Vec2&)>& g,
                                  const std::function<cplx(const Vec2&)>& h, SolveStats* stats = nullptr);

// Real quasilinear problem div(a(u, grad u) grad u) = 0, u = f on the boundary.
ComplexField solve_quasilinear_real(const Mesh& mesh, const ConductivityModel& model,
                                    const std::function<double(const Vec2&)>& f, const SolverOptions& opts = {},
                                    SolveStats* stats = nullptr);

// Complex quasilinear perturbation problem around u_sp (v = solution, v|bd = h).
// base_op, when supplied, must be the linearized operator at the same probe.
ComplexField solve_quasilinear_complex(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                                       const std::function<cplx(const Vec2&)>& h, const SolverOptions& opts = {},
                                       SolveStats* stats = nullptr, const DiscreteOperator* base_op = nullptr);

// Scaled discrete residual of u_sp in the quasilinear operator; decays under
// refinement exactly when the probe is isotropic.
double probe_residual(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe);

// Boundary-loop moments of the quasilinear flux of a full solution field:
// dn_complex subtracts the probe background, dn_real takes the plain flux.
Eigen::VectorXcd quasilinear_flux_moments(const FemCache& cache, const ConductivityModel& model,
                                          const ProbePoint& probe, const Eigen::VectorXcd& v_field);
Eigen::VectorXcd real_flux_moments(const FemCache& cache, const ConductivityModel& model,
                                   const Eigen::VectorXcd& u_field);

// Nonlinear residual vector (all vertices) of the complex quasilinear form.
Eigen::VectorXcd quasilinear_residual(const FemCache& cache, const ConductivityModel& model,
                                      const ProbePoint& probe, const Eigen::VectorXcd& v_field);

// Newton derivative of the complex quasilinear form at an iterate v.
DiscreteOperator assemble_jacobian_at(std::shared_ptr<const FemCache> cache, const ConductivityModel& model,
                                      const ProbePoint& probe, const Eigen::VectorXcd& v_field,
                                      const SolverOptions& opts = {});

Eigen::VectorXcd interpolate(const Mesh& mesh, const std::function<cplx(const Vec2&)>& fn);
Eigen::VectorXcd boundary_values(const Mesh& mesh, const std::function<cplx(const Vec2&)>& fn);

} // namespace qcond

#endif
