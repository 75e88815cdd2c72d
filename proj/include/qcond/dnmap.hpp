#ifndef QCOND_DNMAP_HPP
#define QCOND_DNMAP_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qcond/pde.hpp"

namespace qcond {

// Dirichlet datum on the closure, interpolated at boundary vertices.
struct BoundaryDatum {
  enum class Kind { kConstant, kLinearProbe, kCustom };

  Kind kind = Kind::kConstant;
  std::string id = "const";
  cplx constant_value = 0.0;
  Vec2c probe_p = Vec2c::Zero();
  std::function<cplx(const Vec2&)> custom_fn;

  static BoundaryDatum constant(cplx c);
  static BoundaryDatum linear_probe(const Vec2c& p);
  static BoundaryDatum custom(const std::string& id, std::function<cplx(const Vec2&)> fn);

  cplx evaluate(const Vec2& x) const;
  Eigen::VectorXcd trace(const Mesh& mesh) const;
  std::function<cplx(const Vec2&)> closure() const;
  BoundaryDatum scaled(cplx factor) const;  // kConstant/kCustom keep kind; parameters scale
  std::array<double, 4> params() const;
  std::string kind_name() const;
};

enum class MapKind { kReal, kComplex, kLinearized, kGateauxFd };

std::string map_kind_name(MapKind kind);
MapKind map_kind_from_name(const std::string& name);

struct Provenance {
  bool finite_difference = false;
  double fd_step = 0.0;
};

// Boundary flux trace for one datum at one probe.
struct DNSample {
  ProbePoint probe;
  std::string datum_id;
  std::string datum_kind;
  std::array<double, 4> datum_params{};
  MapKind kind = MapKind::kComplex;
  Eigen::VectorXcd trace;   // boundary-loop order
  cplx anchor_value = 0.0;
  int mesh_level = 0;
  Provenance provenance;
};

// Flux trace from boundary moments by variational recovery: the weak residual
// paired with boundary hat functions, divided by the hat boundary mass.
Eigen::VectorXcd recover_trace(const FemCache& cache, const Eigen::VectorXcd& moments);

DNSample dn_real(const Mesh& mesh, const ConductivityModel& model, const BoundaryDatum& f,
                 const SolverOptions& opts = {}, SolveStats* stats = nullptr);

DNSample dn_complex(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                    const BoundaryDatum& h, const SolverOptions& opts = {}, SolveStats* stats = nullptr,
                    const DiscreteOperator* base_op = nullptr);

DNSample dn_linearized(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                       const BoundaryDatum& h, const SolverOptions& opts = {});
DNSample dn_linearized_with(const DiscreteOperator& op, const ProbePoint& probe, const BoundaryDatum& h);

struct GateauxTable {
  std::vector<double> steps;
  std::vector<double> gaps;        // sup-norm distance to the linearized trace
  std::vector<double> gap_ratios;  // gaps[i+1] / gaps[i]
  Eigen::VectorXcd richardson_trace;  // extrapolation of the two smallest steps
  double richardson_gap = 0.0;
};

// Finite-difference Gateaux quotients (Gamma[t h] - Gamma[0]) / t compared
// against the linearized map; the returned sample holds the smallest-step
// quotient.
std::pair<DNSample, GateauxTable> gateaux_fd(const Mesh& mesh, const ConductivityModel& model,
                                             const ProbePoint& probe, const BoundaryDatum& h,
                                             const std::vector<double>& steps, const SolverOptions& opts = {});

// Max boundary deviation between the real map applied to u_{s,0} + h and the
// complex map at probe (s, 0) with datum h.
double consistency_real_complex(const Mesh& mesh, const ConductivityModel& model, double s,
                                const BoundaryDatum& h, const SolverOptions& opts = {});

// Line-oriented sample records (documented column order, 17 significant digits).
void write_sample(std::ostream& os, const DNSample& sample);
std::vector<DNSample> read_samples(std::istream& is);

// Exact-match lookup key: map-independent query identity (s, p, datum).
std::string sample_key(double s, const Vec2c& p, const std::string& datum_kind, const std::array<double, 4>& params);
std::string sample_key(const ProbePoint& probe, const BoundaryDatum& datum);

} // namespace qcond

#endif
