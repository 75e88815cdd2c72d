#ifndef QCOND_RECONSTRUCT_HPP
#define QCOND_RECONSTRUCT_HPP

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "qcond/dnmap.hpp"

namespace qcond {

// Answers (s, p, datum) -> boundary flux sample. Deterministic: identical
// queries return identical values, so results are cacheable and recordable.
class DNProvider {
public:
  virtual ~DNProvider() = default;
  virtual DNSample query(const ProbePoint& probe, const BoundaryDatum& datum) = 0;
  virtual std::string mode() const = 0;

  cplx anchor_flux(const ProbePoint& probe, const BoundaryDatum& datum) {
    return query(probe, datum).anchor_value;
  }
};

// Linearized PDE solves; isolates reconstruction error from linearization error.
class SyntheticDirectProvider : public DNProvider {
public:
  SyntheticDirectProvider(const Mesh& mesh, const ConductivityModel& model, SolverOptions opts = {});
  DNSample query(const ProbePoint& probe, const BoundaryDatum& datum) override;
  std::string mode() const override { return "synthetic_direct"; }

private:
  const Mesh& mesh_;
  const ConductivityModel& model_;
  SolverOptions opts_;
  std::shared_ptr<const FemCache> cache_;
  std::mutex mutex_;
  std::map<std::string, DNSample> values_;
  std::shared_ptr<DiscreteOperator> operator_for(const ProbePoint& probe);
};

// Finite-difference Gateaux quotients of the quasilinear complex DN map;
// the honest inverse-problem pipeline.
class EndToEndProvider : public DNProvider {
public:
  EndToEndProvider(const Mesh& mesh, const ConductivityModel& model, std::array<double, 2> fd_steps,
                   SolverOptions opts = {});
  DNSample query(const ProbePoint& probe, const BoundaryDatum& datum) override;
  std::string mode() const override { return "end_to_end"; }

private:
  const Mesh& mesh_;
  const ConductivityModel& model_;
  std::array<double, 2> fd_steps_;  // larger first
  SolverOptions opts_;
  std::shared_ptr<const FemCache> cache_;
  std::mutex mutex_;
  std::map<std::string, DNSample> values_;
};

// Replays persisted sample records; a missing record is an error, never an
// interpolation. Holds no model and no mesh.
class MeasuredProvider : public DNProvider {
public:
  explicit MeasuredProvider(const std::vector<DNSample>& samples);
  DNSample query(const ProbePoint& probe, const BoundaryDatum& datum) override;
  std::string mode() const override { return "measured"; }

private:
  std::map<std::string, DNSample> records_;
};

// Wraps a provider and keeps every answered sample for persistence.
class RecordingProvider : public DNProvider {
public:
  explicit RecordingProvider(DNProvider& inner) : inner_(inner) {}
  DNSample query(const ProbePoint& probe, const BoundaryDatum& datum) override;
  std::string mode() const override { return inner_.mode(); }
  // Records sorted by query key, for bitwise-stable files.
  void flush(std::ostream& os) const;
  std::vector<DNSample> records_sorted() const;

private:
  DNProvider& inner_;
  std::mutex mutex_;
  std::map<std::string, DNSample> records_;
};

struct ProbeFamilyResult {
  std::vector<ProbePoint> probes;
  std::vector<ProbePoint> rejected;  // transversality below the cutoff
};

// Isotropic probes p = p0 + i p0^perp for each magnitude and angle; every
// returned probe satisfies p.p = 0 exactly and |p0| < r0/sqrt(2).
ProbeFamilyResult probe_family(double r0, const Vec2& nu0, const std::vector<double>& magnitudes,
                               int count_angles, double transversality_cutoff = 0.1);

struct ReconstructionConfig {
  std::vector<double> s_grid = {-1.0, -0.5, 0.0, 0.5, 1.0};
  int simpson_refine = 4;
  Vec2 nu0 = Vec2(-1.0, 0.0);
  double transversality_cutoff = 0.1;  // fraction of |p|
  int eta_table_nodes = 9;
  int gl_nodes = 16;
  std::array<double, 2> theta = {0.01, 0.005};
  cplx c0 = cplx(1.0, 0.0);
  std::array<double, 2> s_ref = {0.0, 0.5};
  bool check_s_independence = true;
};

cplx recover_ds_a(DNProvider& provider, double s, const ProbePoint& probe, cplx c0, const Vec2& nu0,
                  double transversality_cutoff = 0.1);

// a_tilde(s, p) on the grid by composite Simpson over a refined node set;
// also returns ds_a at the grid nodes.
struct ATildeResult {
  std::vector<cplx> a_tilde;
  std::vector<cplx> ds_a;
};
ATildeResult recover_a_tilde(DNProvider& provider, const std::vector<double>& s_grid, const ProbePoint& probe,
                             cplx c0, const ReconstructionConfig& cfg);

struct A0Result {
  cplx value = 0.0;
  double tolerance_bar = 0.0;   // magnitude of the Richardson correction
  bool warning = false;
  cplx integral_theta1 = 0.0;   // raw integral over [theta_small, 1]
  cplx integral_theta2 = 0.0;
};
A0Result recover_a0(DNProvider& provider, const ProbePoint& probe, double s_ref, cplx c0,
                    const ReconstructionConfig& cfg);

struct ProbeRecovery {
  ProbePoint probe;
  bool failed = false;
  std::string failure;
  std::vector<cplx> ds_a;
  std::vector<cplx> a_tilde;
  A0Result a0;
  A0Result a0_check;
  bool checked = false;
  double s_independence_discrepancy = 0.0;
  std::vector<cplx> a;
  std::vector<cplx> truth;
  std::vector<double> rel_error;
};

struct ReconstructionReport {
  std::string provider_mode;
  std::vector<double> s_grid;
  std::vector<ProbeRecovery> probes;
  bool has_truth = false;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  double max_s_independence_discrepancy = 0.0;
  double max_s_independence_bar = 0.0;
  int failed_probes = 0;
  // quadrature metadata
  int gl_nodes = 0;
  int eta_table_nodes = 0;
  std::array<double, 2> theta{};
  int simpson_refine = 0;
};

// Full recovery a(s,p) = a_tilde(s,p) + a(0,p) over the grid and probe set.
// A probe failure marks that probe without aborting the others. truth, when
// given, fills the per-point error fields.
ReconstructionReport recover_a(DNProvider& provider, const std::vector<ProbePoint>& probes,
                               const ReconstructionConfig& cfg, const ConductivityModel* truth = nullptr,
                               int workers = 1);

void write_report(std::ostream& os, const ReconstructionReport& report);
void write_report_summary(std::ostream& os, const ReconstructionReport& report);

} // namespace qcond

#endif
