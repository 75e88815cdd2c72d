#include "qcond/reconstruct.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

cplx bilinear_nu(const Vec2c& p, const Vec2& nu) { return p(0) * nu(0) + p(1) * nu(1); }

void check_anchor_normal(const Mesh& mesh) {
  // providers backed by a mesh serve reconstructions that read the anchor flux
  if (mesh.vertices[mesh.anchor_vertex].norm() > 1e-12)
    throw ValidationError("provider: mesh anchor is not at the origin");
}

ProbePoint scaled_probe(double s, const ProbePoint& base, double eta, const Vec2& nu0) {
  return ProbePoint::make(s, (eta * base.p).eval(), nu0);
}

} // namespace

SyntheticDirectProvider::SyntheticDirectProvider(const Mesh& mesh, const ConductivityModel& model,
                                                 SolverOptions opts)
    : mesh_(mesh), model_(model), opts_(opts) {
  check_anchor_normal(mesh);
  cache_ = std::make_shared<const FemCache>(FemCache::build(mesh));
}

std::shared_ptr<DiscreteOperator> SyntheticDirectProvider::operator_for(const ProbePoint& probe) {
  auto op = std::make_shared<DiscreteOperator>();
  *op = assemble_linearized(cache_, model_, probe, opts_).second;
  return op;
}

DNSample SyntheticDirectProvider::query(const ProbePoint& probe, const BoundaryDatum& datum) {
  const std::string key = sample_key(probe, datum);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
  }
  const auto op = operator_for(probe);
  DNSample sample = dn_linearized_with(*op, probe, datum);
  std::lock_guard<std::mutex> lock(mutex_);
  return values_.emplace(key, std::move(sample)).first->second;
}

EndToEndProvider::EndToEndProvider(const Mesh& mesh, const ConductivityModel& model,
                                   std::array<double, 2> fd_steps, SolverOptions opts)
    : mesh_(mesh), model_(model), fd_steps_(fd_steps), opts_(opts) {
  check_anchor_normal(mesh);
  if (!(fd_steps_[0] > fd_steps_[1]) || !(fd_steps_[1] > 0.0))
    throw ValidationError("EndToEndProvider: finite-difference steps must be decreasing and positive");
  cache_ = std::make_shared<const FemCache>(FemCache::build(mesh));
}

DNSample EndToEndProvider::query(const ProbePoint& probe, const BoundaryDatum& datum) {
  const std::string key = sample_key(probe, datum);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
  }

  DiscreteOperator op = assemble_linearized(cache_, model_, probe, opts_).second;
  const DNSample zero = dn_complex(mesh_, model_, probe, BoundaryDatum::constant(0.0), opts_, nullptr, &op);

  std::array<Eigen::VectorXcd, 2> quotients;
  for (int k = 0; k < 2; ++k) {
    const double t = fd_steps_[k];
    const DNSample st = dn_complex(mesh_, model_, probe, datum.scaled(t), opts_, nullptr, &op);
    quotients[k] = (st.trace - zero.trace) / t;
  }
  const double t1 = fd_steps_[0], t2 = fd_steps_[1];

  DNSample sample;
  sample.probe = probe;
  sample.datum_id = datum.id;
  sample.datum_kind = datum.kind_name();
  sample.datum_params = datum.params();
  sample.kind = MapKind::kGateauxFd;
  sample.trace = (t1 * quotients[1] - t2 * quotients[0]) / (t1 - t2);
  sample.anchor_value = sample.trace(mesh_.anchor_loop_index());
  sample.mesh_level = mesh_.refinement_level;
  sample.provenance = {true, t2};

  std::lock_guard<std::mutex> lock(mutex_);
  return values_.emplace(key, std::move(sample)).first->second;
}

MeasuredProvider::MeasuredProvider(const std::vector<DNSample>& samples) {
  for (const auto& s : samples)
    records_.emplace(sample_key(s.probe.s, s.probe.p, s.datum_kind, s.datum_params), s);
}

DNSample MeasuredProvider::query(const ProbePoint& probe, const BoundaryDatum& datum) {
  const std::string key = sample_key(probe, datum);
  auto it = records_.find(key);
  if (it == records_.end())
    throw ProviderError("measured provider: no record for query " + key);
  return it->second;
}

DNSample RecordingProvider::query(const ProbePoint& probe, const BoundaryDatum& datum) {
  DNSample sample = inner_.query(probe, datum);
  std::lock_guard<std::mutex> lock(mutex_);
  records_.emplace(sample_key(probe, datum), sample);
  return sample;
}

void RecordingProvider::flush(std::ostream& os) const {
  for (const auto& [key, sample] : records_) write_sample(os, sample);
}

std::vector<DNSample> RecordingProvider::records_sorted() const {
  std::vector<DNSample> out;
  out.reserve(records_.size());
  for (const auto& [key, sample] : records_) out.push_back(sample);
  return out;
}

ProbeFamilyResult probe_family(double r0, const Vec2& nu0, const std::vector<double>& magnitudes,
                               int count_angles, double transversality_cutoff) {
  if (count_angles < 1) throw ValidationError("probe_family: count_angles must be at least 1");
  if (std::abs(nu0.norm() - 1.0) > 1e-10) throw ValidationError("probe_family: nu0 must be a unit vector");
  const double bound = r0 / std::sqrt(2.0);
  for (double m : magnitudes)
    if (!(m > 0.0) || m >= bound)
      throw ValidationError("probe_family: magnitude " + std::to_string(m) + " violates |p_0| < r_0/sqrt(2) = " +
                            std::to_string(bound));

  ProbeFamilyResult result;
  for (double m : magnitudes) {
    for (int k = 0; k < count_angles; ++k) {
      const double ang = 2.0 * M_PI * k / count_angles;
      const Vec2 p0(m * std::cos(ang), m * std::sin(ang));
      const Vec2 p0_perp = perp(p0);
      const Vec2c p(cplx(p0(0), p0_perp(0)), cplx(p0(1), p0_perp(1)));
      ProbePoint probe = ProbePoint::make(0.0, p, nu0);
      if (probe.transversality <= transversality_cutoff * probe.magnitude)
        result.rejected.push_back(probe);
      else
        result.probes.push_back(probe);
    }
  }
  return result;
}

cplx recover_ds_a(DNProvider& provider, double s, const ProbePoint& probe, cplx c0, const Vec2& nu0,
                  double transversality_cutoff) {
  if (c0 == cplx(0.0, 0.0)) throw ValidationError("recover_ds_a: c0 must be nonzero");
  const cplx pnu = bilinear_nu(probe.p, nu0);
  if (std::abs(pnu) <= transversality_cutoff * probe.magnitude)
    throw TransversalityError("recover_ds_a: |p.nu(0)| = " + std::to_string(std::abs(pnu)) +
                              " is below the cutoff for |p| = " + std::to_string(probe.magnitude));
  const ProbePoint q = ProbePoint::make(s, probe.p, nu0);
  const cplx flux = provider.anchor_flux(q, BoundaryDatum::constant(c0));
  return flux / (c0 * pnu);
}

namespace {

struct RefinedGrid {
  std::vector<double> nodes;       // all refined nodes, ascending
  std::vector<int> grid_index;     // position of each s_grid node in `nodes`
  int zero_index = -1;
  int sub = 0;                     // refined subintervals per grid interval (even)
};

RefinedGrid refine_grid(const std::vector<double>& s_grid, int refine) {
  if (s_grid.empty()) throw ValidationError("recover_a_tilde: empty s grid");
  for (std::size_t i = 1; i < s_grid.size(); ++i)
    if (!(s_grid[i] > s_grid[i - 1])) throw ValidationError("recover_a_tilde: s grid must be strictly ascending");
  const auto zero_it = std::find(s_grid.begin(), s_grid.end(), 0.0);
  if (zero_it == s_grid.end()) throw ValidationError("recover_a_tilde: s grid must contain 0");

  RefinedGrid rg;
  rg.sub = std::max(2, refine + (refine % 2));
  if (s_grid.size() == 1) {
    rg.nodes = {0.0};
    rg.grid_index = {0};
    rg.zero_index = 0;
    return rg;
  }
  for (std::size_t k = 0; k + 1 < s_grid.size(); ++k) {
    rg.grid_index.push_back(static_cast<int>(rg.nodes.size()));
    for (int j = 0; j < rg.sub; ++j)
      rg.nodes.push_back(s_grid[k] + (s_grid[k + 1] - s_grid[k]) * j / rg.sub);
  }
  rg.grid_index.push_back(static_cast<int>(rg.nodes.size()));
  rg.nodes.push_back(s_grid.back());
  rg.zero_index = rg.grid_index[static_cast<int>(zero_it - s_grid.begin())];
  rg.nodes[rg.zero_index] = 0.0;
  return rg;
}

} // namespace

ATildeResult recover_a_tilde(DNProvider& provider, const std::vector<double>& s_grid, const ProbePoint& probe,
                             cplx c0, const ReconstructionConfig& cfg) {
  const RefinedGrid rg = refine_grid(s_grid, cfg.simpson_refine);

  std::vector<cplx> ds(rg.nodes.size());
  for (std::size_t i = 0; i < rg.nodes.size(); ++i)
    ds[i] = recover_ds_a(provider, rg.nodes[i], probe, c0, cfg.nu0, cfg.transversality_cutoff);

  // composite Simpson per grid interval, accumulated away from s = 0
  const int intervals = static_cast<int>(s_grid.size()) - 1;
  std::vector<cplx> interval_integral(std::max(intervals, 0), cplx(0.0, 0.0));
  for (int k = 0; k < intervals; ++k) {
    const int i0 = rg.grid_index[k];
    const double h = (s_grid[k + 1] - s_grid[k]) / rg.sub;
    std::vector<cplx> panel(ds.begin() + i0, ds.begin() + i0 + rg.sub + 1);
    interval_integral[k] = simpson_uniform(panel, h);
  }

  const auto zero_pos = static_cast<int>(std::find(s_grid.begin(), s_grid.end(), 0.0) - s_grid.begin());
  ATildeResult out;
  out.a_tilde.assign(s_grid.size(), cplx(0.0, 0.0));
  for (int k = zero_pos + 1; k < static_cast<int>(s_grid.size()); ++k)
    out.a_tilde[k] = out.a_tilde[k - 1] + interval_integral[k - 1];
  for (int k = zero_pos - 1; k >= 0; --k) out.a_tilde[k] = out.a_tilde[k + 1] - interval_integral[k];

  out.ds_a.resize(s_grid.size());
  for (std::size_t k = 0; k < s_grid.size(); ++k) out.ds_a[k] = ds[rg.grid_index[k]];
  return out;
}

namespace {

double grid_step_hint(const std::vector<double>& s_grid, int refine) {
  double step = 0.25;
  if (s_grid.size() >= 2) {
    double smallest = 1e300;
    for (std::size_t i = 1; i < s_grid.size(); ++i) smallest = std::min(smallest, s_grid[i] - s_grid[i - 1]);
    step = smallest / std::max(2, refine + (refine % 2));
  }
  return step;
}

// a_tilde(s_ref, p) by Simpson on a uniform [0, s_ref] grid.
cplx a_tilde_at(DNProvider& provider, const ProbePoint& probe, double s_ref, cplx c0,
                const ReconstructionConfig& cfg) {
  if (s_ref == 0.0) return cplx(0.0, 0.0);
  const double step = grid_step_hint(cfg.s_grid, cfg.simpson_refine);
  int count = static_cast<int>(std::ceil(std::abs(s_ref) / step));
  count += count % 2;
  count = std::max(count, 2);
  const double h = s_ref / count;
  std::vector<cplx> ds(count + 1);
  for (int j = 0; j <= count; ++j)
    ds[j] = recover_ds_a(provider, h * j, probe, c0, cfg.nu0, cfg.transversality_cutoff);
  const cplx integral = simpson_uniform(ds, std::abs(h));
  return s_ref > 0.0 ? integral : -integral;
}

} // namespace

A0Result recover_a0(DNProvider& provider, const ProbePoint& probe, double s_ref, cplx c0,
                    const ReconstructionConfig& cfg) {
  const double theta1 = std::min(cfg.theta[0], cfg.theta[1]);
  const double theta2 = std::max(cfg.theta[0], cfg.theta[1]);
  if (!(theta1 > 0.0) || !(theta2 < 1.0) || theta1 == theta2)
    throw ValidationError("recover_a0: theta pair must satisfy 0 < theta1 < theta2 < 1");
  const cplx pnu = bilinear_nu(probe.p, cfg.nu0);
  if (std::abs(pnu) <= cfg.transversality_cutoff * probe.magnitude)
    throw TransversalityError("recover_a0: probe is not transversal at the anchor");

  // ray table of a_tilde(s_ref, eta p), with centered-difference slopes
  HermiteTable table;
  const bool need_table = s_ref != 0.0;
  if (need_table) {
    const int m = std::max(cfg.eta_table_nodes, 4);
    table.x0 = theta1;
    table.dx = (1.0 - theta1) / (m - 1);
    table.value.resize(m);
    for (int i = 0; i < m; ++i) {
      const double eta = table.x0 + i * table.dx;
      table.value[i] = a_tilde_at(provider, scaled_probe(s_ref, probe, eta, cfg.nu0), s_ref, c0, cfg);
    }
    table.slope = table_slopes(table.value, table.dx);
  }

  auto integrand = [&](double eta) {
    const ProbePoint pe = scaled_probe(s_ref, probe, eta, cfg.nu0);
    const cplx flux = provider.anchor_flux(pe, BoundaryDatum::linear_probe(pe.p));
    const cplx pnu_eta = eta * pnu;
    cplx braces = 0.0;
    if (need_table) braces = table.eval(eta) + eta * table.eval_derivative(eta);
    return (flux - pnu_eta * braces) / pnu_eta;
  };

  cplx integral1 = 0.0;
  for (const auto& node : gauss_legendre(std::max(cfg.gl_nodes, 2), theta1, 1.0))
    integral1 += node.w * integrand(node.x);
  cplx piece = 0.0;
  for (const auto& node : gauss_legendre(4, theta1, theta2)) piece += node.w * integrand(node.x);
  const cplx integral2 = integral1 - piece;

  A0Result out;
  out.integral_theta1 = integral1;
  out.integral_theta2 = integral2;
  out.value = (theta2 * integral1 - theta1 * integral2) / (theta2 - theta1);
  out.tolerance_bar = std::abs(out.value - integral1) + 1e-14 * (1.0 + std::abs(out.value));
  const double near_zero_level = std::abs(piece) / (theta2 - theta1);
  const double bulk_level = std::abs(integral1) / (1.0 - theta1) + 1e-30;
  out.warning = near_zero_level > 10.0 * bulk_level;
  return out;
}

namespace {

ProbeRecovery recover_single_probe(DNProvider& provider, const ProbePoint& probe, const ReconstructionConfig& cfg,
                                   const ConductivityModel* truth) {
  ProbeRecovery rec;
  rec.probe = probe;
  try {
    ATildeResult at = recover_a_tilde(provider, cfg.s_grid, probe, cfg.c0, cfg);
    rec.ds_a = std::move(at.ds_a);
    rec.a_tilde = std::move(at.a_tilde);
    rec.a0 = recover_a0(provider, probe, cfg.s_ref[0], cfg.c0, cfg);
    if (cfg.check_s_independence && cfg.s_ref[1] != cfg.s_ref[0]) {
      rec.a0_check = recover_a0(provider, probe, cfg.s_ref[1], cfg.c0, cfg);
      rec.checked = true;
      rec.s_independence_discrepancy = std::abs(rec.a0.value - rec.a0_check.value);
    }
    rec.a.resize(rec.a_tilde.size());
    for (std::size_t k = 0; k < rec.a_tilde.size(); ++k) rec.a[k] = rec.a_tilde[k] + rec.a0.value;
    if (truth != nullptr) {
      rec.truth.resize(cfg.s_grid.size());
      rec.rel_error.resize(cfg.s_grid.size());
      for (std::size_t k = 0; k < cfg.s_grid.size(); ++k) {
        rec.truth[k] = truth->evaluate(cplx(cfg.s_grid[k], 0.0), probe.p).a;
        rec.rel_error[k] = std::abs(rec.a[k] - rec.truth[k]) / std::max(std::abs(rec.truth[k]), 1e-300);
      }
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.failure = e.what();
  }
  return rec;
}

} // namespace

ReconstructionReport recover_a(DNProvider& provider, const std::vector<ProbePoint>& probes,
                               const ReconstructionConfig& cfg, const ConductivityModel* truth, int workers) {
  ReconstructionReport report;
  report.provider_mode = provider.mode();
  report.s_grid = cfg.s_grid;
  report.has_truth = truth != nullptr;
  report.gl_nodes = cfg.gl_nodes;
  report.eta_table_nodes = cfg.eta_table_nodes;
  report.theta = cfg.theta;
  report.simpson_refine = cfg.simpson_refine;
  report.probes.resize(probes.size());

  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(probes.size())));
  if (nw <= 1) {
    for (std::size_t i = 0; i < probes.size(); ++i)
      report.probes[i] = recover_single_probe(provider, probes[i], cfg, truth);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w)
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= probes.size()) break;
          report.probes[i] = recover_single_probe(provider, probes[i], cfg, truth);
        }
      });
    for (auto& th : pool) th.join();
  }

  double err_sum = 0.0;
  int err_count = 0;
  for (const auto& rec : report.probes) {
    if (rec.failed) {
      ++report.failed_probes;
      continue;
    }
    for (double e : rec.rel_error) {
      report.max_rel_error = std::max(report.max_rel_error, e);
      err_sum += e;
      ++err_count;
    }
    if (rec.checked) {
      report.max_s_independence_discrepancy =
          std::max(report.max_s_independence_discrepancy, rec.s_independence_discrepancy);
      report.max_s_independence_bar =
          std::max(report.max_s_independence_bar, rec.a0.tolerance_bar + rec.a0_check.tolerance_bar);
    }
  }
  report.mean_rel_error = err_count > 0 ? err_sum / err_count : 0.0;
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

void write_report(std::ostream& os, const ReconstructionReport& report) {
  os << "# qcond-reconstruction 1 provider " << report.provider_mode << "\n";
  os << "# columns: s p1_re p1_im p2_re p2_im atilde_re atilde_im a0_re a0_im a_re a_im truth_re truth_im rel_error\n";
  for (const auto& rec : report.probes) {
    if (rec.failed) {
      os << "# probe failed: " << rec.failure << "\n";
      continue;
    }
    for (std::size_t k = 0; k < report.s_grid.size(); ++k) {
      os << fmt(report.s_grid[k]) << " " << fmt(rec.probe.p(0).real()) << " " << fmt(rec.probe.p(0).imag()) << " "
         << fmt(rec.probe.p(1).real()) << " " << fmt(rec.probe.p(1).imag()) << " " << fmt(rec.a_tilde[k].real())
         << " " << fmt(rec.a_tilde[k].imag()) << " " << fmt(rec.a0.value.real()) << " " << fmt(rec.a0.value.imag())
         << " " << fmt(rec.a[k].real()) << " " << fmt(rec.a[k].imag());
      if (report.has_truth)
        os << " " << fmt(rec.truth[k].real()) << " " << fmt(rec.truth[k].imag()) << " " << fmt(rec.rel_error[k]);
      else
        os << " nan nan nan";
      os << "\n";
    }
  }
}

void write_report_summary(std::ostream& os, const ReconstructionReport& report) {
  os << "provider " << report.provider_mode << "\n";
  os << "probes " << report.probes.size() << "\n";
  os << "failed_probes " << report.failed_probes << "\n";
  os << "has_truth " << (report.has_truth ? 1 : 0) << "\n";
  os << "max_rel_error " << fmt(report.max_rel_error) << "\n";
  os << "mean_rel_error " << fmt(report.mean_rel_error) << "\n";
  os << "max_s_independence_discrepancy " << fmt(report.max_s_independence_discrepancy) << "\n";
  os << "max_s_independence_bar " << fmt(report.max_s_independence_bar) << "\n";
  os << "gl_nodes " << report.gl_nodes << "\n";
  os << "eta_table_nodes " << report.eta_table_nodes << "\n";
  os << "theta " << fmt(report.theta[0]) << " " << fmt(report.theta[1]) << "\n";
  os << "simpson_refine " << report.simpson_refine << "\n";
  for (const auto& rec : report.probes) {
    if (rec.failed) continue;
    os << "probe " << fmt(rec.probe.p(0).real()) << " " << fmt(rec.probe.p(0).imag()) << " "
       << fmt(rec.probe.p(1).real()) << " " << fmt(rec.probe.p(1).imag()) << " a0_bar "
       << fmt(rec.a0.tolerance_bar) << " a0_warning " << (rec.a0.warning ? 1 : 0);
    if (rec.checked) os << " s_independence " << fmt(rec.s_independence_discrepancy);
    os << "\n";
  }
}

} // namespace qcond
