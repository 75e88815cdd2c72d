#include "qcond/dnmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double max_abs(const Eigen::VectorXcd& v) {
  double m = 0.0;
  for (int i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v(i)));
  return m;
}

} // namespace

BoundaryDatum BoundaryDatum::constant(cplx c) {
  BoundaryDatum d;
  d.kind = Kind::kConstant;
  d.id = "const";
  d.constant_value = c;
  return d;
}

BoundaryDatum BoundaryDatum::linear_probe(const Vec2c& p) {
  BoundaryDatum d;
  d.kind = Kind::kLinearProbe;
  d.id = "linp";
  d.probe_p = p;
  return d;
}

BoundaryDatum BoundaryDatum::custom(const std::string& id, std::function<cplx(const Vec2&)> fn) {
  BoundaryDatum d;
  d.kind = Kind::kCustom;
  d.id = id;
  d.custom_fn = std::move(fn);
  return d;
}

cplx BoundaryDatum::evaluate(const Vec2& x) const {
  switch (kind) {
    case Kind::kConstant:
      return constant_value;
    case Kind::kLinearProbe:
      return x(0) * probe_p(0) + x(1) * probe_p(1);
    case Kind::kCustom:
      return custom_fn(x);
  }
  return 0.0;
}

Eigen::VectorXcd BoundaryDatum::trace(const Mesh& mesh) const {
  Eigen::VectorXcd out(mesh.num_boundary());
  for (int i = 0; i < mesh.num_boundary(); ++i) out(i) = evaluate(mesh.vertices[mesh.boundary_loop[i]]);
  return out;
}

std::function<cplx(const Vec2&)> BoundaryDatum::closure() const {
  BoundaryDatum copy = *this;
  return [copy](const Vec2& x) { return copy.evaluate(x); };
}

BoundaryDatum BoundaryDatum::scaled(cplx factor) const {
  BoundaryDatum d = *this;
  switch (kind) {
    case Kind::kConstant:
      d.constant_value *= factor;
      break;
    case Kind::kLinearProbe:
      d.probe_p *= factor;
      break;
    case Kind::kCustom: {
      auto fn = custom_fn;
      d.custom_fn = [fn, factor](const Vec2& x) { return factor * fn(x); };
      break;
    }
  }
  return d;
}

std::array<double, 4> BoundaryDatum::params() const {
  switch (kind) {
    case Kind::kConstant:
      return {constant_value.real(), constant_value.imag(), 0.0, 0.0};
    case Kind::kLinearProbe:
      return {probe_p(0).real(), probe_p(0).imag(), probe_p(1).real(), probe_p(1).imag()};
    case Kind::kCustom:
      return {0.0, 0.0, 0.0, 0.0};
  }
  return {};
}

std::string BoundaryDatum::kind_name() const {
  switch (kind) {
    case Kind::kConstant:
      return "constant";
    case Kind::kLinearProbe:
      return "linear_probe";
    case Kind::kCustom:
      return "custom";
  }
  return "";
}

std::string map_kind_name(MapKind kind) {
  switch (kind) {
    case MapKind::kReal:
      return "real";
    case MapKind::kComplex:
      return "complex";
    case MapKind::kLinearized:
      return "linearized";
    case MapKind::kGateauxFd:
      return "gateaux_fd";
  }
  return "";
}

MapKind map_kind_from_name(const std::string& name) {
  if (name == "real") return MapKind::kReal;
  if (name == "complex") return MapKind::kComplex;
  if (name == "linearized") return MapKind::kLinearized;
  if (name == "gateaux_fd") return MapKind::kGateauxFd;
  throw ValidationError("unknown DN map kind '" + name + "'");
}

Eigen::VectorXcd recover_trace(const FemCache& cache, const Eigen::VectorXcd& moments) {
  Eigen::VectorXcd trace(moments.size());
  for (int i = 0; i < moments.size(); ++i) trace(i) = moments(i) / cache.boundary_hat_mass(i);
  return trace;
}

DNSample dn_real(const Mesh& mesh, const ConductivityModel& model, const BoundaryDatum& f,
                 const SolverOptions& opts, SolveStats* stats) {
  const Eigen::VectorXcd tr = f.trace(mesh);
  for (int i = 0; i < tr.size(); ++i)
    if (std::abs(tr(i).imag()) > 0.0)
      throw ValidationError("dn_real: datum '" + f.id + "' is not real-valued");

  auto closure = f.closure();
  ComplexField u = solve_quasilinear_real(
      mesh, model, [&closure](const Vec2& x) { return closure(x).real(); }, opts, stats);

  const FemCache cache = FemCache::build(mesh);
  DNSample sample;
  sample.probe = ProbePoint::make(0.0, Vec2c::Zero(), mesh);
  sample.datum_id = f.id;
  sample.datum_kind = f.kind_name();
  sample.datum_params = f.params();
  sample.kind = MapKind::kReal;
  sample.trace = recover_trace(cache, real_flux_moments(cache, model, u.values));
  sample.anchor_value = sample.trace(mesh.anchor_loop_index());
  sample.mesh_level = mesh.refinement_level;
  return sample;
}

DNSample dn_complex(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                    const BoundaryDatum& h, const SolverOptions& opts, SolveStats* stats,
                    const DiscreteOperator* base_op) {
  ComplexField v = solve_quasilinear_complex(mesh, model, probe, h.closure(), opts, stats, base_op);
  const FemCache* cache_ptr = base_op ? &base_op->cache() : nullptr;
  FemCache local;
  if (!cache_ptr) {
    local = FemCache::build(mesh);
    cache_ptr = &local;
  }
  DNSample sample;
  sample.probe = probe;
  sample.datum_id = h.id;
  sample.datum_kind = h.kind_name();
  sample.datum_params = h.params();
  sample.kind = MapKind::kComplex;
  sample.trace = recover_trace(*cache_ptr, quasilinear_flux_moments(*cache_ptr, model, probe, v.values));
  sample.anchor_value = sample.trace(mesh.anchor_loop_index());
  sample.mesh_level = mesh.refinement_level;
  return sample;
}

DNSample dn_linearized_with(const DiscreteOperator& op, const ProbePoint& probe, const BoundaryDatum& h) {
  const Mesh& mesh = op.mesh();
  const Eigen::VectorXcd h_b = h.trace(mesh);
  const Eigen::VectorXcd field = op.solve(h_b);
  DNSample sample;
  sample.probe = probe;
  sample.datum_id = h.id;
  sample.datum_kind = h.kind_name();
  sample.datum_params = h.params();
  sample.kind = MapKind::kLinearized;
  sample.trace = recover_trace(op.cache(), op.flux_moments(field));
  sample.anchor_value = sample.trace(mesh.anchor_loop_index());
  sample.mesh_level = mesh.refinement_level;
  return sample;
}

DNSample dn_linearized(const Mesh& mesh, const ConductivityModel& model, const ProbePoint& probe,
                       const BoundaryDatum& h, const SolverOptions& opts) {
  auto [coeffs, op] = assemble_linearized(mesh, model, probe, opts);
  (void)coeffs;
  return dn_linearized_with(op, probe, h);
}

std::pair<DNSample, GateauxTable> gateaux_fd(const Mesh& mesh, const ConductivityModel& model,
                                             const ProbePoint& probe, const BoundaryDatum& h,
                                             const std::vector<double>& steps, const SolverOptions& opts) {
  if (steps.empty()) throw ValidationError("gateaux_fd: empty step list");
  for (double t : steps)
    if (!(t > 0.0)) throw ValidationError("gateaux_fd: steps must be positive, got " + std::to_string(t));
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (!(steps[i] < steps[i - 1])) throw ValidationError("gateaux_fd: steps must be strictly decreasing");

  const double hmax = max_abs(h.trace(mesh));
  if (steps.front() * hmax > opts.datum_budget)
    throw ValidationError("gateaux_fd: t*|h| = " + std::to_string(steps.front() * hmax) +
                          " violates the smallness budget " + std::to_string(opts.datum_budget));

  auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));
  auto [coeffs, op] = assemble_linearized(cache, model, probe, opts);
  (void)coeffs;
  const DNSample lin = dn_linearized_with(op, probe, h);
  const DNSample zero = dn_complex(mesh, model, probe, BoundaryDatum::constant(0.0), opts, nullptr, &op);

  GateauxTable table;
  table.steps = steps;
  std::vector<Eigen::VectorXcd> quotients;
  for (double t : steps) {
    const DNSample st = dn_complex(mesh, model, probe, h.scaled(t), opts, nullptr, &op);
    quotients.push_back((st.trace - zero.trace) / t);
    table.gaps.push_back(max_abs(quotients.back() - lin.trace));
  }
  for (std::size_t i = 1; i < table.gaps.size(); ++i)
    table.gap_ratios.push_back(table.gaps[i] / std::max(table.gaps[i - 1], 1e-300));

  if (quotients.size() >= 2) {
    const double t1 = steps[steps.size() - 2], t2 = steps.back();
    table.richardson_trace = (t1 * quotients.back() - t2 * quotients[quotients.size() - 2]) / (t1 - t2);
  } else {
    table.richardson_trace = quotients.back();
  }
  table.richardson_gap = max_abs(table.richardson_trace - lin.trace);

  DNSample sample;
  sample.probe = probe;
  sample.datum_id = h.id;
  sample.datum_kind = h.kind_name();
  sample.datum_params = h.params();
  sample.kind = MapKind::kGateauxFd;
  sample.trace = quotients.back();
  sample.anchor_value = sample.trace(mesh.anchor_loop_index());
  sample.mesh_level = mesh.refinement_level;
  sample.provenance = {true, steps.back()};
  return {sample, table};
}

double consistency_real_complex(const Mesh& mesh, const ConductivityModel& model, double s,
                                const BoundaryDatum& h, const SolverOptions& opts) {
  const Eigen::VectorXcd tr = h.trace(mesh);
  for (int i = 0; i < tr.size(); ++i)
    if (std::abs(tr(i).imag()) > 0.0) throw ValidationError("consistency_real_complex: datum must be real");

  auto hc = h.closure();
  const BoundaryDatum shifted =
      BoundaryDatum::custom("shift_" + h.id, [hc, s](const Vec2& x) { return s + hc(x); });
  SolverOptions real_opts = opts;
  real_opts.real_datum_budget = std::max(opts.real_datum_budget, std::abs(s) + opts.datum_budget + 1.0);
  const DNSample real_sample = dn_real(mesh, model, shifted, real_opts);

  const ProbePoint probe = ProbePoint::make(s, Vec2c::Zero(), mesh);
  const DNSample complex_sample = dn_complex(mesh, model, probe, h, opts);

  return max_abs(real_sample.trace - complex_sample.trace);
}

void write_sample(std::ostream& os, const DNSample& sample) {
  os << "dn " << map_kind_name(sample.kind) << " " << sample.mesh_level << " " << fmt17(sample.probe.s) << " "
     << fmt17(sample.probe.p(0).real()) << " " << fmt17(sample.probe.p(0).imag()) << " "
     << fmt17(sample.probe.p(1).real()) << " " << fmt17(sample.probe.p(1).imag()) << " " << sample.datum_id << " "
     << sample.datum_kind;
  for (double v : sample.datum_params) os << " " << fmt17(v);
  os << " " << (sample.provenance.finite_difference ? "fd" : "direct") << " " << fmt17(sample.provenance.fd_step)
     << " " << fmt17(sample.anchor_value.real()) << " " << fmt17(sample.anchor_value.imag()) << " "
     << sample.trace.size();
  for (int i = 0; i < sample.trace.size(); ++i)
    os << " " << fmt17(sample.trace(i).real()) << " " << fmt17(sample.trace(i).imag());
  os << "\n";
}

std::vector<DNSample> read_samples(std::istream& is) {
  std::vector<DNSample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, kind, datum_id, datum_kind, prov;
    ls >> tag;
    if (tag != "dn") throw ValidationError("read_samples: unexpected record tag '" + tag + "'");
    DNSample s;
    int level = 0;
    double sv = 0, p0r = 0, p0i = 0, p1r = 0, p1i = 0;
    ls >> kind >> level >> sv >> p0r >> p0i >> p1r >> p1i >> datum_id >> datum_kind;
    for (double& v : s.datum_params) ls >> v;
    double step = 0, ar = 0, ai = 0;
    int nb = 0;
    ls >> prov >> step >> ar >> ai >> nb;
    if (!ls) throw ValidationError("read_samples: truncated record");
    s.kind = map_kind_from_name(kind);
    s.mesh_level = level;
    s.probe.s = sv;
    s.probe.p = Vec2c(cplx(p0r, p0i), cplx(p1r, p1i));
    s.probe.isotropy_defect = std::abs(bdot(s.probe.p, s.probe.p));
    s.probe.magnitude = std::sqrt(std::norm(s.probe.p(0)) + std::norm(s.probe.p(1)));
    s.datum_id = datum_id;
    s.datum_kind = datum_kind;
    s.provenance = {prov == "fd", step};
    s.anchor_value = cplx(ar, ai);
    s.trace.resize(nb);
    for (int i = 0; i < nb; ++i) {
      double re = 0, im = 0;
      ls >> re >> im;
      s.trace(i) = cplx(re, im);
    }
    if (!ls) throw ValidationError("read_samples: truncated trace");
    out.push_back(std::move(s));
  }
  return out;
}

std::string sample_key(double s, const Vec2c& p, const std::string& datum_kind,
                       const std::array<double, 4>& params) {
  std::string key = fmt17(s);
  key += "|" + fmt17(p(0).real()) + "," + fmt17(p(0).imag()) + "," + fmt17(p(1).real()) + "," + fmt17(p(1).imag());
  key += "|" + datum_kind;
  for (double v : params) key += "," + fmt17(v);
  return key;
}

std::string sample_key(const ProbePoint& probe, const BoundaryDatum& datum) {
  return sample_key(probe.s, probe.p, datum.kind_name(), datum.params());
}

} // namespace qcond
