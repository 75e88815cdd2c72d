#include "qcond/conductivity.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

std::string point_string(cplx s, const Vec2c& p) {
  std::ostringstream os;
  os.precision(12);
  os << "s=(" << s.real() << "," << s.imag() << ") p=((" << p(0).real() << "," << p(0).imag() << "),("
     << p(1).real() << "," << p(1).imag() << "))";
  return os.str();
}

double get_param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

} // namespace

void HypothesisConstants::validate() const {
  if (!(r0 > 0.0)) throw ValidationError("constants: r0 must be positive");
  if (!(R0 > 0.0)) throw ValidationError("constants: R0 must be positive");
  if (!(lambda_tilde > 0.0) || !(lambda_tilde <= Lambda))
    throw ValidationError("constants: need 0 < lambda_tilde <= Lambda");
  if (!std::isfinite(Lambda)) throw ValidationError("constants: Lambda must be finite");
  if (!(beta > 1.0)) throw ValidationError("constants: beta must exceed 1");
  if (a1 < 0.0 || a2 < 0.0) throw ValidationError("constants: a1, a2 must be nonnegative");
}

ModelEval ConductivityModel::evaluate(cplx s, const Vec2c& p) const {
  if (disabled_) throw IsolationError("model '" + name_ + "' evaluated while disabled (data-only run)");

  const double pnorm = std::sqrt(std::norm(p(0)) + std::norm(p(1)));
  const double p_imag = std::hypot(p(0).imag(), p(1).imag());
  if (std::abs(s.imag()) > constants_.R0 * (1.0 + region_slack_) + 1e-12)
    throw DomainEvalError("model '" + name_ + "' evaluated outside its analyticity band at " + point_string(s, p));
  // The complex ball |p| < r0 constrains genuinely complex arguments; on real
  // p the families are globally defined.
  if (p_imag > 1e-14 * std::max(1.0, pnorm) && pnorm > constants_.r0 * (1.0 + region_slack_))
    throw DomainEvalError("model '" + name_ + "' evaluated outside its analyticity region at " + point_string(s, p));

  ModelEval out;
  switch (family_) {
    case ModelFamily::kConstant: {
      out.a = cplx(params_.at("a0"), 0.0);
      out.ds_a = 0.0;
      out.dp_a = Vec2c::Zero();
      break;
    }
    case ModelFamily::kMinimalSurface: {
      const double f0 = params_.at("f0");
      const double f1 = params_.at("f1");
      const cplx e = f1 == 0.0 ? cplx(0.0, 0.0) : std::exp(-s * s);
      const cplx f = f0 + f1 * e;
      const cplx fp = -2.0 * s * f1 * e;
      const cplx w = 1.0 + bdot(p, p);          // stays near 1 for |p| <= r0
      if (std::abs(w) < 0.25)
        throw DomainEvalError("minimal_surface model: 1 + p.p too close to the branch cut at " + point_string(s, p));
      const cplx rw = std::sqrt(w);             // principal branch
      out.a = f / rw;
      out.ds_a = fp / rw;
      out.dp_a = -(f / (rw * w)) * p;           // -f (1+p.p)^{-3/2} p
      break;
    }
    case ModelFamily::kBandAnalytic: {
      const double cb = params_.at("c_base");
      const cplx e = std::exp(-s * s);
      out.a = cb + e + bdot(p, Vec2c(q0_(0), q0_(1)));
      out.ds_a = -2.0 * s * e;
      out.dp_a = Vec2c(cplx(q0_(0), 0.0), cplx(q0_(1), 0.0));
      break;
    }
    case ModelFamily::kCustom:
      out = custom_(s, p);
      break;
  }
  return out;
}

ConductivityModel ConductivityModel::disabled_copy() const {
  ConductivityModel copy = *this;
  copy.disabled_ = true;
  return copy;
}

ConductivityModel ConductivityModel::with_constants(const HypothesisConstants& constants) const {
  constants.validate();
  ConductivityModel copy = *this;
  copy.constants_ = constants;
  return copy;
}

ConductivityModel ConductivityModel::custom(const std::string& name, CustomEval eval, HypothesisConstants constants) {
  constants.validate();
  ConductivityModel m;
  m.name_ = name;
  m.family_ = ModelFamily::kCustom;
  m.custom_ = std::move(eval);
  m.constants_ = constants;
  return m;
}

ConductivityModel builtin_model(const std::string& name, const std::map<std::string, double>& params) {
  ConductivityModel m;
  m.name_ = name;
  m.params_ = params;

  HypothesisConstants c; // defaults r0 = 0.1, R0 = 0.5
  const double band = std::exp(c.R0 * c.R0);

  if (name == "constant") {
    const double a0 = get_param(params, "a0", 1.0);
    if (!(a0 > 0.0)) throw ValidationError("constant model: a0 must be positive");
    m.family_ = ModelFamily::kConstant;
    m.params_ = {{"a0", a0}};
    c.lambda_tilde = a0;
    c.Lambda = a0;
    c.lambda0_floor = a0;
    c.mu0_cap = a0;
    m.ds_a_sup_ = 0.0;
  } else if (name == "minimal_surface") {
    const double f0 = get_param(params, "f0", 2.0);
    const double f1 = get_param(params, "f1", 0.0);
    if (!(f0 > 0.0) || f1 < 0.0) throw ValidationError("minimal_surface model: need f0 > 0 and f1 >= 0");
    // Re f on the band dips to f0 - f1 * max|Im exp|; keep it above 2*lambda_tilde.
    if (f0 - 0.3 * f1 < 2.0 * c.lambda_tilde)
      throw ValidationError("minimal_surface model: f0 too small for the default analyticity band");
    m.family_ = ModelFamily::kMinimalSurface;
    m.params_ = {{"f0", f0}, {"f1", f1}};
    const double fmax = (f0 + f1 * band) * 1.02;
    c.Lambda = fmax * (1.0 + 1.1 * c.r0) + 1.0;
    c.lambda0_floor = 0.9 * f0;
    c.mu0_cap = c.Lambda;
    m.ds_a_sup_ = 1.1 * f1 * band + 0.1;
  } else if (name == "band_analytic") {
    const double cb = get_param(params, "c_base", 2.0);
    const Vec2 q0(get_param(params, "q0x", 0.0), get_param(params, "q0y", 0.0));
    if (cb < 2.0)
      throw ValidationError("band_analytic model: c_base must be at least 2 for the default band R0 = 0.5");
    m.family_ = ModelFamily::kBandAnalytic;
    m.params_ = {{"c_base", cb}, {"q0x", q0(0)}, {"q0y", q0(1)}};
    m.q0_ = q0;
    c.Lambda = cb + band + (c.r0 + 1.0) * q0.norm() + 1.0;
    c.lambda0_floor = cb - c.r0 * q0.norm();
    c.mu0_cap = c.Lambda;
    m.ds_a_sup_ = 1.1 * band + 0.1;
  } else {
    throw ValidationError("builtin_model: unknown family '" + name + "'");
  }

  c.validate();
  m.constants_ = c;
  return m;
}

const HypothesisCondition* HypothesisReport::find(const std::string& id) const {
  for (const auto& cond : conditions)
    if (cond.id == id) return &cond;
  return nullptr;
}

HypothesisReport verify_hypotheses(const ConductivityModel& model, const SamplingSpec& spec) {
  const auto& c = model.constants();
  if (spec.s_re_count < 2 || spec.s_im_count < 2 || spec.p_direction_count < 1 || spec.p_radius_count < 1)
    throw ValidationError("verify_hypotheses: sampling spec too coarse");

  HypothesisCondition s1{"S1_positivity", true, 1e300, 0.0, Vec2c::Zero()};
  HypothesisCondition s3{"S3_coercivity", true, 1e300, 0.0, Vec2c::Zero()};
  HypothesisCondition h2{"H2_realness", true, 1e300, 0.0, Vec2c::Zero()};
  HypothesisCondition h3lo{"H3_ellipticity", true, 1e300, 0.0, Vec2c::Zero()};
  HypothesisCondition h3up{"H3_bound", true, 1e300, 0.0, Vec2c::Zero()};

  auto track = [](HypothesisCondition& cond, double margin, cplx s, const Vec2c& p) {
    if (margin < cond.margin) {
      cond.margin = margin;
      cond.worst_s = s;
      cond.worst_p = p;
    }
  };

  const double realness_tol = 1e-13;

  for (int is = 0; is < spec.s_re_count; ++is) {
    const double sr = spec.s_re_min + (spec.s_re_max - spec.s_re_min) * is / (spec.s_re_count - 1);

    // real-argument conditions: p real, |p| <= r0
    for (int ir = 0; ir < spec.p_radius_count; ++ir) {
      const double r = c.r0 * (ir + 1) / spec.p_radius_count;
      for (int id = 0; id < spec.p_direction_count; ++id) {
        const double ang = 2.0 * M_PI * id / spec.p_direction_count;
        const Vec2c p(cplx(r * std::cos(ang), 0.0), cplx(r * std::sin(ang), 0.0));
        const ModelEval ev = model.evaluate(cplx(sr, 0.0), p);
        track(s1, ev.a.real(), sr, p);
        const double coercive = ev.a.real() * r * r -
                                (std::pow(r, c.beta) - std::pow(std::abs(c.a1 * sr), c.beta) - std::pow(c.a2, c.beta));
        track(s3, coercive, sr, p);
        const double imag_mag = std::abs(ev.a.imag()) + std::abs(ev.ds_a.imag()) +
                                std::abs(ev.dp_a(0).imag()) + std::abs(ev.dp_a(1).imag());
        track(h2, realness_tol - imag_mag, sr, p);
      }
    }

    // complex-region conditions (H3): s in the band, p in the complex ball
    for (int ii = 0; ii < spec.s_im_count; ++ii) {
      const double si = -c.R0 + 2.0 * c.R0 * ii / (spec.s_im_count - 1);
      const cplx s(sr, si);
      for (int ir = 0; ir < spec.p_radius_count; ++ir) {
        const double r = c.r0 * (ir + 1) / spec.p_radius_count;
        for (int id = 0; id < spec.p_direction_count; ++id) {
          // 8 spatial angles x 8 phase pairs
          const double ang = 2.0 * M_PI * (id % 8) / 8.0;
          const int ph = id / 8;
          const cplx e1 = std::polar(1.0, M_PI * ph / 8.0);
          const cplx e2 = std::polar(1.0, M_PI * ((ph * 3) % 8) / 8.0);
          const Vec2c p(r * std::cos(ang) * e1, r * std::sin(ang) * e2);
          const ModelEval ev = model.evaluate(s, p);
          track(h3lo, ev.a.real() - c.lambda_tilde, s, p);
          const double mag = std::abs(ev.a) + std::sqrt(std::norm(ev.dp_a(0)) + std::norm(ev.dp_a(1)));
          track(h3up, c.Lambda - mag, s, p);
        }
      }
    }
  }

  HypothesisReport report;
  for (auto* cond : {&s1, &s3, &h2, &h3lo, &h3up}) {
    cond->pass = cond->margin >= -1e-12;
    report.conditions.push_back(*cond);
  }
  report.all_pass = true;
  for (const auto& cond : report.conditions) report.all_pass = report.all_pass && cond.pass;
  return report;
}

void write_hypothesis_report(std::ostream& os, const HypothesisReport& report) {
  os.precision(17);
  os << "qcond-hypothesis-report 1\n";
  for (const auto& cond : report.conditions) {
    os << cond.id << " " << (cond.pass ? "pass" : "fail") << " margin " << cond.margin << " worst_s "
       << cond.worst_s.real() << " " << cond.worst_s.imag() << " worst_p " << cond.worst_p(0).real() << " "
       << cond.worst_p(0).imag() << " " << cond.worst_p(1).real() << " " << cond.worst_p(1).imag() << "\n";
  }
  os << "overall " << (report.all_pass ? "pass" : "fail") << "\n";
}

} // namespace qcond
