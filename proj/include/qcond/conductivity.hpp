#ifndef QCOND_CONDUCTIVITY_HPP
#define QCOND_CONDUCTIVITY_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qcond/numerics.hpp"

namespace qcond {

// Constants attached to a conductivity: analyticity band half-width R0, probe
// radius r0, complex ellipticity floor/ceiling, and the growth-condition
// parameters used by the real solvability checks.
struct HypothesisConstants {
  double r0 = 0.1;
  double R0 = 0.5;
  double lambda_tilde = 0.5;
  double Lambda = 4.0;
  double beta = 2.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double lambda0_floor = 0.5;
  double mu0_cap = 4.0;

  void validate() const;
};

struct ModelEval {
  cplx a;
  cplx ds_a;
  Vec2c dp_a;
};

enum class ModelFamily { kConstant, kMinimalSurface, kBandAnalytic, kCustom };

// Spatially homogeneous conductivity a(s,p) with analytic first derivatives,
// evaluated at complex scalar s and complex 2-vector p. Immutable, reentrant.
class ConductivityModel {
public:
  using CustomEval = std::function<ModelEval(cplx, const Vec2c&)>;

  ModelEval evaluate(cplx s, const Vec2c& p) const;

  const std::string& name() const { return name_; }
  ModelFamily family() const { return family_; }
  const HypothesisConstants& constants() const { return constants_; }
  const std::map<std::string, double>& parameters() const { return params_; }
  Vec2 q0() const { return q0_; }

  // Bound on |ds_a| over the analyticity region; used by coefficient checks.
  double ds_a_sup() const { return ds_a_sup_; }

  bool disabled() const { return disabled_; }
  // Copy whose evaluator throws IsolationError; used by data-only runs.
  ConductivityModel disabled_copy() const;
  // Copy with replaced hypothesis constants (config overrides).
  ConductivityModel with_constants(const HypothesisConstants& constants) const;

  // Diagnostic constructor for models outside the builtin families.
  static ConductivityModel custom(const std::string& name, CustomEval eval, HypothesisConstants constants);

  friend ConductivityModel builtin_model(const std::string& name, const std::map<std::string, double>& params);

private:
  ConductivityModel() = default;

  std::string name_;
  ModelFamily family_ = ModelFamily::kCustom;
  std::map<std::string, double> params_;
  Vec2 q0_ = Vec2::Zero();
  HypothesisConstants constants_;
  CustomEval custom_;
  double ds_a_sup_ = 1.0;
  double region_slack_ = 0.05;  // relative grace on the declared region
  bool disabled_ = false;
};

// Builtin families:
//   constant         a = a0                                params: a0
//   minimal_surface  a = f(s) / sqrt(1 + p.p),             params: f0, f1
//                    f(s) = f0 + f1 * exp(-s^2), principal square root
//   band_analytic    a = c_base + exp(-s^2) + p.q0         params: c_base, q0x, q0y
ConductivityModel builtin_model(const std::string& name, const std::map<std::string, double>& params);

struct SamplingSpec {
  double s_re_min = -2.0;
  double s_re_max = 2.0;
  int s_re_count = 41;
  int s_im_count = 21;       // spans [-R0, R0]
  int p_direction_count = 64;
  int p_radius_count = 4;    // radii up to r0
};

struct HypothesisCondition {
  std::string id;
  bool pass = false;
  double margin = 0.0;  // >= 0 means satisfied
  cplx worst_s;
  Vec2c worst_p;
};

struct HypothesisReport {
  std::vector<HypothesisCondition> conditions;
  bool all_pass = false;
  const HypothesisCondition* find(const std::string& id) const;
};

// Samples (S1), (S3), (H2) on real arguments and (H3) on the complex region;
// reports the worst margin and the violating sample point per condition.
HypothesisReport verify_hypotheses(const ConductivityModel& model, const SamplingSpec& spec = {});

void write_hypothesis_report(std::ostream& os, const HypothesisReport& report);

} // namespace qcond

#endif
