#ifndef QCOND_CONFIG_HPP
#define QCOND_CONFIG_HPP

#include <array>
#include <map>
#include <string>
#include <vector>

#include "qcond/numerics.hpp"

namespace qcond {

// One boundary-datum request in a forward run.
struct DatumSpec {
  std::string kind = "constant";  // constant | linear_probe | harmonic
  cplx value = cplx(1.0, 0.0);    // constant value
  int harmonic_k = 2;
  double amplitude = 0.03;
  double phase = 0.0;
  std::string map = "complex";    // complex (per probe) | real (single real solve)
};

// Single structured config file driving every run; every paper-facing
// constant lives here rather than in code.
struct ExperimentConfig {
  // domain
  double radius = 1.0;
  int refinement_level = 4;

  // model
  std::string model_family = "band_analytic";
  std::map<std::string, double> model_parameters = {{"c_base", 2.0}, {"q0x", 0.3}, {"q0y", 0.1}};
  std::map<std::string, double> constant_overrides;  // r0, R0, lambda_tilde, ...

  // probes
  std::vector<double> probe_magnitudes = {0.02, 0.05};
  int probe_count_angles = 4;
  double transversality_cutoff = 0.1;

  // solver
  double solver_tolerance = 1e-12;
  int max_newton = 25;
  int damping_limit = 6;
  double datum_budget = 0.05;
  double real_datum_budget = 2.0;
  int direct_threshold = 150000;

  // linearization
  std::vector<double> fd_steps = {0.04, 0.02, 0.01, 0.005};

  // reconstruction
  std::vector<double> s_grid = {-1.0, -0.5, 0.0, 0.5, 1.0};
  int simpson_refine = 4;
  int eta_table_nodes = 9;
  int gl_nodes = 16;
  std::array<double, 2> theta = {0.01, 0.005};
  cplx c0 = cplx(1.0, 0.0);
  std::string provider_mode = "end_to_end";  // direct | end_to_end | measured
  std::array<double, 2> s_ref = {0.0, 0.5};
  bool check_s_independence = true;
  std::array<double, 2> provider_fd_steps = {0.01, 0.005};
  double max_rel_error_tolerance = 0.02;

  // hypothesis verification sampling
  std::array<double, 2> verify_s_range = {-2.0, 2.0};
  int verify_s_re_count = 41;
  int verify_s_im_count = 21;
  int verify_p_directions = 64;
  int verify_p_radii = 4;

  // forward data
  std::vector<DatumSpec> data = {DatumSpec{}};

  // output
  std::string output_directory = "out";
  bool write_fields = false;
  double noise_sigma = 0.0;
  unsigned noise_seed = 1;

  // parallelism
  int workers = 1;

  void validate() const;  // throws ValidationError naming every bad field
};

std::string serialize_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

} // namespace qcond

#endif
