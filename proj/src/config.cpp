#include "qcond/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qcond/errors.hpp"

namespace qcond {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json complex_to_json(cplx v) { return ordered_json::array({v.real(), v.imag()}); }

cplx complex_from_json(const ordered_json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("config field '" + field + "' must be [re, im]");
  return cplx(j[0].get<double>(), j[1].get<double>());
}

template <class T>
void get_if(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void ExperimentConfig::validate() const {
  std::vector<std::string> issues;
  auto require = [&issues](bool ok, const std::string& msg) {
    if (!ok) issues.push_back(msg);
  };

  require(radius > 0.0, "domain.radius must be positive");
  require(refinement_level >= 0 && refinement_level <= 8, "domain.refinement_level must be in [0, 8]");
  require(model_family == "constant" || model_family == "minimal_surface" || model_family == "band_analytic" ||
              model_family == "affine_s",
          "model.family must be one of constant, minimal_surface, band_analytic, affine_s");
  require(!probe_magnitudes.empty(), "probes.magnitudes must be nonempty");
  for (double m : probe_magnitudes) require(m > 0.0, "probes.magnitudes entries must be positive");
  require(probe_count_angles >= 1, "probes.count_angles must be at least 1");
  require(transversality_cutoff >= 0.0 && transversality_cutoff < 1.0,
          "probes.transversality_cutoff must be in [0, 1)");
  require(solver_tolerance > 0.0 && solver_tolerance < 1.0, "solver.tolerance must be in (0, 1)");
  require(max_newton >= 1, "solver.max_newton must be at least 1");
  require(damping_limit >= 0, "solver.damping_limit must be nonnegative");
  require(datum_budget > 0.0, "solver.datum_budget must be positive");
  require(real_datum_budget > 0.0, "solver.real_datum_budget must be positive");
  require(direct_threshold > 0, "solver.direct_threshold must be positive");
  require(!fd_steps.empty(), "linearization.fd_steps must be nonempty");
  for (std::size_t i = 0; i < fd_steps.size(); ++i) {
    require(fd_steps[i] > 0.0, "linearization.fd_steps entries must be positive");
    if (i > 0) require(fd_steps[i] < fd_steps[i - 1], "linearization.fd_steps must be strictly decreasing");
  }
  require(!s_grid.empty(), "reconstruction.s_grid must be nonempty");
  for (std::size_t i = 1; i < s_grid.size(); ++i)
    require(s_grid[i] > s_grid[i - 1], "reconstruction.s_grid must be strictly ascending");
  require(std::find(s_grid.begin(), s_grid.end(), 0.0) != s_grid.end(), "reconstruction.s_grid must contain 0");
  require(simpson_refine >= 1, "reconstruction.simpson_refine must be at least 1");
  require(eta_table_nodes >= 4, "reconstruction.eta_nodes must be at least 4");
  require(gl_nodes >= 2, "reconstruction.gl_nodes must be at least 2");
  require(theta[0] > 0.0 && theta[1] > 0.0 && theta[0] < 1.0 && theta[1] < 1.0 && theta[0] != theta[1],
          "reconstruction.theta must be two distinct values in (0, 1)");
  require(c0 != cplx(0.0, 0.0), "reconstruction.c0 must be nonzero");
  require(provider_mode == "direct" || provider_mode == "end_to_end" || provider_mode == "measured",
          "reconstruction.provider must be direct, end_to_end, or measured");
  require(provider_fd_steps[0] > provider_fd_steps[1] && provider_fd_steps[1] > 0.0,
          "reconstruction.provider_fd_steps must be decreasing positive");
  require(max_rel_error_tolerance > 0.0, "reconstruction.max_rel_error_tolerance must be positive");
  require(verify_s_range[1] > verify_s_range[0], "verify.s_range must be increasing");
  require(verify_s_re_count >= 2 && verify_s_im_count >= 2, "verify sample counts must be at least 2");
  require(verify_p_directions >= 1 && verify_p_radii >= 1, "verify p sampling must be positive");
  for (const auto& d : data)
    require(d.kind == "constant" || d.kind == "linear_probe" || d.kind == "harmonic",
            "data.kind must be constant, linear_probe, or harmonic");
  for (const auto& d : data)
    require(d.map == "complex" || d.map == "real", "data.map must be complex or real");
  require(!output_directory.empty(), "output.directory must be nonempty");
  require(noise_sigma >= 0.0, "output.noise_sigma must be nonnegative");
  require(workers >= 1, "parallelism.workers must be at least 1");

  if (!issues.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& s : issues) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
}

std::string serialize_config(const ExperimentConfig& c) {
  ordered_json j;
  j["domain"] = {{"radius", c.radius}, {"refinement_level", c.refinement_level}};
  j["model"] = {{"family", c.model_family},
                {"parameters", c.model_parameters},
                {"constants", c.constant_overrides}};
  j["probes"] = {{"magnitudes", c.probe_magnitudes},
                 {"count_angles", c.probe_count_angles},
                 {"transversality_cutoff", c.transversality_cutoff}};
  j["solver"] = {{"tolerance", c.solver_tolerance},
                 {"max_newton", c.max_newton},
                 {"damping_limit", c.damping_limit},
                 {"datum_budget", c.datum_budget},
                 {"real_datum_budget", c.real_datum_budget},
                 {"direct_threshold", c.direct_threshold}};
  j["linearization"] = {{"fd_steps", c.fd_steps}};
  j["reconstruction"] = {{"s_grid", c.s_grid},
                         {"simpson_refine", c.simpson_refine},
                         {"eta_nodes", c.eta_table_nodes},
                         {"gl_nodes", c.gl_nodes},
                         {"theta", c.theta},
                         {"c0", complex_to_json(c.c0)},
                         {"provider", c.provider_mode},
                         {"s_ref", c.s_ref},
                         {"check_s_independence", c.check_s_independence},
                         {"provider_fd_steps", c.provider_fd_steps},
                         {"max_rel_error_tolerance", c.max_rel_error_tolerance}};
  j["verify"] = {{"s_range", c.verify_s_range},
                 {"s_re_count", c.verify_s_re_count},
                 {"s_im_count", c.verify_s_im_count},
                 {"p_directions", c.verify_p_directions},
                 {"p_radii", c.verify_p_radii}};
  j["data"] = ordered_json::array();
  for (const auto& d : c.data) {
    ordered_json dj = {{"kind", d.kind}, {"map", d.map}};
    if (d.kind == "constant") dj["value"] = complex_to_json(d.value);
    if (d.kind == "harmonic") {
      dj["k"] = d.harmonic_k;
      dj["amplitude"] = d.amplitude;
      dj["phase"] = d.phase;
    }
    j["data"].push_back(dj);
  }
  j["output"] = {{"directory", c.output_directory},
                 {"write_fields", c.write_fields},
                 {"noise_sigma", c.noise_sigma},
                 {"noise_seed", c.noise_seed}};
  j["parallelism"] = {{"workers", c.workers}};
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }

  static const std::vector<std::string> known = {"domain",         "model",  "probes", "solver", "linearization",
                                                 "reconstruction", "verify", "data",   "output", "parallelism"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ValidationError("config: unknown section '" + it.key() + "'");

  ExperimentConfig c;
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    get_if(d, "radius", c.radius);
    get_if(d, "refinement_level", c.refinement_level);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    get_if(m, "family", c.model_family);
    if (m.contains("parameters")) c.model_parameters = m["parameters"].get<std::map<std::string, double>>();
    if (m.contains("constants")) c.constant_overrides = m["constants"].get<std::map<std::string, double>>();
  }
  if (j.contains("probes")) {
    const auto& p = j["probes"];
    get_if(p, "magnitudes", c.probe_magnitudes);
    get_if(p, "count_angles", c.probe_count_angles);
    get_if(p, "transversality_cutoff", c.transversality_cutoff);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    get_if(s, "tolerance", c.solver_tolerance);
    get_if(s, "max_newton", c.max_newton);
    get_if(s, "damping_limit", c.damping_limit);
    get_if(s, "datum_budget", c.datum_budget);
    get_if(s, "real_datum_budget", c.real_datum_budget);
    get_if(s, "direct_threshold", c.direct_threshold);
  }
  if (j.contains("linearization")) get_if(j["linearization"], "fd_steps", c.fd_steps);
  if (j.contains("reconstruction")) {
    const auto& r = j["reconstruction"];
    get_if(r, "s_grid", c.s_grid);
    get_if(r, "simpson_refine", c.simpson_refine);
    get_if(r, "eta_nodes", c.eta_table_nodes);
    get_if(r, "gl_nodes", c.gl_nodes);
    get_if(r, "theta", c.theta);
    if (r.contains("c0")) c.c0 = complex_from_json(r["c0"], "reconstruction.c0");
    get_if(r, "provider", c.provider_mode);
    get_if(r, "s_ref", c.s_ref);
    get_if(r, "check_s_independence", c.check_s_independence);
    get_if(r, "provider_fd_steps", c.provider_fd_steps);
    get_if(r, "max_rel_error_tolerance", c.max_rel_error_tolerance);
  }
  if (j.contains("verify")) {
    const auto& v = j["verify"];
    get_if(v, "s_range", c.verify_s_range);
    get_if(v, "s_re_count", c.verify_s_re_count);
    get_if(v, "s_im_count", c.verify_s_im_count);
    get_if(v, "p_directions", c.verify_p_directions);
    get_if(v, "p_radii", c.verify_p_radii);
  }
  if (j.contains("data")) {
    c.data.clear();
    for (const auto& dj : j["data"]) {
      DatumSpec d;
      get_if(dj, "kind", d.kind);
      get_if(dj, "map", d.map);
      if (dj.contains("value")) d.value = complex_from_json(dj["value"], "data.value");
      get_if(dj, "k", d.harmonic_k);
      get_if(dj, "amplitude", d.amplitude);
      get_if(dj, "phase", d.phase);
      c.data.push_back(d);
    }
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    get_if(o, "directory", c.output_directory);
    get_if(o, "write_fields", c.write_fields);
    get_if(o, "noise_sigma", c.noise_sigma);
    get_if(o, "noise_seed", c.noise_seed);
  }
  if (j.contains("parallelism")) get_if(j["parallelism"], "workers", c.workers);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write config file '" + path + "'");
  os << serialize_config(config);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

} // namespace qcond
