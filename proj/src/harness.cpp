#include "qcond/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "qcond/errors.hpp"

namespace qcond {

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

template <class Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitConfigFailure;
  } catch (const ResourceLimitError& e) {
    std::cerr << "resource limit: " << e.what() << "\n";
    return kExitConfigFailure;
  } catch (const Error& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitSolverFailure;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitSolverFailure;
  }
}

std::string fmtg(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void apply_noise(std::vector<DNSample>& samples, double sigma, unsigned seed) {
  if (sigma <= 0.0) return;
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& s : samples) {
    for (int i = 0; i < s.trace.size(); ++i) s.trace(i) += cplx(gauss(rng), gauss(rng));
    s.anchor_value = s.trace.size() > 0 ? s.anchor_value + cplx(gauss(rng), gauss(rng)) : s.anchor_value;
  }
}

} // namespace

ConductivityModel make_model(const ExperimentConfig& config) {
  ConductivityModel model = [&]() -> ConductivityModel {
    if (config.model_family == "affine_s") {
      // diagnostic family a = a0 + a1 s; deliberately violates (S1)/(H3)
      // whenever a1 != 0
      const double a0 = config.model_parameters.count("a0") ? config.model_parameters.at("a0") : 1.0;
      const double a1 = config.model_parameters.count("a1") ? config.model_parameters.at("a1") : 1.0;
      HypothesisConstants hc;
      return ConductivityModel::custom("affine_s", [a0, a1](cplx s, const Vec2c&) {
        ModelEval ev;
        ev.a = a0 + a1 * s;
        ev.ds_a = a1;
        ev.dp_a = Vec2c::Zero();
        return ev;
      }, hc);
    }
    return builtin_model(config.model_family, config.model_parameters);
  }();

  if (!config.constant_overrides.empty()) {
    HypothesisConstants hc = model.constants();
    for (const auto& [key, value] : config.constant_overrides) {
      if (key == "r0") hc.r0 = value;
      else if (key == "R0") hc.R0 = value;
      else if (key == "lambda_tilde") hc.lambda_tilde = value;
      else if (key == "Lambda") hc.Lambda = value;
      else if (key == "beta") hc.beta = value;
      else if (key == "a1") hc.a1 = value;
      else if (key == "a2") hc.a2 = value;
      else if (key == "lambda0_floor") hc.lambda0_floor = value;
      else if (key == "mu0_cap") hc.mu0_cap = value;
      else throw ValidationError("model.constants: unknown constant '" + key + "'");
    }
    model = model.with_constants(hc);
  }
  return model;
}

SolverOptions make_solver_options(const ExperimentConfig& config) {
  SolverOptions opts;
  opts.tolerance = config.solver_tolerance;
  opts.max_newton = config.max_newton;
  opts.damping_limit = config.damping_limit;
  opts.datum_budget = config.datum_budget;
  opts.real_datum_budget = config.real_datum_budget;
  opts.direct_threshold = config.direct_threshold;
  return opts;
}

ReconstructionConfig make_recon_config(const ExperimentConfig& config) {
  ReconstructionConfig rc;
  rc.s_grid = config.s_grid;
  rc.simpson_refine = config.simpson_refine;
  rc.transversality_cutoff = config.transversality_cutoff;
  rc.eta_table_nodes = config.eta_table_nodes;
  rc.gl_nodes = config.gl_nodes;
  rc.theta = config.theta;
  rc.c0 = config.c0;
  rc.s_ref = config.s_ref;
  rc.check_s_independence = config.check_s_independence;
  return rc;
}

ProbeFamilyResult make_probes(const ExperimentConfig& config) {
  const double r0 =
      config.constant_overrides.count("r0") ? config.constant_overrides.at("r0") : HypothesisConstants{}.r0;
  return probe_family(r0, Vec2(-1.0, 0.0), config.probe_magnitudes, config.probe_count_angles,
                      config.transversality_cutoff);
}

BoundaryDatum make_datum(const DatumSpec& spec, const ExperimentConfig& config) {
  if (spec.kind == "constant") return BoundaryDatum::constant(spec.value);
  if (spec.kind == "linear_probe") {
    const Vec2 q(spec.amplitude * std::cos(spec.phase), spec.amplitude * std::sin(spec.phase));
    return BoundaryDatum::linear_probe(Vec2c(cplx(q(0), 0.0), cplx(q(1), 0.0)));
  }
  if (spec.kind == "harmonic") {
    const double radius = config.radius;
    const Vec2 center(config.radius, 0.0);
    const int k = spec.harmonic_k;
    const double amp = spec.amplitude;
    const double phase = spec.phase;
    const std::string id = "harm" + std::to_string(k) + "_" + fmtg(amp) + "_" + fmtg(phase);
    return BoundaryDatum::custom(id, [radius, center, k, amp, phase](const Vec2& x) {
      const cplx w((x(0) - center(0)) / radius, (x(1) - center(1)) / radius);
      return cplx(amp * (std::pow(w, k) * std::polar(1.0, phase)).real(), 0.0);
    });
  }
  throw ValidationError("unknown datum kind '" + spec.kind + "'");
}

int run_verify_model(const ExperimentConfig& config, const std::string& out_dir) {
  return guarded([&] {
    config.validate();
    ensure_directory(out_dir);
    Stopwatch watch;
    const ConductivityModel model = make_model(config);
    SamplingSpec spec;
    spec.s_re_min = config.verify_s_range[0];
    spec.s_re_max = config.verify_s_range[1];
    spec.s_re_count = config.verify_s_re_count;
    spec.s_im_count = config.verify_s_im_count;
    spec.p_direction_count = config.verify_p_directions;
    spec.p_radius_count = config.verify_p_radii;
    const HypothesisReport report = verify_hypotheses(model, spec);

    std::ostringstream body;
    write_hypothesis_report(body, report);
    write_text_file(out_dir + "/hypotheses.txt", body.str());

    RunManifest manifest;
    manifest.stage = "verify_model";
    manifest.config_hash = fnv1a64(serialize_config(config));
    manifest.timings_s.emplace_back("verify", watch.seconds());
    for (const auto& cond : report.conditions) manifest.tolerances.emplace_back(cond.id + "_margin", cond.margin);
    manifest.add_file(out_dir, "hypotheses.txt");
    write_manifest(out_dir, manifest);
    return report.all_pass ? kExitOk : kExitToleranceFailure;
  });
}

int run_forward(const ExperimentConfig& config, const std::string& out_dir) {
  return guarded([&] {
    config.validate();
    ensure_directory(out_dir);
    Stopwatch watch;
    const Mesh mesh = build_disk_mesh(config.radius, config.refinement_level);
    const ConductivityModel model = make_model(config);
    const SolverOptions opts = make_solver_options(config);
    const ProbeFamilyResult family = make_probes(config);
    auto cache = std::make_shared<const FemCache>(FemCache::build(mesh));

    std::ostringstream samples;
    std::ostringstream failures;
    int failure_count = 0;
    int field_index = 0;
    RunManifest manifest;
    manifest.stage = "forward";
    manifest.config_hash = fnv1a64(serialize_config(config));

    auto maybe_write_field = [&](const Eigen::VectorXcd& values) {
      if (!config.write_fields) return;
      std::ostringstream os;
      write_field_table(os, mesh, values);
      const std::string name = "field_" + std::to_string(field_index++) + ".txt";
      write_text_file(out_dir + "/" + name, os.str());
      manifest.add_file(out_dir, name);
    };

    for (std::size_t d = 0; d < config.data.size(); ++d) {
      const DatumSpec& spec = config.data[d];
      if (spec.map == "real") {
        try {
          const BoundaryDatum datum = make_datum(spec, config);
          ComplexField u = solve_quasilinear_real(
              mesh, model, [&datum](const Vec2& x) { return datum.evaluate(x).real(); }, opts);
          DNSample sample;
          sample.probe = ProbePoint::make(0.0, Vec2c::Zero(), mesh);
          sample.datum_id = datum.id;
          sample.datum_kind = datum.kind_name();
          sample.datum_params = datum.params();
          sample.kind = MapKind::kReal;
          sample.trace = recover_trace(*cache, real_flux_moments(*cache, model, u.values));
          sample.anchor_value = sample.trace(mesh.anchor_loop_index());
          sample.mesh_level = mesh.refinement_level;
          write_sample(samples, sample);
          maybe_write_field(u.values);
        } catch (const Error& e) {
          ++failure_count;
          failures << "datum " << d << " real: " << e.what() << "\n";
        }
        continue;
      }
      for (const ProbePoint& base : family.probes) {
        try {
          const ProbePoint probe = ProbePoint::make(0.0, base.p, mesh);
          DiscreteOperator op = assemble_linearized(cache, model, probe, opts).second;
          const BoundaryDatum datum =
              spec.kind == "linear_probe" ? BoundaryDatum::linear_probe(probe.p) : make_datum(spec, config);
          ComplexField v = solve_quasilinear_complex(mesh, model, probe, datum.closure(), opts, nullptr, &op);
          DNSample sample;
          sample.probe = probe;
          sample.datum_id = datum.id;
          sample.datum_kind = datum.kind_name();
          sample.datum_params = datum.params();
          sample.kind = MapKind::kComplex;
          sample.trace = recover_trace(*cache, quasilinear_flux_moments(*cache, model, probe, v.values));
          sample.anchor_value = sample.trace(mesh.anchor_loop_index());
          sample.mesh_level = mesh.refinement_level;
          write_sample(samples, sample);
          maybe_write_field(v.values);
        } catch (const Error& e) {
          ++failure_count;
          failures << "datum " << d << " probe: " << e.what() << "\n";
        }
      }
    }

    write_text_file(out_dir + "/forward_samples.dn", samples.str());
    manifest.add_file(out_dir, "forward_samples.dn");
    if (failure_count > 0) {
      write_text_file(out_dir + "/forward_failures.txt", failures.str());
      manifest.add_file(out_dir, "forward_failures.txt");
    }
    manifest.timings_s.emplace_back("forward", watch.seconds());
    write_manifest(out_dir, manifest);
    return failure_count > 0 ? kExitSolverFailure : kExitOk;
  });
}

ReconstructionRun reconstruct_with_mode(const ExperimentConfig& config, const std::string& mode,
                                        const std::vector<DNSample>* measured_samples, bool record,
                                        bool attach_truth) {
  const ReconstructionConfig rc = make_recon_config(config);
  const ProbeFamilyResult family = make_probes(config);
  if (family.probes.empty()) throw ValidationError("reconstruction: every probe was rejected as non-transversal");

  ReconstructionRun run;
  if (mode == "measured") {
    if (measured_samples == nullptr) throw ValidationError("measured mode requires sample records");
    MeasuredProvider provider(*measured_samples);
    run.report = recover_a(provider, family.probes, rc, nullptr, config.workers);
    return run;
  }

  const Mesh mesh = build_disk_mesh(config.radius, config.refinement_level);
  if ((mesh.anchor_normal() - rc.nu0).norm() > 1e-10)
    throw ValidationError("reconstruction: mesh anchor normal does not match the configured nu0");
  const ConductivityModel model = make_model(config);
  const SolverOptions opts = make_solver_options(config);
  const ConductivityModel* truth = attach_truth ? &model : nullptr;

  std::unique_ptr<DNProvider> provider;
  if (mode == "direct" || mode == "synthetic_direct") {
    provider = std::make_unique<SyntheticDirectProvider>(mesh, model, opts);
  } else if (mode == "end_to_end") {
    provider = std::make_unique<EndToEndProvider>(mesh, model, config.provider_fd_steps, opts);
  } else {
    throw ValidationError("unknown provider mode '" + mode + "'");
  }

  if (record) {
    RecordingProvider recorder(*provider);
    run.report = recover_a(recorder, family.probes, rc, truth, config.workers);
    run.recorded = recorder.records_sorted();
  } else {
    run.report = recover_a(*provider, family.probes, rc, truth, config.workers);
  }
  return run;
}

int run_dn_map(const ExperimentConfig& config, const std::string& out_dir, const std::string& mode_override) {
  return guarded([&] {
    config.validate();
    ensure_directory(out_dir);
    Stopwatch watch;
    const std::string mode = mode_override.empty() ? config.provider_mode : mode_override;
    if (mode == "measured") throw ValidationError("dn-map generates samples; mode must be direct or end_to_end");

    ReconstructionRun run = reconstruct_with_mode(config, mode, nullptr, /*record=*/true, /*attach_truth=*/false);
    apply_noise(run.recorded, config.noise_sigma, config.noise_seed);

    std::ostringstream samples;
    for (const auto& s : run.recorded) write_sample(samples, s);
    write_text_file(out_dir + "/samples.dn", samples.str());

    RunManifest manifest;
    manifest.stage = "dn_map";
    manifest.config_hash = fnv1a64(serialize_config(config));
    manifest.timings_s.emplace_back("dn_map", watch.seconds());
    manifest.tolerances.emplace_back("noise_sigma", config.noise_sigma);
    manifest.add_file(out_dir, "samples.dn");
    write_manifest(out_dir, manifest);
    return run.report.failed_probes > 0 ? kExitSolverFailure : kExitOk;
  });
}

int run_linearize(const ExperimentConfig& config, const std::string& out_dir) {
  return guarded([&] {
    config.validate();
    ensure_directory(out_dir);
    Stopwatch watch;
    const Mesh mesh = build_disk_mesh(config.radius, config.refinement_level);
    const ConductivityModel model = make_model(config);
    const SolverOptions opts = make_solver_options(config);
    const ProbeFamilyResult family = make_probes(config);

    std::ostringstream os;
    os << "# gateaux tables: probe, datum, rows of (t, gap, ratio)\n";
    os.precision(17);
    for (const ProbePoint& base : family.probes) {
      const ProbePoint probe = ProbePoint::make(0.0, base.p, mesh);
      for (const DatumSpec& spec : config.data) {
        if (spec.map != "complex") continue;
        const BoundaryDatum datum =
            spec.kind == "linear_probe" ? BoundaryDatum::linear_probe(probe.p) : make_datum(spec, config);
        auto [sample, table] = gateaux_fd(mesh, model, probe, datum, config.fd_steps, opts);
        (void)sample;
        os << "probe " << probe.p(0).real() << " " << probe.p(0).imag() << " " << probe.p(1).real() << " "
           << probe.p(1).imag() << " datum " << datum.id << "\n";
        for (std::size_t k = 0; k < table.steps.size(); ++k) {
          os << "  t " << table.steps[k] << " gap " << table.gaps[k];
          if (k > 0) os << " ratio " << table.gap_ratios[k - 1];
          os << "\n";
        }
        os << "  richardson_gap " << table.richardson_gap << "\n";
      }
    }
    write_text_file(out_dir + "/gateaux.txt", os.str());

    RunManifest manifest;
    manifest.stage = "linearize";
    manifest.config_hash = fnv1a64(serialize_config(config));
    manifest.timings_s.emplace_back("linearize", watch.seconds());
    manifest.add_file(out_dir, "gateaux.txt");
    write_manifest(out_dir, manifest);
    return kExitOk;
  });
}

int run_reconstruct(const ExperimentConfig& config, const std::string& out_dir, const std::string& mode_override,
                    const std::string& samples_path) {
  return guarded([&] {
    config.validate();
    ensure_directory(out_dir);
    Stopwatch watch;
    const std::string mode = mode_override.empty() ? config.provider_mode : mode_override;

    std::vector<DNSample> measured;
    if (mode == "measured") {
      const std::string path = samples_path.empty() ? out_dir + "/samples.dn" : samples_path;
      std::ifstream is(path);
      if (!is) throw ValidationError("measured mode: cannot open sample file '" + path + "'");
      measured = read_samples(is);
    }

    ReconstructionRun run = reconstruct_with_mode(config, mode, mode == "measured" ? &measured : nullptr,
                                                  /*record=*/false, /*attach_truth=*/mode != "measured");

    std::ostringstream report_os, summary_os;
    write_report(report_os, run.report);
    write_report_summary(summary_os, run.report);
    write_text_file(out_dir + "/reconstruction.txt", report_os.str());
    write_text_file(out_dir + "/summary.txt", summary_os.str());

    RunManifest manifest;
    manifest.stage = "reconstruct";
    manifest.config_hash = fnv1a64(serialize_config(config));
    manifest.timings_s.emplace_back("reconstruct", watch.seconds());
    manifest.tolerances.emplace_back("max_rel_error", run.report.max_rel_error);
    manifest.tolerances.emplace_back("max_s_independence_discrepancy", run.report.max_s_independence_discrepancy);
    manifest.add_file(out_dir, "reconstruction.txt");
    manifest.add_file(out_dir, "summary.txt");
    write_manifest(out_dir, manifest);

    if (run.report.failed_probes > 0) return static_cast<int>(kExitSolverFailure);
    if (run.report.has_truth && run.report.max_rel_error > config.max_rel_error_tolerance)
      return static_cast<int>(kExitToleranceFailure);
    return static_cast<int>(kExitOk);
  });
}

int run_convergence(const ExperimentConfig& config, const std::string& out_dir, const std::vector<int>& levels) {
  return guarded([&] {
    config.validate();
    if (levels.size() < 2) throw ValidationError("convergence: need at least two levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
      if (levels[i] <= levels[i - 1]) throw ValidationError("convergence: levels must be ascending");
    ensure_directory(out_dir);
    Stopwatch watch;

    const ConductivityModel model = make_model(config);
    const SolverOptions opts = make_solver_options(config);
    const double m = config.probe_magnitudes.back();

    std::vector<double> res_iso, res_ctrl, flux_err, gate_gap, recon_err;
    for (int level : levels) {
      const Mesh mesh = build_disk_mesh(config.radius, level);

      const ProbePoint iso = ProbePoint::make(0.25, Vec2c(cplx(m, 0.0), cplx(0.0, m)), mesh);
      const ProbePoint ctrl = ProbePoint::make(0.25, Vec2c(cplx(m, 0.0), cplx(m, 0.0)), mesh);
      res_iso.push_back(probe_residual(mesh, model, iso));
      res_ctrl.push_back(probe_residual(mesh, model, ctrl));

      const ProbePoint flux_probe = ProbePoint::make(1.0, Vec2c(cplx(m, 0.0), cplx(0.0, m)), mesh);
      const DNSample lin = dn_linearized(mesh, model, flux_probe, BoundaryDatum::constant(1.0), opts);
      const ModelEval ev = model.evaluate(cplx(1.0, 0.0), flux_probe.p);
      const cplx pnu = flux_probe.p(0) * mesh.anchor_normal()(0) + flux_probe.p(1) * mesh.anchor_normal()(1);
      const cplx oracle = ev.ds_a * pnu;
      flux_err.push_back(std::abs(lin.anchor_value - oracle) / std::max(std::abs(oracle), 1e-12));

      auto [gs, table] = gateaux_fd(mesh, model, flux_probe, BoundaryDatum::constant(1.0), config.fd_steps, opts);
      (void)gs;
      gate_gap.push_back(table.gaps.back());

      ExperimentConfig level_config = config;
      level_config.refinement_level = level;
      level_config.check_s_independence = false;
      ReconstructionRun run = reconstruct_with_mode(level_config, "direct", nullptr, false, true);
      recon_err.push_back(run.report.max_rel_error);
    }

    std::ostringstream os;
    os << "# per-level metrics with fitted log2 rates\n# levels:";
    for (int level : levels) os << " " << level;
    os << "\n";
    os.precision(6);
    auto row = [&os, &levels](const char* name, const std::vector<double>& vals) {
      os << name;
      for (double v : vals) os << " " << v;
      os << "  rate " << fit_log2_rate(vals) << "\n";
      (void)levels;
    };
    row("probe_residual_isotropic", res_iso);
    row("probe_residual_control", res_ctrl);
    row("anchor_flux_rel_error", flux_err);
    row("gateaux_gap", gate_gap);
    row("reconstruction_max_rel_error", recon_err);
    write_text_file(out_dir + "/convergence.txt", os.str());

    RunManifest manifest;
    manifest.stage = "convergence";
    manifest.config_hash = fnv1a64(serialize_config(config));
    manifest.timings_s.emplace_back("convergence", watch.seconds());
    manifest.add_file(out_dir, "convergence.txt");
    write_manifest(out_dir, manifest);
    return kExitOk;
  });
}

} // namespace qcond
