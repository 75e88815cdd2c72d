// Command-line front end: forward solves, DN maps, hypothesis checks,
// reconstruction, and convergence studies driven by a single config file.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qcond/errors.hpp"
#include "qcond/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int workers = 0;
  int level = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)")->required();
  cmd->add_option("--out", args.out_dir, "output directory (default: config output.directory)");
  cmd->add_option("--workers", args.workers, "worker threads override");
  cmd->add_option("--level", args.level, "mesh refinement level override");
}

qcond::ExperimentConfig load(const CommonArgs& args) {
  qcond::ExperimentConfig config = qcond::load_config(args.config_path);
  if (args.workers > 0) config.workers = args.workers;
  if (args.level >= 0) config.refinement_level = args.level;
  return config;
}

std::string out_dir(const CommonArgs& args, const qcond::ExperimentConfig& config) {
  return args.out_dir.empty() ? config.output_directory : args.out_dir;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"qcond: quasilinear conductivity DN maps and boundary reconstruction"};
  app.require_subcommand(1);

  CommonArgs verify_args, forward_args, dnmap_args, lin_args, rec_args, conv_args;
  std::string dnmap_mode, rec_mode, rec_samples, conv_levels = "2,3,4";

  CLI::App* verify = app.add_subcommand("verify-model", "sampled hypothesis verification");
  add_common(verify, verify_args);

  CLI::App* forward = app.add_subcommand("forward", "forward solves and DN samples for the configured data");
  add_common(forward, forward_args);

  CLI::App* dnmap = app.add_subcommand("dn-map", "record the DN samples the reconstruction plan needs");
  add_common(dnmap, dnmap_args);
  dnmap->add_option("--mode", dnmap_mode, "provider mode: direct | end_to_end");

  CLI::App* linearize = app.add_subcommand("linearize", "finite-difference Gateaux tables");
  add_common(linearize, lin_args);

  CLI::App* reconstruct = app.add_subcommand("reconstruct", "recover a(s,p) from DN data");
  add_common(reconstruct, rec_args);
  reconstruct->add_option("--mode", rec_mode, "provider mode: direct | end_to_end | measured");
  reconstruct->add_option("--samples", rec_samples, "sample file for measured mode");

  CLI::App* convergence = app.add_subcommand("convergence", "per-level error table with fitted rates");
  add_common(convergence, conv_args);
  convergence->add_option("--levels", conv_levels, "comma-separated ascending levels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) {
      const auto config = load(verify_args);
      return qcond::run_verify_model(config, out_dir(verify_args, config));
    }
    if (forward->parsed()) {
      const auto config = load(forward_args);
      return qcond::run_forward(config, out_dir(forward_args, config));
    }
    if (dnmap->parsed()) {
      const auto config = load(dnmap_args);
      return qcond::run_dn_map(config, out_dir(dnmap_args, config), dnmap_mode);
    }
    if (linearize->parsed()) {
      const auto config = load(lin_args);
      return qcond::run_linearize(config, out_dir(lin_args, config));
    }
    if (reconstruct->parsed()) {
      const auto config = load(rec_args);
      return qcond::run_reconstruct(config, out_dir(rec_args, config), rec_mode, rec_samples);
    }
    if (convergence->parsed()) {
      const auto config = load(conv_args);
      std::vector<int> levels;
      std::string token;
      std::istringstream ls(conv_levels);
      while (std::getline(ls, token, ',')) levels.push_back(std::stoi(token));
      return qcond::run_convergence(config, out_dir(conv_args, config), levels);
    }
  } catch (const qcond::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return qcond::kExitConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qcond::kExitSolverFailure;
  }
  return 0;
}
