#ifndef QCOND_HARNESS_HPP
#define QCOND_HARNESS_HPP

#include <string>
#include <vector>

#include "qcond/config.hpp"
#include "qcond/io.hpp"
#include "qcond/reconstruct.hpp"

namespace qcond {

// Process exit codes shared by all subcommands.
enum ExitCode : int {
  kExitOk = 0,
  kExitToleranceFailure = 1,
  kExitSolverFailure = 2,
  kExitConfigFailure = 3,
};

ConductivityModel make_model(const ExperimentConfig& config);
SolverOptions make_solver_options(const ExperimentConfig& config);
ReconstructionConfig make_recon_config(const ExperimentConfig& config);
ProbeFamilyResult make_probes(const ExperimentConfig& config);
BoundaryDatum make_datum(const DatumSpec& spec, const ExperimentConfig& config);

int run_verify_model(const ExperimentConfig& config, const std::string& out_dir);
int run_forward(const ExperimentConfig& config, const std::string& out_dir);
// Generates the sample files consumed by measured-mode reconstruction by
// recording every provider query of the configured reconstruction plan.
int run_dn_map(const ExperimentConfig& config, const std::string& out_dir, const std::string& mode_override = "");
int run_linearize(const ExperimentConfig& config, const std::string& out_dir);
int run_reconstruct(const ExperimentConfig& config, const std::string& out_dir, const std::string& mode_override = "",
                    const std::string& samples_path = "");
int run_convergence(const ExperimentConfig& config, const std::string& out_dir, const std::vector<int>& levels);

// Reconstruction driver shared by run_dn_map/run_reconstruct and tests:
// builds mesh, model, provider, probes; returns the report.
struct ReconstructionRun {
  ReconstructionReport report;
  std::vector<DNSample> recorded;  // sorted by query key
};
ReconstructionRun reconstruct_with_mode(const ExperimentConfig& config, const std::string& mode,
                                        const std::vector<DNSample>* measured_samples, bool record,
                                        bool attach_truth);

} // namespace qcond

#endif
