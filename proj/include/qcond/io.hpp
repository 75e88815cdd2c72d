#ifndef QCOND_IO_HPP
#define QCOND_IO_HPP

#include <string>
#include <utility>
#include <vector>

#include "qcond/geometry.hpp"

namespace qcond {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct RunManifest {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::string artifact_version = kArtifactVersion;
  std::vector<std::pair<std::string, double>> timings_s;
  std::vector<std::pair<std::string, double>> tolerances;
  std::vector<std::pair<std::string, std::uint64_t>> files;  // path relative to the run dir

  void add_file(const std::string& dir, const std::string& name);
};

void write_manifest(const std::string& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

// Re-hashes every file listed in a manifest; throws ValidationError on mismatch.
void verify_manifest(const std::string& dir, const RunManifest& manifest);

std::uint64_t hash_file(const std::string& path);
void ensure_directory(const std::string& dir);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Vertex-value table of a field (index, x, y, re, im).
void write_field_table(std::ostream& os, const Mesh& mesh, const Eigen::VectorXcd& values);

} // namespace qcond

#endif
