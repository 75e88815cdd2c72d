#include "qcond/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "qcond/errors.hpp"

namespace qcond {

void RunManifest::add_file(const std::string& dir, const std::string& name) {
  files.emplace_back(name, hash_file(dir + "/" + name));
}

void write_manifest(const std::string& dir, const RunManifest& manifest) {
  std::ofstream os(dir + "/manifest_" + manifest.stage + ".txt");
  if (!os) throw ValidationError("cannot write manifest in '" + dir + "'");
  os << "stage " << manifest.stage << "\n";
  os << "artifact_version " << manifest.artifact_version << "\n";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(manifest.config_hash));
  os << "config_hash " << buf << "\n";
  os.precision(6);
  for (const auto& [name, t] : manifest.timings_s) os << "timing " << name << " " << t << "\n";
  os.precision(17);
  for (const auto& [name, tol] : manifest.tolerances) os << "tolerance " << name << " " << tol << "\n";
  for (const auto& [name, hash] : manifest.files) {
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    os << "file " << name << " " << buf << "\n";
  }
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest '" + path + "'");
  RunManifest m;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "stage") ls >> m.stage;
    else if (tag == "artifact_version") ls >> m.artifact_version;
    else if (tag == "config_hash") {
      std::string hex;
      ls >> hex;
      m.config_hash = std::stoull(hex, nullptr, 16);
    } else if (tag == "timing") {
      std::string name;
      double t;
      ls >> name >> t;
      m.timings_s.emplace_back(name, t);
    } else if (tag == "tolerance") {
      std::string name;
      double t;
      ls >> name >> t;
      m.tolerances.emplace_back(name, t);
    } else if (tag == "file") {
      std::string name, hex;
      ls >> name >> hex;
      m.files.emplace_back(name, std::stoull(hex, nullptr, 16));
    }
  }
  return m;
}

void verify_manifest(const std::string& dir, const RunManifest& manifest) {
  for (const auto& [name, hash] : manifest.files) {
    const std::uint64_t actual = hash_file(dir + "/" + name);
    if (actual != hash)
      throw ValidationError("manifest checksum mismatch for '" + name + "'");
  }
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open file '" + path + "' for hashing");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string data = ss.str();
  return fnv1a64(data.data(), data.size());
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory '" + dir + "': " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write file '" + path + "'");
  os << content;
}

void write_field_table(std::ostream& os, const Mesh& mesh, const Eigen::VectorXcd& values) {
  os << "# vertex x y re im\n";
  os.precision(17);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    os << v << " " << mesh.vertices[v](0) << " " << mesh.vertices[v](1) << " " << values(v).real() << " "
       << values(v).imag() << "\n";
}

} // namespace qcond
