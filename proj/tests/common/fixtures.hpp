#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "huequery/corpus.hpp"
#include "huequery/synthetic.hpp"

namespace hq::fixtures {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes a synthetic dataset with silhouette masks under `root` and ingests it.
inline Dataset synthetic_dataset(const std::filesystem::path& root, std::size_t persons,
                                 std::uint64_t seed = 2024, const std::string& prefix = "p",
                                 bool extra_labels = false, double cast_deg = 0.0) {
  SyntheticConfig cfg;
  cfg.persons = persons;
  cfg.seed = seed;
  cfg.id_prefix = prefix;
  cfg.camera.color_cast_deg = cast_deg;
  SyntheticWriteOptions opts;
  opts.write_masks = true;
  opts.annotate_extra_labels = extra_labels;
  write_synthetic_dataset(root, cfg, opts);
  return ingest(DatasetLayout{root}, root.filename().string());
}

}  // namespace hq::fixtures
