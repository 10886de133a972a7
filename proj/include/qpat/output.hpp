#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qpat/edge_detect.hpp"
#include "qpat/grid.hpp"
#include "qpat/metrics.hpp"

namespace qpat {

/// RGB triple of the viridis colormap at t in [0, 1] (clamped).
std::array<std::uint8_t, 3> colormap(double t);

/// Heatmap with the color axis fixed to [lo, hi]; the first image row is the top of the domain.
void write_heatmap_png(const std::filesystem::path& path, const CellField& f, double lo, double hi);

/// Edge pixels white on black.
void write_mask_png(const std::filesystem::path& path, const EdgeMask& m);

struct ProfileSeries {
  std::string name;
  Profile profile;
};

/// Columns t, then one column per series (all sampled at the same t).
void write_profile_csv(const std::filesystem::path& path, const std::vector<ProfileSeries>& series);
void write_profile_svg(const std::filesystem::path& path, const std::string& title,
                       const std::vector<ProfileSeries>& series);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// File checksums of one output directory, stored as manifest.json next to the files.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& dir);  // empty when absent
  void save() const;

  /// Hashes `name` (relative to the directory) and records it.
  void record(const std::string& name);
  /// Throws ValidationError when the file is missing, unrecorded or changed.
  void verify(const std::string& name) const;
  bool has(const std::string& name) const { return files_.count(name) != 0; }

  std::map<std::string, std::string>& meta() { return meta_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> files_;
  std::map<std::string, std::string> meta_;
};

}  // namespace qpat
