#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qpat/at_ms.hpp"
#include "qpat/edge_detect.hpp"
#include "qpat/phantom.hpp"

namespace qpat {

enum class Scene { Circles, Rectangles };
enum class NoiseRegime { NoiseFree, Low, High };

/// Regime of a relative noise level: 0, up to 1% and above.
NoiseRegime noise_regime(double delta);
EdgeParams edge_preset(Scene scene, NoiseRegime regime);
Hyperparams functional_preset(Scene scene, NoiseRegime regime);

/// Everything one batch run needs. Edge and functional parameters default to
/// the presets of the scene and noise regime; explicit config values override
/// individual entries.
struct RunConfig {
  PhantomSpec phantom = example_phantom_a();
  Scene scene = Scene::Circles;
  std::size_t fine = 400;
  std::size_t coarse = 200;
  double noise = 0.0;
  std::uint64_t seed = 1;
  double illumination = 1.0;
  EdgeParams edges = edge_preset(Scene::Circles, NoiseRegime::NoiseFree);
  Hyperparams functional = functional_preset(Scene::Circles, NoiseRegime::NoiseFree);
  bool run_analytic = true;
  bool run_variational = true;
  bool analytic_true_partition = false;  // segment the detected edges otherwise
  std::size_t min_region_cells = 49;     // smaller edge-bounded components are merged away
  std::filesystem::path out = "out";

  void validate() const;
  /// Relative paths in the file (phantom, out) are resolved against `base`.
  static RunConfig from_json(const std::string& text, const std::filesystem::path& base = {});
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

void set_mode(RunConfig& cfg, const std::string& mode);  // analytic | variational | both

/// Writes the data files and starts the manifest of cfg.out.
void cmd_simulate(const RunConfig& cfg);
void cmd_detect_edges(const RunConfig& cfg);
/// Writes analytic/ and/or variational/ result directories.
void cmd_reconstruct(const RunConfig& cfg);
void cmd_plot(const RunConfig& cfg);
/// Collects all metrics into cfg.out/metrics.json and returns its text.
std::string cmd_eval(const RunConfig& cfg);

/// simulate, detect-edges, reconstruct, eval and plot.
std::string run_all(const RunConfig& cfg);

/// The metrics document with every "runtime_seconds" entry removed.
std::string strip_runtimes(const std::string& metrics_json);

}  // namespace qpat
