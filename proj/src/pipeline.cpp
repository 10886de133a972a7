#include "qpat/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qpat/analytic_recovery.hpp"
#include "qpat/metrics.hpp"
#include "qpat/output.hpp"

namespace qpat {

namespace fs = std::filesystem;
using json = nlohmann::json;

NoiseRegime noise_regime(double delta) {
  if (delta <= 0.0) return NoiseRegime::NoiseFree;
  if (delta <= 0.01) return NoiseRegime::Low;
  return NoiseRegime::High;
}

EdgeParams edge_preset(Scene scene, NoiseRegime regime) {
  const bool rect = scene == Scene::Rectangles;
  switch (regime) {
    case NoiseRegime::NoiseFree: return rect ? edge_params_rectangles_noise_free() : edge_params_noise_free();
    case NoiseRegime::Low: return rect ? edge_params_rectangles_low_noise() : edge_params_low_noise();
    case NoiseRegime::High: break;
  }
  return rect ? edge_params_rectangles_high_noise() : edge_params_high_noise();
}

Hyperparams functional_preset(Scene scene, NoiseRegime regime) {
  const bool rect = scene == Scene::Rectangles;
  switch (regime) {
    case NoiseRegime::NoiseFree: return rect ? Hyperparams::rectangles_noise_free() : Hyperparams::circles_noise_free();
    case NoiseRegime::Low: return rect ? Hyperparams::rectangles_low_noise() : Hyperparams::circles_low_noise();
    case NoiseRegime::High: break;
  }
  return rect ? Hyperparams::rectangles_high_noise() : Hyperparams::circles_high_noise();
}

void RunConfig::validate() const {
  phantom.validate();
  if (coarse < 2 || fine < coarse || fine % coarse != 0) {
    throw ValidationError("grid sizes need coarse >= 2 dividing fine");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise level must be nonnegative");
  if (!(illumination > 0.0)) throw ValidationError("illumination must be positive");
  if (!run_analytic && !run_variational) throw ValidationError("no reconstruction mode selected");
  edges.validate();
  functional.validate();
}

void set_mode(RunConfig& cfg, const std::string& mode) {
  if (mode == "analytic") {
    cfg.run_analytic = true;
    cfg.run_variational = false;
  } else if (mode == "variational") {
    cfg.run_analytic = false;
    cfg.run_variational = true;
  } else if (mode == "both") {
    cfg.run_analytic = cfg.run_variational = true;
  } else {
    throw ValidationError("mode must be analytic, variational or both");
  }
}

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void edges_from_json(const json& j, EdgeParams& p) {
  const auto fill = [&](const char* key, std::array<double, 3>& dst) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() > 3) throw ValidationError(std::string("edges.") + key + " has more than three entries");
    for (std::size_t k = 0; k < v.size(); ++k) dst[k] = v[k];
  };
  fill("sigma", p.sigma);
  fill("xi", p.xi);
  take(j, "gamma", p.gamma);
  if (j.contains("stages")) {
    p.stages = {false, false, false};
    for (int s : j.at("stages").get<std::vector<int>>()) {
      if (s < 0 || s > 2) throw ValidationError("edge stages are 0, 1 and 2");
      p.stages[static_cast<std::size_t>(s)] = true;
    }
  }
}

json edges_to_json(const EdgeParams& p) {
  std::vector<int> stages;
  for (int s = 0; s < 3; ++s) {
    if (p.stages[static_cast<std::size_t>(s)]) stages.push_back(s);
  }
  return {{"sigma", p.sigma}, {"xi", p.xi}, {"gamma", p.gamma}, {"stages", stages}};
}

void functional_from_json(const json& j, Hyperparams& h) {
  take(j, "alpha_mu", h.alpha_mu);
  take(j, "alpha_d", h.alpha_d);
  take(j, "beta_mu", h.beta_mu);
  take(j, "beta_d", h.beta_d);
  take(j, "zeta_mu", h.zeta_mu);
  take(j, "zeta_d", h.zeta_d);
  take(j, "epsilon", h.epsilon);
  take(j, "lower", h.lower);
  take(j, "upper", h.upper);
  take(j, "outer_tol", h.outer_tol);
  take(j, "inner_tol", h.inner_tol);
  take(j, "max_outer", h.max_outer);
  take(j, "max_inner", h.max_inner);
  take(j, "backtracking", h.backtracking);
  take(j, "max_backtracks", h.max_backtracks);
  take(j, "log_parameters", h.log_parameters);
  take(j, "divergence_factor", h.divergence_factor);
  take(j, "block_tol", h.block_tol);
}

json functional_to_json(const Hyperparams& h) {
  return {{"alpha_mu", h.alpha_mu},
          {"alpha_d", h.alpha_d},
          {"beta_mu", h.beta_mu},
          {"beta_d", h.beta_d},
          {"zeta_mu", h.zeta_mu},
          {"zeta_d", h.zeta_d},
          {"epsilon", h.epsilon},
          {"lower", h.lower},
          {"upper", h.upper},
          {"outer_tol", h.outer_tol},
          {"inner_tol", h.inner_tol},
          {"max_outer", h.max_outer},
          {"max_inner", h.max_inner},
          {"backtracking", h.backtracking},
          {"max_backtracks", h.max_backtracks},
          {"log_parameters", h.log_parameters},
          {"divergence_factor", h.divergence_factor},
          {"block_tol", h.block_tol}};
}

Scene infer_scene(const PhantomSpec& p) {
  if (p.shapes.empty()) return Scene::Circles;
  for (const Shape& s : p.shapes) {
    if (s.kind != Shape::Kind::Rectangle) return Scene::Circles;
  }
  return Scene::Rectangles;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const fs::path& base) {
  RunConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.contains("phantom")) {
      const json& p = j.at("phantom");
      if (p.is_string()) {
        const std::string name = p.get<std::string>();
        if (name == "builtin:A") cfg.phantom = example_phantom_a();
        else if (name == "builtin:B") cfg.phantom = example_phantom_b();
        else cfg.phantom = load_phantom(fs::path(name).is_absolute() ? fs::path(name) : base / name);
      } else {
        cfg.phantom = phantom_from_json(p.dump());
      }
    }
    cfg.scene = infer_scene(cfg.phantom);
    if (j.contains("scene")) {
      const auto s = j.at("scene").get<std::string>();
      if (s == "circles") cfg.scene = Scene::Circles;
      else if (s == "rectangles") cfg.scene = Scene::Rectangles;
      else throw ValidationError("scene must be circles or rectangles");
    }
    if (j.contains("grid")) {
      take(j.at("grid"), "fine", cfg.fine);
      take(j.at("grid"), "coarse", cfg.coarse);
    }
    take(j, "noise", cfg.noise);
    take(j, "seed", cfg.seed);
    take(j, "illumination", cfg.illumination);
    const NoiseRegime regime = noise_regime(cfg.noise);
    cfg.edges = edge_preset(cfg.scene, regime);
    cfg.functional = functional_preset(cfg.scene, regime);
    if (j.contains("edges")) edges_from_json(j.at("edges"), cfg.edges);
    if (j.contains("functional")) functional_from_json(j.at("functional"), cfg.functional);
    if (j.contains("mode")) set_mode(cfg, j.at("mode").get<std::string>());
    if (j.contains("analytic_partition")) {
      const auto s = j.at("analytic_partition").get<std::string>();
      if (s != "edges" && s != "truth") throw ValidationError("analytic_partition must be edges or truth");
      cfg.analytic_true_partition = s == "truth";
    }
    take(j, "min_region_cells", cfg.min_region_cells);
    if (j.contains("out")) {
      const fs::path out = j.at("out").get<std::string>();
      cfg.out = out.is_absolute() ? out : base / out;
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  return from_json(read_text(path), path.parent_path());
}

std::string RunConfig::to_json() const {
  json j;
  j["phantom"] = json::parse(phantom_to_json(phantom));
  j["scene"] = scene == Scene::Circles ? "circles" : "rectangles";
  j["grid"] = {{"fine", fine}, {"coarse", coarse}};
  j["noise"] = noise;
  j["seed"] = seed;
  j["illumination"] = illumination;
  j["edges"] = edges_to_json(edges);
  j["functional"] = functional_to_json(functional);
  j["mode"] = run_analytic && run_variational ? "both" : run_analytic ? "analytic" : "variational";
  j["analytic_partition"] = analytic_true_partition ? "truth" : "edges";
  j["min_region_cells"] = min_region_cells;
  j["out"] = out.string();
  return j.dump(2);
}

namespace {

struct Workspace {
  Manifest manifest;

  explicit Workspace(const RunConfig& cfg) : manifest(Manifest::load(cfg.out)) {}

  fs::path path(const std::string& name) const { return manifest.dir() / name; }

  void write(const std::string& name, const CellField& f) {
    write_csv(path(name), f);
    manifest.record(name);
  }
  void write(const std::string& name, const NodeField& f) {
    write_csv(path(name), f);
    manifest.record(name);
  }
  void write_text_file(const std::string& name, const std::string& text) {
    write_text(path(name), text);
    manifest.record(name);
  }
  CellField cells(const std::string& name) const {
    manifest.verify(name);
    return read_cell_csv(path(name));
  }
  NodeField nodes(const std::string& name) const {
    manifest.verify(name);
    return read_node_csv(path(name));
  }
  std::string text(const std::string& name) const {
    manifest.verify(name);
    return read_text(path(name));
  }
};

/// Downstream commands must run against the data the manifest describes.
void check_simulation(const Workspace& ws, const RunConfig& cfg) {
  const auto& meta = ws.manifest.meta();
  const auto expect = [&](const char* key, const std::string& value) {
    const auto it = meta.find(key);
    if (it == meta.end() || it->second != value) {
      throw ValidationError(std::string("output directory was simulated with a different ") + key +
                            " (run simulate again)");
    }
  };
  expect("seed", std::to_string(cfg.seed));
  expect("noise", num(cfg.noise));
  expect("fine", std::to_string(cfg.fine));
  expect("coarse", std::to_string(cfg.coarse));
  expect("illumination", num(cfg.illumination));
  expect("phantom", phantom_to_json(cfg.phantom));
}

EdgeMask mask_from_field(const CellField& f) {
  EdgeMask m(f.grid);
  for (std::size_t c = 0; c < f.size(); ++c) {
    const double v = std::round(f[c]);
    if (v < 0.0 || v > 3.0) throw ValidationError("edge file holds values outside 0..3");
    m.stage[c] = static_cast<std::uint8_t>(v);
  }
  return m;
}

std::vector<int> labels_from_field(const CellField& f) {
  std::vector<int> out(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) out[c] = static_cast<int>(std::lround(f[c]));
  return out;
}

/// Accuracy of one reconstruction; deterministic given the files.
json accuracy(const Workspace& ws, const PhantomSpec& phantom, const std::string& dir) {
  const CellField mu = ws.cells(dir + "/mu_est.csv");
  const CellField d = ws.cells(dir + "/d_est.csv");
  const CellField mu_avg = ws.cells("mu_true_avg.csv");
  const CellField d_avg = ws.cells("d_true_avg.csv");
  const CellField mu_raster = ws.cells("mu_true.csv");
  const CellField d_raster = ws.cells("d_true.csv");
  const std::vector<int> labels = labels_from_field(ws.cells("labels.csv"));
  json j;
  j["rel_l2_mu"] = relative_l2(mu, mu_avg);
  j["rel_l2_d"] = relative_l2(d, d_avg);
  j["rel_l2_mu_raster"] = relative_l2(mu, mu_raster);
  j["rel_l2_d_raster"] = relative_l2(d, d_raster);
  json scores = json::array();
  double worst = 1.0;
  for (const InclusionScore& s : inclusion_dice(mu, phantom, labels)) {
    scores.push_back({{"shape", s.shape}, {"threshold", s.threshold}, {"dice", s.dice}});
    worst = std::min(worst, s.dice);
  }
  j["dice_mu"] = scores;
  j["dice_mu_min"] = worst;
  return j;
}

json terms_json(const FunctionalTerms& t) {
  return {{"discrepancy", t.discrepancy}, {"smooth_mu", t.smooth_mu}, {"smooth_d", t.smooth_d},
          {"length_mu", t.length_mu},     {"length_d", t.length_d},   {"total", t.total()}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_profiles(Workspace& ws, const std::string& dir, const CellField& truth, const CellField& est,
                    const std::string& name) {
  const std::vector<ProfileSeries> series = {{"true", diagonal_profile(truth)}, {"estimate", diagonal_profile(est)}};
  const std::string file = dir + "/profile_" + name + ".csv";
  write_profile_csv(ws.path(file), series);
  ws.manifest.record(file);
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  Workspace ws(cfg);
  const SimulatedData data = simulate_data(cfg.phantom, cfg.fine, cfg.coarse, cfg.noise, cfg.seed, cfg.illumination);
  ws.write("mu_true.csv", data.truth.mu);
  ws.write("d_true.csv", data.truth.d);
  ws.write("mu_true_avg.csv", data.truth_average.mu);
  ws.write("d_true_avg.csv", data.truth_average.d);
  const std::vector<int> labels = shape_labels(cfg.phantom, data.coarse);
  CellField lab(data.coarse);
  for (std::size_t c = 0; c < labels.size(); ++c) lab[c] = labels[c];
  ws.write("labels.csv", lab);
  ws.write("E_clean.csv", data.sample.clean);
  ws.write("E_noisy.csv", data.sample.noisy);
  ws.write_text_file("phantom.json", phantom_to_json(cfg.phantom) + "\n");
  ws.write_text_file("config.json", cfg.to_json() + "\n");
  auto& meta = ws.manifest.meta();
  meta["seed"] = std::to_string(cfg.seed);
  meta["noise"] = num(cfg.noise);
  meta["fine"] = std::to_string(cfg.fine);
  meta["coarse"] = std::to_string(cfg.coarse);
  meta["illumination"] = num(cfg.illumination);
  meta["phantom"] = phantom_to_json(cfg.phantom);
  meta["rng"] = "mt19937_64 + std::normal_distribution";
  ws.manifest.save();
}

void cmd_detect_edges(const RunConfig& cfg) {
  cfg.validate();
  Workspace ws(cfg);
  check_simulation(ws, cfg);
  const CellField e = ws.cells("E_noisy.csv");
  const EdgeMask mask = detect_edges(e, cfg.edges);
  CellField stage(e.grid);
  for (std::size_t c = 0; c < stage.size(); ++c) stage[c] = mask.stage[c];
  ws.write("edges.csv", stage);
  ws.manifest.save();
}

void cmd_reconstruct(const RunConfig& cfg) {
  cfg.validate();
  Workspace ws(cfg);
  check_simulation(ws, cfg);
  const CellField e = ws.cells("E_noisy.csv");
  const NodeField boundary = boundary_field(e.grid, cfg.illumination);
  const CellField mu_true = ws.cells("mu_true.csv");
  const CellField d_true = ws.cells("d_true.csv");

  if (cfg.run_analytic) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(ws.path("analytic"));
    const Partition part = cfg.analytic_true_partition
                               ? partition_from_labels(e.grid, labels_from_field(ws.cells("labels.csv")))
                               : segment(mask_from_field(ws.cells("edges.csv")), cfg.min_region_cells);
    const RecoveryResult r = recover(e, part, boundary);
    const CellField mu = region_field(part, r, false);
    const CellField d = region_field(part, r, true);
    ws.write("analytic/mu_est.csv", mu);
    ws.write("analytic/d_est.csv", d);
    ws.write_text_file("analytic/summary.json", r.to_json() + "\n");
    write_profiles(ws, "analytic", mu_true, mu, "mu");
    write_profiles(ws, "analytic", d_true, d, "d");
    json m = accuracy(ws, cfg.phantom, "analytic");
    m["regions"] = part.regions;
    m["partition"] = cfg.analytic_true_partition ? "truth" : "edges";
    m["runtime_seconds"] = seconds_since(t0);
    ws.write_text_file("analytic/metrics.json", m.dump(2) + "\n");
    ws.manifest.save();
  }

  if (cfg.run_variational) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(ws.path("variational"));
    const EdgeMask edges = mask_from_field(ws.cells("edges.csv"));
    const fs::path log_path = ws.path("variational/iterations.jsonl");
    std::ofstream log(log_path);
    if (!log) throw ValidationError("cannot write " + log_path.string());
    const auto on_record = [&](const IterationRecord& rec) { log << rec.to_json_line() << '\n' << std::flush; };
    MinimizeResult res;
    try {
      res = minimize({e, boundary}, cfg.functional, edges, on_record);
    } catch (const DivergenceError& err) {
      throw DivergenceError(std::string(err.what()) + "; iteration log: " + log_path.string(), err.log);
    }
    log.close();
    ws.manifest.record("variational/iterations.jsonl");
    ws.write("variational/mu_est.csv", res.state.mu);
    ws.write("variational/d_est.csv", res.state.d);
    ws.write("variational/v_mu.csv", res.state.v_mu);
    ws.write("variational/v_d.csv", res.state.v_d);
    write_profiles(ws, "variational", mu_true, res.state.mu, "mu");
    write_profiles(ws, "variational", d_true, res.state.d, "d");
    json m = accuracy(ws, cfg.phantom, "variational");
    m["terms"] = terms_json(res.state.terms);
    m["outer_iterations"] = res.outer_iterations;
    m["converged"] = res.converged;
    m["tv_mu_outside_edges"] = total_variation_outside(res.state.mu, res.state.v_mu);
    m["runtime_seconds"] = seconds_since(t0);
    ws.write_text_file("variational/metrics.json", m.dump(2) + "\n");
    ws.manifest.save();
  }
}

void cmd_plot(const RunConfig& cfg) {
  cfg.validate();
  Workspace ws(cfg);
  check_simulation(ws, cfg);
  const auto range = [](const CellField& f) {
    auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    double a = *lo, b = *hi;
    if (!(b > a)) {
      const double pad = std::max(std::abs(a), 1.0) * 0.5;
      a -= pad;
      b += pad;
    }
    return std::pair{a, b};
  };
  // Color axis of every heatmap, written to plots.json.
  json axes;
  const auto heatmap = [&](const std::string& name, const CellField& f, double lo, double hi) {
    write_heatmap_png(ws.path(name), f, lo, hi);
    axes[name] = {lo, hi};
  };
  const CellField mu_true = ws.cells("mu_true.csv");
  const CellField d_true = ws.cells("d_true.csv");
  const auto [mlo, mhi] = range(mu_true);
  const auto [dlo, dhi] = range(d_true);
  heatmap("mu_true.png", mu_true, mlo, mhi);
  heatmap("d_true.png", d_true, dlo, dhi);
  const CellField clean = ws.cells("E_clean.csv");
  const auto [elo, ehi] = range(clean);
  heatmap("E_clean.png", clean, elo, ehi);
  heatmap("E_noisy.png", ws.cells("E_noisy.csv"), elo, ehi);
  if (ws.manifest.has("edges.csv")) write_mask_png(ws.path("edges.png"), mask_from_field(ws.cells("edges.csv")));

  for (const std::string dir : {"analytic", "variational"}) {
    if (!ws.manifest.has(dir + "/mu_est.csv")) continue;
    const CellField mu = ws.cells(dir + "/mu_est.csv");
    const CellField d = ws.cells(dir + "/d_est.csv");
    heatmap(dir + "/mu_est.png", mu, mlo, mhi);
    heatmap(dir + "/d_est.png", d, dlo, dhi);
    write_profile_svg(ws.path(dir + "/profile_mu.svg"), "mu along the diagonal",
                      {{"true", diagonal_profile(mu_true)}, {"estimate", diagonal_profile(mu)}});
    write_profile_svg(ws.path(dir + "/profile_d.svg"), "D along the diagonal",
                      {{"true", diagonal_profile(d_true)}, {"estimate", diagonal_profile(d)}});
    if (dir == "variational") {
      for (const std::string v : {"v_mu", "v_d"}) {
        const CellField cells = nodes_to_cells(ws.nodes(dir + "/" + v + ".csv"));
        heatmap(dir + "/" + v + ".png", cells, 0.0, 1.0);
      }
    }
  }
  write_text(ws.path("plots.json"), axes.dump(2) + "\n");
}

std::string cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  Workspace ws(cfg);
  check_simulation(ws, cfg);
  json out;
  out["config"] = {{"seed", cfg.seed}, {"noise", cfg.noise}, {"fine", cfg.fine}, {"coarse", cfg.coarse}};
  if (ws.manifest.has("edges.csv")) {
    const EdgeMask mask = mask_from_field(ws.cells("edges.csv"));
    const CellField mu_true = ws.cells("mu_true.csv");
    const CellField d_true = ws.cells("d_true.csv");
    const PixelMask truth = jump_pixels({&mu_true, &d_true});
    const PixelMask flags = mask.flags();
    out["edges"] = {{"pixels", mask.count()},
                    {"recall_2px", fraction_within(mask.grid, truth, flags, 2.0)},
                    {"precision_2px", fraction_within(mask.grid, flags, truth, 2.0)}};
  }
  for (const std::string dir : {"analytic", "variational"}) {
    if (!ws.manifest.has(dir + "/metrics.json")) continue;
    json m = json::parse(ws.text(dir + "/metrics.json"));
    json fresh = accuracy(ws, cfg.phantom, dir);
    for (auto it = fresh.begin(); it != fresh.end(); ++it) m[it.key()] = it.value();
    out[dir] = m;
  }
  const std::string text = out.dump(2) + "\n";
  write_text(ws.path("metrics.json"), text);
  ws.manifest.record("metrics.json");
  ws.manifest.save();
  return text;
}

std::string run_all(const RunConfig& cfg) {
  cmd_simulate(cfg);
  cmd_detect_edges(cfg);
  cmd_reconstruct(cfg);
  const std::string metrics = cmd_eval(cfg);
  cmd_plot(cfg);
  return metrics;
}

namespace {

void strip(json& j) {
  if (j.is_object()) {
    j.erase("runtime_seconds");
    for (auto& el : j.items()) strip(el.value());
  } else if (j.is_array()) {
    for (auto& v : j) strip(v);
  }
}

}  // namespace

std::string strip_runtimes(const std::string& metrics_json) {
  json j = json::parse(metrics_json);
  strip(j);
  return j.dump(2);
}

}  // namespace qpat
