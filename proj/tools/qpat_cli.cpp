// qpat: batch driver for data simulation, edge detection and reconstruction.
//
//   qpat simulate    --config run.json [--seed N] [--out DIR]
//   qpat detect-edges --config run.json
//   qpat reconstruct --config run.json [--mode analytic|variational|both] [--paper-faithful]
//   qpat plot        --config run.json
//   qpat eval        --config run.json
//   qpat run         --config run.json      (all of the above)
//
// Exit codes: 0 success, 2 invalid input, 3 solver failure.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "qpat/analytic_recovery.hpp"
#include "qpat/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string mode;
  bool paper_faithful = false;
};

qpat::RunConfig resolve(const Options& o, CLI::App& sub) {
  qpat::RunConfig cfg = o.config.empty() ? qpat::RunConfig{} : qpat::RunConfig::load(o.config);
  if (sub.count("--seed")) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.mode.empty()) qpat::set_mode(cfg, o.mode);
  if (o.paper_faithful) cfg.functional.backtracking = false;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative photoacoustic reconstruction toolkit"};
  app.require_subcommand(1);
  Options o;

  const auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "noise seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--mode", o.mode, "analytic, variational or both")
        ->check(CLI::IsMember({"analytic", "variational", "both"}));
    sub->add_flag("--paper-faithful", o.paper_faithful, "plain Gauss-Newton steps without backtracking");
    return sub;
  };
  CLI::App* simulate = add("simulate", "generate phantom, data and noise");
  CLI::App* detect = add("detect-edges", "staged edge detection on the noisy data");
  CLI::App* reconstruct = add("reconstruct", "analytic and/or variational reconstruction");
  CLI::App* plot = add("plot", "heatmaps and diagonal profiles");
  CLI::App* eval = add("eval", "collect metrics.json");
  CLI::App* run = add("run", "simulate, detect-edges, reconstruct, eval and plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) {
      qpat::cmd_simulate(resolve(o, *simulate));
    } else if (detect->parsed()) {
      qpat::cmd_detect_edges(resolve(o, *detect));
    } else if (reconstruct->parsed()) {
      qpat::cmd_reconstruct(resolve(o, *reconstruct));
    } else if (plot->parsed()) {
      qpat::cmd_plot(resolve(o, *plot));
    } else if (eval->parsed()) {
      std::cout << qpat::cmd_eval(resolve(o, *eval));
    } else if (run->parsed()) {
      std::cout << qpat::run_all(resolve(o, *run));
    }
  } catch (const qpat::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const qpat::DivergenceError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 3;
  } catch (const qpat::SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 3;
  } catch (const qpat::RecoveryError& e) {
    std::fprintf(stderr, "recovery failure: %s\n", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
