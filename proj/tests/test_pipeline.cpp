#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <png.h>

#include "qpat/output.hpp"
#include "qpat/pipeline.hpp"
#include "support.hpp"

using namespace qpat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small and quick: 160 -> 80 pixels, a few outer iterations.
RunConfig small_config(const fs::path& out, const std::string& extra = "") {
  std::string text = R"({"phantom": "builtin:A", "grid": {"fine": 160, "coarse": 80}, "noise": 0.0, "seed": 3,
                         "mode": "both",
                         "functional": {"max_outer": 3, "max_inner": 3})";
  text += extra + ", \"out\": \"" + out.string() + "\"}";
  return RunConfig::from_json(text);
}

struct Rgba {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // RGB
};

Rgba read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&img, path.c_str()) != 0);
  img.format = PNG_FORMAT_RGB;
  Rgba out{img.width, img.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
  REQUIRE(png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr) != 0);
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QPAT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run configuration") {
  SUBCASE("defaults follow the noise regime and scene") {
    const RunConfig a = RunConfig::from_json(R"({"phantom": "builtin:A", "noise": 0.1})");
    CHECK(a.scene == Scene::Circles);
    CHECK(a.edges.sigma == edge_params_high_noise().sigma);
    CHECK(a.functional.alpha_mu == Hyperparams::circles_high_noise().alpha_mu);
    const RunConfig b = RunConfig::from_json(R"({"phantom": "builtin:B", "noise": 0.001})");
    CHECK(b.scene == Scene::Rectangles);
    CHECK(b.edges.xi == edge_params_rectangles_low_noise().xi);
    CHECK(b.functional.beta_d == Hyperparams::rectangles_low_noise().beta_d);
    CHECK(noise_regime(0.0) == NoiseRegime::NoiseFree);
    CHECK(noise_regime(0.01) == NoiseRegime::Low);
    CHECK(noise_regime(0.05) == NoiseRegime::High);
  }
  SUBCASE("explicit entries override single preset values") {
    const RunConfig c = RunConfig::from_json(
        R"({"noise": 0.1, "edges": {"gamma": 0.5}, "functional": {"epsilon": 0.02}, "mode": "analytic"})");
    CHECK(c.edges.gamma == 0.5);
    CHECK(c.edges.sigma == edge_params_high_noise().sigma);
    CHECK(c.functional.epsilon == 0.02);
    CHECK(c.functional.alpha_mu == Hyperparams::circles_high_noise().alpha_mu);
    CHECK(c.run_analytic);
    CHECK_FALSE(c.run_variational);
  }
  SUBCASE("round trip through JSON") {
    const RunConfig c = small_config("/tmp/x", R"(, "illumination": 2.0)");
    const RunConfig d = RunConfig::from_json(c.to_json());
    CHECK(d.to_json() == c.to_json());
  }
  SUBCASE("relative paths resolve against the config file") {
    const RunConfig c = RunConfig::load(fs::path(QPAT_CONFIG_DIR) / "b_high_noise.json");
    CHECK(c.out == fs::path(QPAT_CONFIG_DIR) / "../runs/b_high_noise");
    CHECK(c.noise == 0.1);
    CHECK(c.coarse == 100);
    CHECK_FALSE(c.run_analytic);
  }
  SUBCASE("invalid configurations") {
    CHECK_THROWS_AS(RunConfig::from_json("{"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"grid": {"fine": 100, "coarse": 30}})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"noise": -1})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"mode": "fast"})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"scene": "triangles"})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"functional": {"epsilon": 0}})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"phantom": "no_such_file.json"})"), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"noise": "high"})"), ValidationError);
  }
}

TEST_CASE("full run on a small grid") {
  // Subcases re-enter the test case; the run itself happens once.
  static const RunConfig cfg = small_config(test::scratch_dir("pipeline_small"));
  static const std::string metrics = run_all(cfg);
  const fs::path dir = cfg.out;
  const json m = json::parse(metrics);

  SUBCASE("both reconstructions and their files") {
    for (const char* f : {"mu_true.csv", "E_clean.csv", "E_noisy.csv", "edges.csv", "labels.csv", "manifest.json",
                          "metrics.json", "plots.json", "analytic/mu_est.csv", "analytic/summary.json",
                          "variational/iterations.jsonl", "variational/v_mu.csv", "variational/mu_est.png",
                          "variational/profile_mu.svg", "analytic/profile_d.csv"}) {
      CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    const json& terms = m["variational"]["terms"];
    for (const char* t : {"discrepancy", "smooth_mu", "smooth_d", "length_mu", "length_d"}) {
      CHECK(terms[t].get<double>() >= 0.0);
    }
    CHECK(m["analytic"]["partition"] == "edges");
    CHECK(m["edges"]["pixels"].get<int>() > 0);
  }
  SUBCASE("noise-free data are the clean data") {
    CHECK(read_cell_csv(dir / "E_noisy.csv").values == read_cell_csv(dir / "E_clean.csv").values);
  }
  SUBCASE("color axes are the true ranges") {
    const json axes = json::parse(slurp(dir / "plots.json"));
    const CellField mu = read_cell_csv(dir / "mu_true.csv");
    const auto [lo, hi] = std::minmax_element(mu.values.begin(), mu.values.end());
    CHECK(axes["mu_true.png"][0] == *lo);
    CHECK(axes["mu_true.png"][1] == *hi);
    CHECK(axes["variational/mu_est.png"] == axes["mu_true.png"]);
    CHECK(axes["analytic/d_est.png"] == axes["d_true.png"]);
    CHECK(axes["variational/v_mu.png"] == json::array({0.0, 1.0}));
  }
  SUBCASE("images have the grid size") {
    const Rgba img = read_png(dir / "E_noisy.png");
    CHECK(img.width == 80);
    CHECK(img.height == 80);
  }
  SUBCASE("results are reproducible apart from timings") {
    const fs::path again = test::scratch_dir("pipeline_small_again");
    const std::string second = run_all(small_config(again));
    CHECK(strip_runtimes(second) == strip_runtimes(metrics));
    for (const char* f : {"E_noisy.csv", "edges.csv", "variational/mu_est.csv", "analytic/d_est.csv"}) {
      CHECK_MESSAGE(sha256_file(dir / f) == sha256_file(again / f), f);
    }
  }
  SUBCASE("a changed input file is refused") {
    std::ofstream(dir / "E_noisy.csv", std::ios::app) << "\n";
    CHECK_THROWS_AS(cmd_reconstruct(cfg), ValidationError);
  }
  SUBCASE("a different seed needs a new simulation") {
    RunConfig other = cfg;
    other.seed = 4;
    CHECK_THROWS_AS(cmd_detect_edges(other), ValidationError);
  }
}

TEST_CASE("output grid is the coarse grid") {
  const fs::path dir = test::scratch_dir("pipeline_400");
  RunConfig cfg = RunConfig::from_json(R"({"phantom": "builtin:A"})");
  cfg.out = dir;
  CHECK(cfg.fine == 400);
  CHECK(cfg.coarse == 200);
  cmd_simulate(cfg);
  const CellField e = read_cell_csv(dir / "E_noisy.csv");
  CHECK(e.grid.cx() == 200);
  CHECK(e.grid.cy() == 200);
  CHECK(read_cell_csv(dir / "mu_true.csv").grid.cx() == 200);
}

TEST_CASE("manifest") {
  const fs::path dir = test::scratch_dir("manifest");
  std::ofstream(dir / "a.txt") << "hello";
  Manifest m = Manifest::load(dir);
  CHECK_FALSE(m.has("a.txt"));
  m.record("a.txt");
  m.meta()["seed"] = "7";
  m.save();
  const Manifest back = Manifest::load(dir);
  CHECK(back.has("a.txt"));
  CHECK(back.meta().at("seed") == "7");
  CHECK_NOTHROW(back.verify("a.txt"));
  // Known digest of "hello".
  CHECK(sha256_file(dir / "a.txt") == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  std::ofstream(dir / "a.txt") << "hellp";
  CHECK_THROWS_AS(back.verify("a.txt"), ValidationError);
  CHECK_THROWS_AS(back.verify("b.txt"), ValidationError);
}

TEST_CASE("image writers") {
  const fs::path dir = test::scratch_dir("png");
  const Grid g = Grid::with_cells(7, 5);
  SUBCASE("constant field is one color") {
    write_heatmap_png(dir / "c.png", CellField(g, 2.0), 0.0, 4.0);
    const Rgba img = read_png(dir / "c.png");
    CHECK(img.width == 7);
    CHECK(img.height == 5);
    const auto mid = colormap(0.5);
    for (std::size_t k = 0; k < img.pixels.size(); k += 3) {
      CHECK(img.pixels[k] == mid[0]);
      CHECK(img.pixels[k + 1] == mid[1]);
      CHECK(img.pixels[k + 2] == mid[2]);
    }
  }
  SUBCASE("values outside the axis saturate") {
    CellField f(g, -5.0);
    f[g.cell(0, 0)] = 9.0;
    write_heatmap_png(dir / "s.png", f, 0.0, 1.0);
    const Rgba img = read_png(dir / "s.png");
    const auto top = colormap(1.0), bottom = colormap(0.0);
    // Cell (0, 0) is the bottom-left corner of the domain, the first pixel of the last row.
    const std::size_t k = (4 * 7 + 0) * 3;
    CHECK(img.pixels[k] == top[0]);
    CHECK(img.pixels[0] == bottom[0]);
  }
  SUBCASE("mask image") {
    EdgeMask m(g);
    m.stage[g.cell(6, 4)] = 2;
    write_mask_png(dir / "m.png", m);
    const Rgba img = read_png(dir / "m.png");
    std::size_t white = 0;
    for (std::size_t k = 0; k < img.pixels.size(); k += 3) white += img.pixels[k] == 255;
    CHECK(white == 1);
    CHECK(img.pixels[6 * 3] == 255);  // top-right pixel
  }
  SUBCASE("colormap endpoints") {
    CHECK(colormap(-1.0) == colormap(0.0));
    CHECK(colormap(2.0) == colormap(1.0));
    CHECK(colormap(0.0) != colormap(1.0));
  }
}

TEST_CASE("command line") {
  const fs::path dir = test::scratch_dir("cli");
  SUBCASE("invalid input exits with 2") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("simulate --config " + (dir / "missing.json").string()) == 2);
    std::ofstream(dir / "bad.json") << R"({"grid": {"fine": 10, "coarse": 3}})";
    CHECK(run_cli("simulate --config " + (dir / "bad.json").string()) == 2);
    CHECK(run_cli("reconstruct --mode fast") == 2);
  }
  SUBCASE("simulate then detect") {
    std::ofstream(dir / "run.json") << R"({"phantom": "builtin:A", "grid": {"fine": 60, "coarse": 30}, "out": "o"})";
    CHECK(run_cli("simulate --config " + (dir / "run.json").string() + " --seed 9") == 0);
    CHECK(fs::exists(dir / "o" / "E_noisy.csv"));
    CHECK(run_cli("detect-edges --config " + (dir / "run.json").string()) == 2);  // seed differs
    CHECK(run_cli("detect-edges --config " + (dir / "run.json").string() + " --seed 9") == 0);
    CHECK(fs::exists(dir / "o" / "edges.csv"));
  }
  SUBCASE("recovery failure exits with 3") {
    // A three-pixel strip leaves no interior sample for the Laplacian.
    std::ofstream(dir / "thin.json") << R"({"phantom": {"background": {"mu": 0.05, "d": 0.125},
        "shapes": [{"kind": "rectangle", "min": [1.0, 1.0], "max": [1.1875, 4.0], "mu": 0.1, "d": 0.125}]},
        "grid": {"fine": 160, "coarse": 80}, "mode": "analytic", "analytic_partition": "truth", "out": "t"})";
    CHECK(run_cli("run --config " + (dir / "thin.json").string()) == 3);
  }
}

}  // TEST_SUITE
