#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>

#include "skelforge/config.hpp"
#include "skelforge/evalmetrics.hpp"
#include "skelforge/marching_cubes.hpp"

using namespace skelforge;

namespace {

VoxelGrid sphere_grid(int r, double rad) {
  VoxelGrid g(r);
  const double h = g.voxel_size();
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        const double q = g.center(x, y, z).norm() - rad;
        g.at(x, y, z) = std::clamp(0.5 - q / (2 * h), 0.0, 1.0);
      }
  return g;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(SKELFORGE_BIN) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("defaults survive a serialization round trip") {
  RunConfig def;
  RunConfig back = config_from_json_text(config_to_json_text(def));
  CHECK(back.seed == def.seed);
  CHECK(back.model.alpha == def.model.alpha);
  CHECK(back.model.lambda2 == def.model.lambda2);
  CHECK(back.model.global_up == def.model.global_up);
  CHECK(back.train.skeleton_steps == def.train.skeleton_steps);
  CHECK(back.eval.cd_samples == def.eval.cd_samples);
  CHECK(back.dataset.shapes == def.dataset.shapes);
}

TEST_CASE("documented default hyperparameters") {
  RunConfig def;
  CHECK(def.model.alpha == 0.2);
  CHECK(def.model.beta == 1.0);
  CHECK(def.model.scaling_m == 10.0);
  CHECK(def.model.lambda1 == 0.7);
  CHECK(def.model.lambda2 == 3e-4);
  CHECK(def.model.epsilon == 0.1);
  CHECK(def.model.curve_primitives == 20);
  CHECK(def.model.curve_samples == 64);
  CHECK(def.model.sheet_grid == 8);
  CHECK(def.model.code_dim == 512);
  CHECK(def.eval.cd_samples == 10000);
  CHECK(def.eval.iou_resolution == 64);
}

TEST_CASE("unknown keys and type mismatches are rejected") {
  CHECK_THROWS_AS((void)config_from_json_text("{\"mode\": 3}"), ConfigError);
  CHECK_THROWS_AS((void)config_from_json_text("{\"model\": {\"alhpa\": 0.2}}"), ConfigError);
  CHECK_THROWS_AS((void)config_from_json_text("{\"model\": {\"alpha\": \"high\"}}"), ConfigError);
  CHECK_THROWS_AS((void)config_from_json_text("not json"), ConfigError);
  CHECK_NOTHROW((void)config_from_json_text("{\"model\": {\"alpha\": 0.5}}"));
}

TEST_CASE("dotted-path overrides reach nested fields") {
  RunConfig cfg = config_from_json_text(
      "{}", {"model.alpha=0.05", "train.skeleton_steps=7", "data_dir=elsewhere",
             "dataset.shapes=[\"torus\"]"});
  CHECK(cfg.model.alpha == 0.05);
  CHECK(cfg.train.skeleton_steps == 7);
  CHECK(cfg.data_dir == "elsewhere");
  CHECK(cfg.dataset.shapes == std::vector<std::string>{"torus"});
  CHECK_THROWS_AS((void)config_from_json_text("{}", {"model.typo=1"}), ConfigError);
  CHECK_THROWS_AS((void)config_from_json_text("{}", {"no_equals_sign"}), ConfigError);
}

TEST_CASE("config file loading") {
  {
    std::ofstream out("rt_config.json");
    out << "{\"seed\": 9, \"model\": {\"r\": 32}}";
  }
  RunConfig cfg = load_config("rt_config.json", {"model.beta=0"});
  std::remove("rt_config.json");
  CHECK(cfg.seed == 9);
  CHECK(cfg.model.r == 32);
  CHECK(cfg.model.beta == 0.0);
  CHECK_THROWS_AS((void)load_config("no_such_file.json"), ConfigError);
}

TEST_CASE("identical meshes score CD 0 and IoU 1") {
  TriangleMesh m = marching_cubes(sphere_grid(24, 0.3));
  EvalResult r = evaluate_mesh(m, m, 2000, 32);
  CHECK(r.cd == 0.0);
  CHECK(r.iou == 1.0);
}

TEST_CASE("chamfer metric follows the x1000 mean-of-squares convention") {
  TriangleMesh a = marching_cubes(sphere_grid(20, 0.3));
  TriangleMesh b = marching_cubes(sphere_grid(20, 0.2));
  const std::size_t n = 256;
  const std::uint64_t seed = 17;
  const Points pa = sample_surface(a, n, seed).points.points;
  const Points pb = sample_surface(b, n, seed).points.points;
  // brute-force oracle over the identical samplings
  double sab = 0, sba = 0;
  for (Eigen::Index i = 0; i < pa.rows(); ++i) {
    double best = 1e30;
    for (Eigen::Index j = 0; j < pb.rows(); ++j)
      best = std::min(best, (pa.row(i) - pb.row(j)).squaredNorm());
    sab += best;
  }
  for (Eigen::Index j = 0; j < pb.rows(); ++j) {
    double best = 1e30;
    for (Eigen::Index i = 0; i < pa.rows(); ++i)
      best = std::min(best, (pa.row(i) - pb.row(j)).squaredNorm());
    sba += best;
  }
  const double expect = 1000.0 * (sab / double(n) + sba / double(n));
  CHECK(chamfer_metric(a, b, n, seed) == doctest::Approx(expect).epsilon(1e-10));
  // smaller-inside-larger sphere: nonzero distance in both conventions
  CHECK(chamfer_metric(a, b, n, seed) > 0.0);
  CHECK(iou_metric(a, b, 32) < 1.0);
  CHECK(iou_metric(a, b, 32) > 0.0);
}

TEST_CASE("cli exit codes: config errors 2, missing artifacts 3") {
  {
    std::ofstream out("cli_ok.json");
    out << "{\"data_dir\": \"cli_missing_data\", \"run_dir\": \"cli_missing_run\"}";
  }
  {
    std::ofstream out("cli_bad.json");
    out << "{\"model\": {\"unknown_knob\": 1}}";
  }
  CHECK(run_cli("train-skeleton --config cli_bad.json") == 2);
  CHECK(run_cli("train-skeleton --config no_such_config.json") == 2);
  CHECK(run_cli("train-skeleton --config cli_ok.json --set model.typo=1") == 2);
  // valid config, but the dataset was never generated
  CHECK(run_cli("train-skeleton --config cli_ok.json") == 3);
  CHECK(run_cli("eval --config cli_ok.json") == 3);
  std::remove("cli_ok.json");
  std::remove("cli_bad.json");
}
