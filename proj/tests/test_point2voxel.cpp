#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "skelforge/ops.hpp"
#include "skelforge/point2voxel.hpp"
#include "test_util.hpp"

using namespace skelforge;
namespace tu = testutil;

namespace {

Points random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.45, 0.45);
  Points p(Eigen::Index(n), 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = d(rng);
  return p;
}

}  // namespace

TEST_CASE("truncation radius solves exp(-M rho^2) = tolerance") {
  P2VConfig cfg;
  CHECK(std::exp(-cfg.scaling * cfg.truncation_radius() * cfg.truncation_radius()) ==
        doctest::Approx(cfg.tolerance).epsilon(1e-12));
  CHECK(cfg.truncation_radius() == doctest::Approx(1.17547).epsilon(1e-4));
}

TEST_CASE("a point on a voxel center rasterizes to exactly 1") {
  P2VConfig cfg;
  cfg.resolution = 16;
  VoxelGrid probe(16);
  Points p(1, 3);
  p.row(0) = probe.center(4, 7, 9);
  VoxelGrid g = point2voxel_plain(p, cfg);
  CHECK(g.at(4, 7, 9) == 1.0);
}

TEST_CASE("known offset gives exp(-0.1)") {
  P2VConfig cfg;
  cfg.resolution = 10;  // voxel size 0.1: adjacent centers are 0.1 apart
  VoxelGrid probe(10);
  Points p(1, 3);
  p.row(0) = probe.center(5, 5, 5);
  VoxelGrid g = point2voxel_plain(p, cfg);
  CHECK(g.at(6, 5, 5) == doctest::Approx(std::exp(-0.1)).epsilon(1e-12));
  CHECK(std::exp(-0.1) == doctest::Approx(0.904837418).epsilon(1e-9));
  CHECK(g.at(5, 5, 7) == doctest::Approx(std::exp(-10 * 0.04)).epsilon(1e-12));
}

TEST_CASE("truncated output matches the exact evaluation within tolerance") {
  std::mt19937_64 rng(2);
  P2VConfig cfg;
  cfg.resolution = 32;
  for (int trial = 0; trial < 3; ++trial) {
    Points p = random_points(20 + 10 * trial, rng);
    VoxelGrid fast = point2voxel_plain(p, cfg);
    VoxelGrid exact = point2voxel_exact(p, cfg);
    CHECK((fast.values - exact.values).cwiseAbs().maxCoeff() < cfg.tolerance);
  }
}

TEST_CASE("aggressive tolerance truncates far voxels to zero") {
  P2VConfig cfg;
  cfg.resolution = 16;
  cfg.tolerance = 0.5;  // rho ~ 0.26
  VoxelGrid probe(16);
  Points p(1, 3);
  p.row(0) = probe.center(2, 2, 2);
  VoxelGrid g = point2voxel_plain(p, cfg);
  CHECK(g.at(13, 13, 13) == 0.0);
  CHECK(point2voxel_exact(p, cfg).at(13, 13, 13) > 0.0);
  CHECK(g.at(2, 2, 2) == 1.0);
}

TEST_CASE("adding points can only raise voxel values") {
  std::mt19937_64 rng(3);
  P2VConfig cfg;
  cfg.resolution = 16;
  Points a = random_points(10, rng);
  Points both(20, 3);
  both.topRows(10) = a;
  both.bottomRows(10) = random_points(10, rng);
  VoxelGrid ga = point2voxel_exact(a, cfg);
  VoxelGrid gb = point2voxel_exact(both, cfg);
  CHECK(((gb.values - ga.values).array() >= 0.0).all());
}

TEST_CASE("differentiable forward agrees with the plain rasterizer bitwise") {
  std::mt19937_64 rng(4);
  P2VConfig cfg;
  cfg.resolution = 12;
  Points p = random_points(15, rng);
  Tensor out = point2voxel(points_to_tensor(p), cfg);
  REQUIRE(out.shape() == Shape{12, 12, 12});
  VoxelGrid plain = point2voxel_plain(p, cfg);
  CHECK((out.values() - plain.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("point2voxel gradient matches finite differences") {
  std::mt19937_64 rng(5);
  P2VConfig cfg;
  cfg.resolution = 6;
  Tensor pts = tu::random_tensor({4, 3}, rng, -0.3, 0.3);
  const double err = tu::max_grad_rel_error(pts, [&] {
    Tensor v = point2voxel(pts, cfg);
    return ops::sum_all(ops::mul(v, v));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("moving a non-nearest point leaves a voxel's value unchanged") {
  P2VConfig cfg;
  cfg.resolution = 8;
  VoxelGrid probe(8);
  Points p(2, 3);
  p.row(0) = probe.center(2, 2, 2);
  p.row(1) = probe.center(6, 6, 6) + Eigen::Vector3d(0.01, 0, 0);
  const double before = point2voxel_plain(p, cfg).at(2, 2, 2);
  p.row(1) = probe.center(6, 6, 6) + Eigen::Vector3d(0.02, 0.01, 0);
  CHECK(point2voxel_plain(p, cfg).at(2, 2, 2) == before);
}

TEST_CASE("downsampling a rasterized grid keeps occupied regions occupied") {
  std::mt19937_64 rng(6);
  P2VConfig cfg;
  cfg.resolution = 16;
  Points p = random_points(8, rng);
  VoxelGrid g = point2voxel_plain(p, cfg);
  VoxelGrid d = downsample_grid(g);
  REQUIRE(d.res == 8);
  // max-pool semantics: each coarse cell holds the max of its 8 children
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        double m = 0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              m = std::max(m, g.at(2 * x + dx, 2 * y + dy, 2 * z + dz));
        CHECK(d.at(x, y, z) == m);
      }
}
