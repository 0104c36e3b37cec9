#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "skelforge/refine.hpp"
#include "test_util.hpp"

using namespace skelforge;
namespace tu = testutil;

namespace {

RefinementConfig tiny_config(int r = 64) {
  RefinementConfig cfg;
  cfg.r = r;
  cfg.global_down = {4, 8, 8, 8};
  cfg.global_up = {8, 4, 4, 2};
  cfg.local_down = {4, 8, 8, 8};
  cfg.local_up = {8, 4, 4, 4, 2};
  cfg.feature_volume_channels = 4;
  return cfg;
}

}  // namespace

TEST_CASE("resolution arithmetic at r=256 matches the published configuration") {
  RefinementConfig cfg;
  cfg.r = 256;
  cfg.validate();
  CHECK(cfg.r_half() == 128);      // U_in side
  CHECK(cfg.down_res() == 64);     // U_in-down / U_out-down side
  CHECK(cfg.window_in() == 36);    // P_in side
  CHECK(cfg.window_out() == 72);   // P_out side
  CHECK(cfg.stride() == 32);
  SubvolumeTiling t = plan_tiling(cfg);
  CHECK(t.axis_offsets == std::vector<int>{0, 32, 64, 92});
  CHECK(t.windows.size() == 64);
  CHECK(t.s_in == 36);
  CHECK(t.s_out == 72);
}

TEST_CASE("resolution arithmetic scales down to r=128 and r=64") {
  RefinementConfig c128;
  c128.r = 128;
  CHECK(c128.r_half() == 64);
  CHECK(c128.down_res() == 32);
  CHECK(c128.window_in() == 20);
  CHECK(c128.window_out() == 40);
  CHECK(c128.stride() == 16);

  RefinementConfig c64 = tiny_config();
  c64.validate();
  CHECK(c64.r_half() == 32);
  CHECK(c64.down_res() == 16);
  CHECK(c64.window_in() == 12);
  CHECK(c64.window_out() == 24);
  CHECK(c64.stride() == 8);
  CHECK(c64.feature_volume_res() == 8);
}

TEST_CASE("config validation rejects bad resolutions and channel plans") {
  RefinementConfig bad = tiny_config();
  bad.r = 30;
  CHECK_THROWS(bad.validate());
  bad = tiny_config();
  bad.global_up = {8, 4, 2};  // wrong length
  CHECK_THROWS(bad.validate());
  bad = tiny_config();
  bad.local_up.back() = 3;  // final layer must emit two logits
  CHECK_THROWS(bad.validate());
}

TEST_CASE("tiling covers every voxel with consistent offsets") {
  SubvolumeTiling t = plan_tiling(tiny_config());
  CHECK(t.axis_offsets == std::vector<int>{0, 8, 16, 20});
  CHECK(t.windows.size() == 64);
  for (const SubvolumeWindow& w : t.windows)
    for (int a = 0; a < 3; ++a) {
      CHECK(w.out_offset[a] == 2 * w.in_offset[a]);
      CHECK(w.in_offset[a] + t.s_in <= 32);
      CHECK(w.out_offset[a] + t.s_out <= t.r);
    }
  CHECK(t.min_coverage() >= 1);
  CHECK(t.max_coverage() >= t.min_coverage());
  // axis coverage actually counts covering windows per output slice
  for (int x = 0; x < t.r; ++x) {
    int cover = 0;
    for (int o : t.axis_offsets)
      if (x >= 2 * o && x < 2 * o + t.s_out) ++cover;
    CHECK(t.axis_coverage[std::size_t(x)] == cover);
  }
}

TEST_CASE("feature volume net emits the configured shape") {
  std::mt19937_64 rng(1);
  ParamStore ps;
  RefinementConfig cfg = tiny_config();
  FeatureVolumeNet fv = FeatureVolumeNet::create(ps, "fv", 6, cfg, rng);
  Tensor out = fv(tu::random_tensor({6}, rng));
  CHECK(out.shape() == Shape{4, 8, 8, 8});
}

TEST_CASE("global stream maps the coarse grid to same-size probabilities") {
  std::mt19937_64 rng(2);
  ParamStore ps;
  RefinementConfig cfg = tiny_config();
  GlobalStream gs = GlobalStream::create(ps, "g", cfg, rng);
  const std::size_t n = std::size_t(cfg.down_res());
  Tensor u = tu::random_tensor({1, n, n, n}, rng, 0, 1);
  Tensor feat = tu::random_tensor({4, n / 2, n / 2, n / 2}, rng);
  Tensor out = gs(u, feat);
  CHECK(out.shape() == Shape{n, n, n});
  CHECK(out.values().minCoeff() > 0.0);
  CHECK(out.values().maxCoeff() < 1.0);
  CHECK_THROWS(gs(tu::random_tensor({1, n / 2, n / 2, n / 2}, rng), feat));
}

TEST_CASE("local stream super-resolves a window by two") {
  std::mt19937_64 rng(3);
  ParamStore ps;
  RefinementConfig cfg = tiny_config();
  LocalStream ls = LocalStream::create(ps, "l", cfg, rng);
  const std::size_t s = std::size_t(cfg.window_in());
  Tensor p_in = tu::random_tensor({1, s, s, s}, rng, 0, 1);
  Tensor guide = tu::random_tensor({1, s / 2, s / 2, s / 2}, rng, 0, 1);
  Tensor out = ls(p_in, guide);
  CHECK(out.shape() == Shape{2 * s, 2 * s, 2 * s});
  CHECK(out.values().minCoeff() > 0.0);
  CHECK(out.values().maxCoeff() < 1.0);
  // fetch round trip produces the identical forward pass
  LocalStream again = LocalStream::fetch(ps, "l", cfg);
  CHECK((again(p_in, guide).values() - out.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("window extraction matches a manual crop") {
  std::mt19937_64 rng(4);
  RefinementConfig cfg = tiny_config();
  SubvolumeTiling t = plan_tiling(cfg);
  const std::size_t n = std::size_t(cfg.r_half());
  Tensor grid = tu::random_tensor({n, n, n}, rng);
  const std::size_t w = 13;
  Tensor win = extract_window(grid, t, w);
  REQUIRE(win.shape() == Shape{1, std::size_t(t.s_in), std::size_t(t.s_in), std::size_t(t.s_in)});
  const auto& off = t.windows[w].in_offset;
  for (int z = 0; z < t.s_in; ++z)
    for (int y = 0; y < t.s_in; ++y)
      for (int x = 0; x < t.s_in; ++x) {
        const std::size_t src =
            ((std::size_t(off[2] + z) * n) + std::size_t(off[1] + y)) * n + std::size_t(off[0] + x);
        const std::size_t dst = (std::size_t(z) * t.s_in + y) * std::size_t(t.s_in) + x;
        CHECK(win.value(dst) == grid.value(src));
      }

  const std::size_t m = std::size_t(cfg.down_res());
  Tensor coarse = tu::random_tensor({m, m, m}, rng);
  Tensor guide = extract_guidance(coarse, t, w);
  CHECK(guide.shape() ==
        Shape{1, std::size_t(t.s_in) / 2, std::size_t(t.s_in) / 2, std::size_t(t.s_in) / 2});
  CHECK(guide.value(0) == coarse.value(((std::size_t(off[2] / 2) * m) + std::size_t(off[1] / 2)) * m +
                                       std::size_t(off[0] / 2)));
}

TEST_CASE("stitching constant windows yields an exactly constant volume") {
  SubvolumeTiling t = plan_tiling(tiny_config());
  const std::size_t s3 = std::size_t(t.s_out) * t.s_out * t.s_out;
  std::vector<Tensor> windows;
  for (std::size_t i = 0; i < t.windows.size(); ++i)
    windows.push_back(Tensor::full({std::size_t(t.s_out), std::size_t(t.s_out), std::size_t(t.s_out)},
                                   0.5));
  Tensor out = stitch(t, windows);
  REQUIRE(out.shape() == Shape{std::size_t(t.r), std::size_t(t.r), std::size_t(t.r)});
  CHECK(out.values().minCoeff() == 0.5);
  CHECK(out.values().maxCoeff() == 0.5);
  (void)s3;
}

TEST_CASE("stitching is bitwise independent of window order") {
  std::mt19937_64 rng(5);
  SubvolumeTiling t = plan_tiling(tiny_config());
  std::vector<std::pair<int, Tensor>> pairs;
  for (std::size_t i = 0; i < t.windows.size(); ++i)
    pairs.emplace_back(int(i), tu::random_tensor({std::size_t(t.s_out), std::size_t(t.s_out),
                                                  std::size_t(t.s_out)},
                                                 rng, 0, 1));
  Tensor ordered = stitch(t, pairs);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  Tensor shuffled = stitch(t, pairs);
  CHECK((ordered.values() - shuffled.values()).cwiseAbs().maxCoeff() == 0.0);

  // guard rails
  std::vector<std::pair<int, Tensor>> dup = pairs;
  dup[0].first = dup[1].first;
  CHECK_THROWS(stitch(t, dup));
  std::vector<std::pair<int, Tensor>> missing(pairs.begin(), pairs.end() - 1);
  CHECK_THROWS(stitch(t, missing));
}

TEST_CASE("stitch averages overlaps and distributes gradients by inverse coverage") {
  std::mt19937_64 rng(6);
  SubvolumeTiling t = plan_tiling(tiny_config());
  std::vector<Tensor> windows;
  for (std::size_t i = 0; i < t.windows.size(); ++i) {
    Tensor w = tu::random_tensor({std::size_t(t.s_out), std::size_t(t.s_out), std::size_t(t.s_out)},
                                 rng, 0, 1);
    w.set_requires_grad(true);
    windows.push_back(w);
  }
  Tensor out = stitch(t, windows);

  // oracle at a few voxels: mean over covering windows
  std::mt19937_64 pick(7);
  std::uniform_int_distribution<int> coord(0, t.r - 1);
  for (int probe = 0; probe < 50; ++probe) {
    const int x = coord(pick), y = coord(pick), z = coord(pick);
    double sum = 0;
    int cover = 0;
    for (std::size_t w = 0; w < t.windows.size(); ++w) {
      const auto& o = t.windows[w].out_offset;
      if (x < o[0] || x >= o[0] + t.s_out || y < o[1] || y >= o[1] + t.s_out || z < o[2] ||
          z >= o[2] + t.s_out)
        continue;
      const std::size_t local =
          (std::size_t(z - o[2]) * t.s_out + std::size_t(y - o[1])) * std::size_t(t.s_out) +
          std::size_t(x - o[0]);
      sum += windows[w].value(local);
      ++cover;
    }
    REQUIRE(cover == t.coverage(x, y, z));
    const std::size_t flat = (std::size_t(z) * t.r + std::size_t(y)) * std::size_t(t.r) + x;
    CHECK(out.value(flat) == doctest::Approx(sum / cover).epsilon(1e-12));
  }

  // d(sum of output)/d(window voxel) = 1/coverage at that voxel
  backward(ops::sum_all(out));
  const auto& o0 = t.windows[0].out_offset;
  CHECK(windows[0].grad()(0) ==
        doctest::Approx(1.0 / t.coverage(o0[0], o0[1], o0[2])).epsilon(1e-12));
}

TEST_CASE("refine loss of a 0.5 grid against any target is ln 2") {
  VoxelGrid target(4);
  target.at(1, 2, 3) = 1;
  target.at(0, 0, 0) = 1;
  Tensor v = Tensor::full({4, 4, 4}, 0.5);
  CHECK(refine_loss(v, target).scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("refine loss matches a hand-rolled cross entropy and its gradient") {
  std::mt19937_64 rng(8);
  VoxelGrid target(3);
  std::bernoulli_distribution coin(0.4);
  for (Eigen::Index i = 0; i < target.values.size(); ++i) target.values(i) = coin(rng) ? 1.0 : 0.0;
  Tensor v = tu::random_tensor({3, 3, 3}, rng, 0.05, 0.95);
  double expect = 0;
  for (Eigen::Index i = 0; i < target.values.size(); ++i) {
    const double p = v.values()(i), y = target.values(i);
    expect -= y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  expect /= double(target.values.size());
  CHECK(refine_loss(v, target).scalar_value() == doctest::Approx(expect).epsilon(1e-12));

  const double err = tu::max_grad_rel_error(v, [&] { return refine_loss(v, target); });
  CHECK(err <= 1e-4);

  VoxelGrid wrong(4);
  CHECK_THROWS(refine_loss(v, wrong));
}

TEST_CASE("combined loss honors the beta switch") {
  Tensor phi = Tensor::from_values({}, {0.5});
  Tensor psi = Tensor::from_values({}, {0.25});
  Tensor ref = Tensor::from_values({}, {2.0});
  CHECK(skeletonnet_loss(phi, psi, ref, 0.0).scalar_value() == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(skeletonnet_loss(phi, psi, ref, 1.0).scalar_value() == doctest::Approx(2.75).epsilon(1e-12));
  CHECK(skeletonnet_loss(phi, psi, ref, 0.5).scalar_value() == doctest::Approx(1.75).epsilon(1e-12));
}
