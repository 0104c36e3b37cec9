#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "skelforge/camera.hpp"
#include "skelforge/marching_cubes.hpp"
#include "skelforge/mesh.hpp"
#include "skelforge/ops.hpp"
#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"
#include "test_util.hpp"

using namespace skelforge;
namespace tu = testutil;

namespace {

Points make_points(const std::vector<Eigen::Vector3d>& v) {
  Points p(Eigen::Index(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) p.row(Eigen::Index(i)) = v[i];
  return p;
}

Points random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  Points p(Eigen::Index(n), 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = d(rng);
  return p;
}

// Brute-force Chamfer oracle, independent of the NN index.
double chamfer_oracle(const Points& a, const Points& b, Reduction red) {
  double sab = 0, sba = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    sab += best;
  }
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
    sba += best;
  }
  if (red == Reduction::Mean) return sab / double(a.rows()) + sba / double(b.rows());
  return sab + sba;
}

TriangleMesh tetrahedron() {
  TriangleMesh m;
  m.vertices = make_points({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

VoxelGrid torus_grid(int r, double R, double rho) {
  VoxelGrid g(r);
  const double h = g.voxel_size();
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        const Eigen::Vector3d c = g.center(x, y, z);
        const double q = std::hypot(std::hypot(c.x(), c.y()) - R, c.z()) - rho;
        g.at(x, y, z) = std::clamp(0.5 - q / (2 * h), 0.0, 1.0);
      }
  return g;
}

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

}  // namespace

TEST_CASE("chamfer on singletons is twice the squared distance") {
  Points a = make_points({{0, 0, 0}});
  Points b = make_points({{0.3, 0, 0}});
  ChamferResult r = chamfer_plain(a, b, Reduction::Sum);
  CHECK(r.value == doctest::Approx(2 * 0.09).epsilon(1e-12));
  CHECK(r.nn_ab == std::vector<int>{0});
  CHECK(r.nn_ba == std::vector<int>{0});
  CHECK(chamfer_plain(a, b, Reduction::Mean).value == doctest::Approx(r.value).epsilon(1e-12));
}

TEST_CASE("chamfer is symmetric and matches the brute-force oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    Points a = random_points(17 + trial, rng);
    Points b = random_points(23, rng);
    for (Reduction red : {Reduction::Sum, Reduction::Mean}) {
      const double ab = chamfer_plain(a, b, red).value;
      const double ba = chamfer_plain(b, a, red).value;
      CHECK(std::abs(ab - ba) <= 1e-10);
      CHECK(std::abs(ab - chamfer_oracle(a, b, red)) <= 1e-10);
    }
  }
}

TEST_CASE("chamfer gradient matches finite differences") {
  std::mt19937_64 rng(5);
  Tensor a = tu::random_tensor({6, 3}, rng, -0.4, 0.4);
  Points b = random_points(9, rng);
  Tensor bt = points_to_tensor(b);
  for (Reduction red : {Reduction::Sum, Reduction::Mean}) {
    const double err = tu::max_grad_rel_error(a, [&] { return chamfer(a, bt, red); });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("weighted chamfer with unit weights equals plain sum chamfer bitwise") {
  std::mt19937_64 rng(7);
  Points pred = random_points(12, rng);
  Points gt = random_points(15, rng);
  const Eigen::VectorXd kappa = Eigen::VectorXd::Ones(15);
  CHECK(weighted_chamfer_plain(pred, gt, kappa) == chamfer_plain(pred, gt, Reduction::Sum).value);
}

TEST_CASE("weighted chamfer matches an explicit oracle") {
  std::mt19937_64 rng(9);
  Points pred = random_points(10, rng);
  Points gt = random_points(13, rng);
  Eigen::VectorXd kappa(13);
  for (int i = 0; i < 13; ++i) kappa(i) = 1 + (i % 3) * 2;
  // oracle: kappa weights terms indexed by the gt point on each side
  double expect = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < gt.rows(); ++j) {
      const double d = (pred.row(i) - gt.row(j)).squaredNorm();
      if (d < best) { best = d; arg = int(j); }
    }
    expect += kappa(arg) * best;
  }
  for (Eigen::Index j = 0; j < gt.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
      best = std::min(best, (pred.row(i) - gt.row(j)).squaredNorm());
    expect += kappa(j) * best;
  }
  CHECK(weighted_chamfer_plain(pred, gt, kappa) == doctest::Approx(expect).epsilon(1e-12));

  Tensor pt = points_to_tensor(pred);
  const double err = tu::max_grad_rel_error(pt, [&] {
    return weighted_chamfer(pt, points_to_tensor(gt), kappa);
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("laplacian regularizer matches its definition and finite differences") {
  Points p = make_points({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  std::vector<std::vector<int>> nb = {{1, 2}, {0}, {0}};
  // point 0 vs centroid (0.5,0.5,0): 0.5; points 1 and 2 vs point 0: 1 each
  CHECK(laplacian_plain(p, nb) == doctest::Approx(2.5).epsilon(1e-12));

  std::mt19937_64 rng(13);
  Tensor t = tu::random_tensor({5, 3}, rng);
  std::vector<std::vector<int>> graph = {{1}, {0, 2}, {1, 3}, {2, 4}, {3}};
  const double err = tu::max_grad_rel_error(t, [&] { return laplacian_reg(t, graph); });
  CHECK(err <= 1e-4);
}

TEST_CASE("curvature weights: flat plane stays 1, sharp crease gets the high weight") {
  PointSet plane;
  plane.points.resize(25, 3);
  plane.normals.emplace(25, 3);
  for (int i = 0; i < 25; ++i) {
    plane.points.row(i) = Eigen::Vector3d(0.1 * (i % 5), 0.1 * (i / 5), 0.0);
    plane.normals->row(i) = Eigen::Vector3d(0, 0, 1);
  }
  Eigen::VectorXd w = curvature_weights(plane, 8, 60.0, 5.0);
  for (int i = 0; i < 25; ++i) CHECK(w(i) == 1.0);

  // two perpendicular strips meeting at x = 0: every 4-NN neighborhood near the
  // crease mixes +z and +x normals (90 degrees > 60)
  PointSet crease;
  crease.points.resize(10, 3);
  crease.normals.emplace(10, 3);
  for (int i = 0; i < 5; ++i) {
    crease.points.row(i) = Eigen::Vector3d(-0.1 * (i + 1), 0, 0);
    crease.normals->row(i) = Eigen::Vector3d(0, 0, 1);
    crease.points.row(5 + i) = Eigen::Vector3d(0, 0, -0.1 * (i + 1));
    crease.normals->row(5 + i) = Eigen::Vector3d(1, 0, 0);
  }
  Eigen::VectorXd wc = curvature_weights(crease, 9, 60.0, 5.0);
  for (int i = 0; i < 10; ++i) CHECK(wc(i) == 5.0);
}

TEST_CASE("nearest-neighbor index agrees with brute force, ties to lowest index") {
  std::mt19937_64 rng(21);
  Points pts = random_points(64, rng);
  NearestNeighborIndex index(pts);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector3d q = random_points(1, rng).row(0);
    CHECK(index.nearest(q) == brute_force_nearest(pts, q));
  }
  Points twins = make_points({{0.2, 0, 0}, {-0.2, 0, 0}});
  CHECK(NearestNeighborIndex(twins).nearest({0, 0, 0}) == 0);
  CHECK(brute_force_nearest(twins, {0, 0, 0}) == 0);
}

TEST_CASE("tetrahedron mesh invariants") {
  TriangleMesh m = tetrahedron();
  m.validate();
  CHECK(m.edges().size() == 6);
  CHECK(euler_characteristic(m) == 2);
  CHECK(is_closed(m));
  CHECK(is_connected(m));
  CHECK(genus(m) == 0);
  CHECK(m.total_area() == doctest::Approx(1.5 + std::sqrt(3.0) / 2).epsilon(1e-12));
  auto adj = m.vertex_adjacency();
  REQUIRE(adj.size() == 4);
  for (const auto& n : adj) CHECK(n.size() == 3);
}

TEST_CASE("connected components and compact") {
  TriangleMesh two = tetrahedron();
  TriangleMesh shifted = tetrahedron();
  shifted.vertices.array() += 3.0;
  const int base = int(two.num_vertices());
  for (Eigen::Index i = 0; i < shifted.vertices.rows(); ++i) {
    two.vertices.conservativeResize(two.vertices.rows() + 1, 3);
    two.vertices.row(two.vertices.rows() - 1) = shifted.vertices.row(i);
  }
  for (auto f : shifted.faces) two.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  two.faces.pop_back();  // make the second component smaller (open)
  CHECK_FALSE(is_connected(two));
  CHECK(connected_components(two).size() == 2);
  TriangleMesh big = largest_component(two);
  CHECK(big.num_faces() == 4);
  CHECK(euler_characteristic(compact(big)) == 2);
}

TEST_CASE("marching cubes on a sphere grid is closed with Euler characteristic 2") {
  TriangleMesh m = marching_cubes(sphere_grid(24, 0.3));
  m.validate();
  CHECK(is_closed(m));
  CHECK(is_connected(m));
  CHECK(euler_characteristic(m) == 2);
  // vertices near the analytic radius
  for (Eigen::Index i = 0; i < m.vertices.rows(); ++i)
    CHECK(std::abs(m.vertices.row(i).norm() - 0.3) < 0.05);
}

TEST_CASE("marching cubes on a torus grid has genus 1") {
  TriangleMesh m = marching_cubes(torus_grid(32, 0.3, 0.1));
  CHECK(is_closed(m));
  CHECK(euler_characteristic(m) == 0);
  CHECK(genus(m) == 1);
}

TEST_CASE("single interior voxel produces a closed genus-0 surface") {
  VoxelGrid g(8);
  g.at(4, 4, 4) = 1.0;
  TriangleMesh m = marching_cubes(g);
  CHECK_FALSE(m.empty());
  CHECK(is_closed(m));
  CHECK(euler_characteristic(m) == 2);
}

TEST_CASE("iou oracle cases") {
  VoxelGrid a(4), b(4);
  a.at(0, 0, 0) = 1;
  a.at(1, 0, 0) = 1;
  b.at(1, 0, 0) = 1;
  b.at(2, 0, 0) = 1;
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  VoxelGrid empty(4);
  CHECK(iou(a, empty) == 0.0);
}

TEST_CASE("dilation of a single voxel: 7 with six-connectivity, 27 with full") {
  VoxelGrid g(9);
  g.at(4, 4, 4) = 1;
  CHECK(dilate(g, 1, Connectivity::Six).values.sum() == 7.0);
  CHECK(dilate(g, 1, Connectivity::TwentySix).values.sum() == 27.0);
  // composition: radius 2 equals two radius-1 passes
  VoxelGrid d2 = dilate(g, 2, Connectivity::Six);
  VoxelGrid d11 = dilate(dilate(g, 1, Connectivity::Six), 1, Connectivity::Six);
  CHECK((d2.values - d11.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d2.values.sum() == 25.0);  // 3D von Neumann ball of radius 2
}

TEST_CASE("fill_interior fills a hollow shell and is idempotent") {
  const int r = 12;
  VoxelGrid shell(r);
  for (int z = 3; z <= 8; ++z)
    for (int y = 3; y <= 8; ++y)
      for (int x = 3; x <= 8; ++x)
        if (x == 3 || x == 8 || y == 3 || y == 8 || z == 3 || z == 8) shell.at(x, y, z) = 1;
  VoxelGrid filled = fill_interior(shell);
  CHECK(filled.values.sum() == 216.0);  // full 6^3 block
  CHECK((fill_interior(filled).values - filled.values).cwiseAbs().maxCoeff() == 0.0);

  // puncture one wall voxel: outside air leaks in, nothing gets filled
  shell.at(5, 5, 3) = 0;
  VoxelGrid leaked = fill_interior(shell);
  CHECK(leaked.values.sum() == shell.values.sum());
}

TEST_CASE("binarize and max-pool downsample") {
  VoxelGrid g(4);
  g.at(0, 0, 0) = 0.7;
  g.at(1, 1, 1) = 0.2;
  g.at(3, 3, 3) = 1.0;
  VoxelGrid b = binarize(g);
  CHECK(b.at(0, 0, 0) == 1.0);
  CHECK(b.at(1, 1, 1) == 0.0);
  VoxelGrid d = downsample_grid(g);
  CHECK(d.res == 2);
  CHECK(d.at(0, 0, 0) == 0.7);
  CHECK(d.at(1, 1, 1) == 1.0);
  CHECK(d.at(1, 0, 0) == 0.0);
}

TEST_CASE("surface sampling is area proportional and stays on the surface") {
  TriangleMesh m;
  m.vertices = make_points({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {3, 0, 1}, {0, 3, 1}, {-3, 0, 1}});
  m.faces = {{0, 1, 2}, {3, 4, 5}};  // areas 0.5 and 9
  SurfaceSamples s = sample_surface(m, 4000, 3);
  REQUIRE(s.points.size() == 4000);
  REQUIRE(s.points.normals.has_value());
  int big = 0;
  for (std::size_t i = 0; i < 4000; ++i) {
    if (s.face[i] == 1) ++big;
    // every sample satisfies its face's plane equation
    const auto& f = m.faces[std::size_t(s.face[i])];
    const Eigen::Vector3d n = m.face_normal(std::size_t(s.face[i]));
    const Eigen::Vector3d p = s.points.points.row(Eigen::Index(i));
    const Eigen::Vector3d a = m.vertices.row(f[0]);
    CHECK(std::abs(n.dot(p - a)) < 1e-12);
    CHECK(std::abs(s.points.normals->row(Eigen::Index(i)).norm() - 1.0) < 1e-12);
  }
  CHECK(double(big) / 4000 == doctest::Approx(9.0 / 9.5).epsilon(0.03));
}

TEST_CASE("voxelize_mesh of a sphere approximates its volume") {
  TriangleMesh m = marching_cubes(sphere_grid(32, 0.35));
  VoxelGrid v = voxelize_mesh(m, 32);
  const double vol = v.values.sum() / v.numel();
  const double expect = 4.0 / 3.0 * M_PI * 0.35 * 0.35 * 0.35;
  CHECK(vol == doctest::Approx(expect).epsilon(0.08));
}

TEST_CASE("vertex clustering caps the count without changing topology") {
  TriangleMesh m = marching_cubes(sphere_grid(32, 0.35));
  const std::size_t target = m.num_vertices() / 3;
  TriangleMesh c = cluster_vertices(m, target);
  CHECK(c.num_vertices() <= target);
  CHECK(euler_characteristic(c) == 2);
  CHECK(is_closed(c));
  // already small enough: unchanged
  TriangleMesh same = cluster_vertices(c, c.num_vertices());
  CHECK(same.num_vertices() == c.num_vertices());
}

TEST_CASE("point-triangle distance covers face, edge, and vertex regions") {
  const Eigen::Vector3d a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK(point_triangle_distance({0.2, 0.2, 0.5}, a, b, c) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(point_triangle_distance({0.5, -1, 0}, a, b, c) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(point_triangle_distance({-3, -4, 0}, a, b, c) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("inside test on a voxelized sphere") {
  TriangleMesh m = marching_cubes(sphere_grid(24, 0.3));
  CHECK(point_inside_mesh(m, {0, 0, 0}));
  CHECK(point_inside_mesh(m, {0.2, 0, 0.1}));
  CHECK_FALSE(point_inside_mesh(m, {0.45, 0, 0}));
  CHECK_FALSE(point_inside_mesh(m, {0, 0.4, 0.2}));
  CHECK(distance_to_mesh(m, {0, 0, 0}) == doctest::Approx(0.3).epsilon(0.1));
}

TEST_CASE("OBJ round trip preserves geometry and connectivity") {
  TriangleMesh m = tetrahedron();
  const std::string path = "test_roundtrip.obj";
  save_obj(m, path);
  TriangleMesh back = load_obj(path);
  std::remove(path.c_str());
  REQUIRE(back.num_vertices() == 4);
  REQUIRE(back.faces == m.faces);
  CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("PLY round trip preserves points, normals, and labels") {
  PointSet ps;
  ps.points = make_points({{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.25}});
  ps.normals = make_points({{1, 0, 0}, {0, 0, 1}});
  ps.labels = std::vector<SkelLabel>{SkelLabel::Curve, SkelLabel::Sheet};
  const std::string path = "test_roundtrip.ply";
  save_ply(ps, path);
  PointSet back = load_ply(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == 2);
  CHECK((back.points - ps.points).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(back.normals.has_value());
  CHECK((*back.normals - *ps.normals).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(back.labels.has_value());
  CHECK(*back.labels == *ps.labels);
}

TEST_CASE("SKV volume round trip") {
  std::mt19937_64 rng(2);
  VoxelGrid g(6);
  std::uniform_real_distribution<double> d(0, 1);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values(i) = d(rng);
  const std::string path = "test_roundtrip.skv";
  save_skv(g, path);
  VoxelGrid back = load_skv(path);
  std::remove(path.c_str());
  REQUIRE(back.res == 6);
  CHECK((back.values - g.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("pinhole projection of a centered point lands on the principal point") {
  Camera cam;
  cam.fx = cam.fy = 10;
  cam.cx = cam.cy = 5;
  cam.width = cam.height = 10;
  cam.translation = {0, 0, 2};
  Points pts = make_points({{0, 0, 0}, {0.2, 0, 0}, {0, 0, -3}});
  Projection pr = project_vertices(cam, pts);
  CHECK(pr.pixels(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(pr.pixels(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(pr.pixels(1, 0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(pr.valid[0]);
  CHECK_FALSE(pr.valid[2]);  // behind the camera

  Camera look = Camera::look_at({1.2, 0, 0}, {0, 0, 0}, 60, 64, 64);
  look.validate();
  Projection pc = project_vertices(look, make_points({{0, 0, 0}}));
  CHECK(pc.pixels(0, 0) == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(pc.pixels(0, 1) == doctest::Approx(32.0).epsilon(1e-9));
}

TEST_CASE("bilinear sampling: exact values and gradients") {
  Tensor map = Tensor::from_values({1, 2, 2}, {0, 1, 2, 3});
  Tensor mid = bilinear_sample(map, Tensor::from_values({1, 2}, {0.5, 0.5}));
  CHECK(mid.value(0) == doctest::Approx(1.5).epsilon(1e-12));
  Tensor corner = bilinear_sample(map, Tensor::from_values({1, 2}, {1.0, 0.0}));
  CHECK(corner.value(0) == doctest::Approx(1.0).epsilon(1e-12));
  // out-of-range coordinates clamp to the border
  Tensor clamped = bilinear_sample(map, Tensor::from_values({1, 2}, {9.0, 9.0}));
  CHECK(clamped.value(0) == doctest::Approx(3.0).epsilon(1e-12));

  std::mt19937_64 rng(31);
  Tensor fm = tu::random_tensor({3, 5, 4}, rng);
  Tensor coords = tu::random_tensor({6, 2}, rng, 0.3, 2.7);
  const double em = tu::max_grad_rel_error(fm, [&] {
    return ops::sum_all(ops::mul(bilinear_sample(fm, coords), bilinear_sample(fm, coords)));
  });
  CHECK(em <= 1e-4);
  const double ec = tu::max_grad_rel_error(coords, [&] {
    return ops::sum_all(ops::mul(bilinear_sample(fm, coords), bilinear_sample(fm, coords)));
  });
  CHECK(ec <= 1e-4);
}
