#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "skelforge/dataset.hpp"
#include "skelforge/marching_cubes.hpp"

using namespace skelforge;

namespace {

ShapeParams small_params() {
  ShapeParams p;
  p.mesh_resolution = 48;
  p.volume_resolution = 48;
  p.num_views = 2;
  p.image_size = 32;
  p.surface_samples = 2000;
  return p;
}

}  // namespace

TEST_CASE("shape kind names round trip") {
  for (ShapeKind k : {ShapeKind::Torus, ShapeKind::BoxFrame, ShapeKind::MultiLegTable,
                      ShapeKind::Sphere})
    CHECK(shape_kind_from_string(to_string(k)) == k);
  CHECK_THROWS(shape_kind_from_string("pyramid"));
}

TEST_CASE("sinking two opposite planes meets at the midplane") {
  // two horizontal planes at z = +-0.1, normals pointing outward
  PointSet surf;
  const int side = 6;
  surf.points.resize(2 * side * side, 3);
  surf.normals.emplace(2 * side * side, 3);
  int row = 0;
  for (int sgn : {1, -1})
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j, ++row) {
        surf.points.row(row) = Eigen::Vector3d(0.05 * i, 0.05 * j, 0.1 * sgn);
        surf.normals->row(row) = Eigen::Vector3d(0, 0, sgn);
      }
  PointSet sunk = sink_to_skeleton(surf, 50, 0.01);
  for (Eigen::Index i = 0; i < sunk.points.rows(); ++i) {
    CHECK(std::abs(sunk.points(i, 2)) < 0.02);
    CHECK(sunk.points(i, 0) == surf.points(i, 0));  // motion is along the normal only
    CHECK(sunk.points(i, 1) == surf.points(i, 1));
  }
  // zero steps: identity
  PointSet frozen = sink_to_skeleton(surf, 0, 0.01);
  CHECK((frozen.points - surf.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("curve/sheet classification separates lines from planes") {
  PointSet mixed;
  mixed.points.resize(60, 3);
  for (int i = 0; i < 24; ++i)  // collinear segment along x, far from the sheet
    mixed.points.row(i) = Eigen::Vector3d(0.01 * i, 0, 2.0);
  for (int i = 0; i < 36; ++i)  // planar grid in z=0
    mixed.points.row(24 + i) = Eigen::Vector3d(0.05 * (i % 6), 0.05 * (i / 6), 0.0);
  std::vector<SkelLabel> labels = classify_curve_sheet(mixed, 8);
  for (int i = 0; i < 24; ++i) CHECK(labels[std::size_t(i)] == SkelLabel::Curve);
  // grid-boundary neighborhoods degenerate toward a line; check the interior
  for (int i = 0; i < 36; ++i) {
    const int gx = i % 6, gy = i / 6;
    if (gx == 0 || gx == 5 || gy == 0 || gy == 5) continue;
    CHECK(labels[std::size_t(24 + i)] == SkelLabel::Sheet);
  }

  // labels are invariant under a rigid motion (away from exact k-NN distance
  // ties, which rotation round-off can re-order)
  Eigen::Matrix3d rot = Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, 3).normalized()).matrix();
  PointSet moved;
  moved.points = (mixed.points * rot.transpose()).rowwise() + Eigen::RowVector3d(0.3, -0.2, 0.1);
  std::vector<SkelLabel> rotated = classify_curve_sheet(moved, 8);
  for (int i = 0; i < 24; ++i) CHECK(rotated[std::size_t(i)] == labels[std::size_t(i)]);
  for (int i = 0; i < 36; ++i) {
    const int gx = i % 6, gy = i / 6;
    if (gx == 0 || gx == 5 || gy == 0 || gy == 5) continue;
    CHECK(rotated[std::size_t(24 + i)] == labels[std::size_t(24 + i)]);
  }

  CHECK_THROWS(classify_curve_sheet(mixed, 3));
  PointSet tiny;
  tiny.points = mixed.points.topRows(4);
  CHECK_THROWS(classify_curve_sheet(tiny, 8));
}

TEST_CASE("gt volume of a single point is a dilated occupied voxel") {
  PointSet one;
  one.points.resize(1, 3);
  one.points.row(0) = Eigen::Vector3d(0, 0, 0);
  VoxelGrid v0 = build_gt_volume(one, 16, 0);
  CHECK(v0.values.sum() == 1.0);
  VoxelGrid v1 = build_gt_volume(one, 16, 1);
  CHECK(v1.values.sum() == 7.0);
  VoxelGrid v2 = build_gt_volume(one, 16, 2);
  CHECK(v2.values.sum() == 25.0);
  // monotone: larger radius is a superset
  CHECK(((v2.values - v1.values).array() >= 0.0).all());
}

TEST_CASE("dilation default scales with resolution") {
  CHECK(default_dilation_radius(256) == 2);
  CHECK(default_dilation_radius(128) == 1);
  CHECK(default_dilation_radius(64) == 1);
}

TEST_CASE("procedural torus: watertight genus-1 surface, curve-only skeleton") {
  ShapeSample s = generate_shape(ShapeKind::Torus, small_params(), 42);
  s.mesh.validate();
  CHECK(is_closed(s.mesh));
  CHECK(is_connected(s.mesh));
  CHECK(genus(s.mesh) == 1);

  REQUIRE(s.gt_skeleton_points.labels.has_value());
  for (SkelLabel l : *s.gt_skeleton_points.labels) CHECK(l == SkelLabel::Curve);
  // skeletal points lie on the analytic center circle
  for (Eigen::Index i = 0; i < s.gt_skeleton_points.points.rows(); ++i) {
    const Eigen::Vector3d p = s.gt_skeleton_points.points.row(i);
    CHECK(std::abs(std::hypot(p.x(), p.y()) - 0.3) < 1e-9);
    CHECK(p.z() == 0.0);
  }

  // skeletal volume keeps the loop topology
  TriangleMesh skel = largest_component(marching_cubes(s.gt_skeleton_volume));
  CHECK(is_closed(skel));
  CHECK(euler_characteristic(skel) == 0);

  REQUIRE(s.views.size() == 2);
  for (const RenderedView& v : s.views) {
    CHECK(v.image.ndim() == 3);
    CHECK(v.image.dim(1) == 32);
    CHECK(v.image.values().maxCoeff() > 0.0);  // shape visible
    v.camera.validate();
  }
  REQUIRE(s.gt_surface_samples.size() == 2000);
  REQUIRE(s.gt_surface_samples.normals.has_value());
}

TEST_CASE("procedural sphere: genus 0, sheet-only skeleton") {
  ShapeSample s = generate_shape(ShapeKind::Sphere, small_params(), 1);
  CHECK(is_closed(s.mesh));
  CHECK(euler_characteristic(s.mesh) == 2);
  REQUIRE(s.gt_skeleton_points.labels.has_value());
  for (SkelLabel l : *s.gt_skeleton_points.labels) CHECK(l == SkelLabel::Sheet);
  TriangleMesh skel = largest_component(marching_cubes(s.gt_skeleton_volume));
  CHECK(euler_characteristic(skel) == 2);
}

TEST_CASE("procedural box frame: curve-only skeleton near the frame edges") {
  ShapeSample s = generate_shape(ShapeKind::BoxFrame, small_params(), 3);
  CHECK(is_closed(s.mesh));
  REQUIRE(s.gt_skeleton_points.labels.has_value());
  for (SkelLabel l : *s.gt_skeleton_points.labels) CHECK(l == SkelLabel::Curve);
  // all skeletal points sit on the frame wire lattice: two coords at +-frame_half
  for (Eigen::Index i = 0; i < s.gt_skeleton_points.points.rows(); ++i) {
    const Eigen::Vector3d p = s.gt_skeleton_points.points.row(i).cwiseAbs();
    int on_extent = 0;
    for (int a = 0; a < 3; ++a)
      if (std::abs(p(a) - 0.28) < 1e-9) ++on_extent;
    CHECK(on_extent >= 2);
  }
}

TEST_CASE("procedural table mixes sheet top with curve legs") {
  ShapeSample s = generate_shape(ShapeKind::MultiLegTable, small_params(), 4);
  CHECK(is_closed(s.mesh));
  REQUIRE(s.gt_skeleton_points.labels.has_value());
  int curves = 0, sheets = 0;
  for (SkelLabel l : *s.gt_skeleton_points.labels) (l == SkelLabel::Curve ? curves : sheets)++;
  CHECK(curves > 0);
  CHECK(sheets > 0);
}

TEST_CASE("shape generation is deterministic in the seed") {
  ShapeParams p = small_params();
  p.num_views = 1;
  p.surface_samples = 500;
  ShapeSample a = generate_shape(ShapeKind::Torus, p, 7);
  ShapeSample b = generate_shape(ShapeKind::Torus, p, 7);
  CHECK((a.mesh.vertices - b.mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.mesh.faces == b.mesh.faces);
  CHECK((a.gt_surface_samples.points - b.gt_surface_samples.points).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.views[0].image.values() - b.views[0].image.values()).cwiseAbs().maxCoeff() == 0.0);
  ShapeSample c = generate_shape(ShapeKind::Torus, p, 8);
  CHECK((a.gt_surface_samples.points - c.gt_surface_samples.points).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("silhouette render: object pixels lit, background black") {
  ShapeParams p = small_params();
  ShapeSample s = generate_shape(ShapeKind::Sphere, p, 2);
  Tensor img = render_silhouette(s.mesh, s.views[0].camera);
  const std::size_t hw = img.dim(1) * img.dim(2);
  std::size_t lit = 0;
  for (std::size_t i = 0; i < hw; ++i)
    if (img.value(i) > 0) ++lit;
  CHECK(lit > hw / 20);   // sphere covers a visible fraction
  CHECK(lit < hw);        // some background remains
  for (Eigen::Index i = 0; i < img.values().size(); ++i) {
    CHECK(img.values()(i) >= 0.0);
    CHECK(img.values()(i) <= 1.0);
  }
}

TEST_CASE("image, camera, and sample directory round trips") {
  std::mt19937_64 rng(5);
  Tensor img = Tensor::zeros({3, 4, 5});
  std::uniform_real_distribution<double> d(0, 1);
  for (Eigen::Index i = 0; i < img.values().size(); ++i) img.values()(i) = d(rng);
  save_image(img, "rt.ski");
  Tensor back = load_image("rt.ski");
  std::remove("rt.ski");
  REQUIRE(back.shape() == img.shape());
  CHECK((back.values() - img.values()).cwiseAbs().maxCoeff() < 1e-6);

  Camera cam = Camera::look_at({1.1, 0.2, 0.4}, {0, 0, 0}, 70, 64, 64);
  save_camera_json(cam, "rt_cam.json");
  Camera cb = load_camera_json("rt_cam.json");
  std::remove("rt_cam.json");
  CHECK(cb.fx == doctest::Approx(cam.fx).epsilon(1e-12));
  CHECK((cb.rotation - cam.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cb.translation - cam.translation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(cb.width == 64);

  ShapeParams p = small_params();
  p.num_views = 1;
  p.surface_samples = 300;
  ShapeSample s = generate_shape(ShapeKind::Torus, p, 6);
  const std::string dir = "rt_sample";
  save_sample(s, dir);
  ShapeSample loaded = load_sample(dir);
  std::filesystem::remove_all(dir);
  CHECK(loaded.mesh.faces == s.mesh.faces);
  CHECK((loaded.mesh.vertices - s.mesh.vertices).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(loaded.views.size() == 1);
  CHECK(loaded.gt_skeleton_volume.res == s.gt_skeleton_volume.res);
  CHECK((loaded.gt_skeleton_volume.values - s.gt_skeleton_volume.values).cwiseAbs().maxCoeff() <
        1e-6);
  REQUIRE(loaded.gt_skeleton_points.labels.has_value());
  CHECK(*loaded.gt_skeleton_points.labels == *s.gt_skeleton_points.labels);
  CHECK(loaded.gt_surface_samples.size() == 300);
}

TEST_CASE("manifest round trip") {
  const std::vector<std::string> dirs = {"data/a", "data/b", "data/c"};
  write_manifest(dirs, "rt_manifest.jsonl");
  std::vector<std::string> back = read_manifest("rt_manifest.jsonl");
  std::remove("rt_manifest.jsonl");
  CHECK(back == dirs);
}
