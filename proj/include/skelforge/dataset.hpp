#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelforge/camera.hpp"
#include "skelforge/mesh.hpp"
#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

struct RenderedView {
  Tensor image;  // [3,H,W] in [0,1]
  Camera camera;
};

/// One training sample: watertight surface mesh, rendered views with known
/// cameras, labeled ground-truth skeleton, its dilated volume, and a dense
/// surface sampling for loss/metric targets.
struct ShapeSample {
  TriangleMesh mesh;
  std::vector<RenderedView> views;
  PointSet gt_skeleton_points;     // labels partition into Curve / Sheet
  VoxelGrid gt_skeleton_volume;
  PointSet gt_surface_samples;     // with normals
};

enum class ShapeKind { Torus, BoxFrame, MultiLegTable, Sphere };

ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);

struct ShapeParams {
  // Torus
  double torus_major = 0.3;
  double torus_minor = 0.1;
  // Sphere
  double sphere_radius = 0.35;
  // BoxFrame
  double frame_half = 0.28;       // cube half-extent of the frame
  double frame_thickness = 0.04;  // bar radius
  // MultiLegTable
  int table_legs = 4;
  double table_top_half = 0.3;
  double table_top_thickness = 0.05;
  double table_leg_half = 0.028;

  int mesh_resolution = 64;       // marching-cubes lattice for the surface
  int volume_resolution = 64;     // gt skeletal volume resolution
  int dilation_radius = -1;       // <0: scaled default (2 at r=256)
  int num_views = 6;
  int image_size = 64;
  std::size_t surface_samples = 10000;
};

/// Deterministic for a fixed seed; mesh is watertight by construction
/// (isosurface of an analytic signed distance on a padded lattice).
ShapeSample generate_shape(ShapeKind kind, const ShapeParams& params, std::uint64_t seed);

/// Move surface points along the reverse normal direction until the distance
/// to the nearest opposite-facing surface point stops decreasing.
PointSet sink_to_skeleton(const PointSet& surface, int steps, double step_size);

/// PCA over each point's k nearest neighbors; Curve when l2/l1 < ratio_thresh.
std::vector<SkelLabel> classify_curve_sheet(const PointSet& skeleton, int k = 16,
                                            double ratio_thresh = 0.2);

/// Quantize points into an r-grid, fill the interior, then dilate.
VoxelGrid build_gt_volume(const PointSet& skeleton, int r, int dilation_radius,
                          Connectivity conn = Connectivity::Six);

/// Dilation default scaled with resolution: 2 at r=256, at least 1.
int default_dilation_radius(int r);

/// Flat-shaded silhouette render of a mesh (z-buffer rasterization).
Tensor render_silhouette(const TriangleMesh& mesh, const Camera& cam);

// ---- sample directory I/O ----
void save_sample(const ShapeSample& s, const std::string& dir);
ShapeSample load_sample(const std::string& dir);

void save_image(const Tensor& image, const std::string& path);  // SKI1 raw float
Tensor load_image(const std::string& path);
void save_camera_json(const Camera& cam, const std::string& path);
Camera load_camera_json(const std::string& path);

/// JSON-lines manifest listing sample directories.
void write_manifest(const std::vector<std::string>& dirs, const std::string& path);
std::vector<std::string> read_manifest(const std::string& path);

}  // namespace skelforge
