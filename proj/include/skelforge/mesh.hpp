#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "skelforge/pointset.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

struct TriangleMesh {
  Points vertices;                       // T x 3
  std::vector<std::array<int, 3>> faces; // F x 3 vertex indices

  std::size_t num_vertices() const { return std::size_t(vertices.rows()); }
  std::size_t num_faces() const { return faces.size(); }
  bool empty() const { return faces.empty(); }

  /// Undirected edge list; each edge appears once.
  std::vector<std::array<int, 2>> edges() const;
  /// Per-vertex neighbor lists from the edge graph.
  std::vector<std::vector<int>> vertex_adjacency() const;

  Eigen::Vector3d face_normal(std::size_t f) const;
  double face_area(std::size_t f) const;
  double total_area() const;

  void validate() const;  // index bounds + no degenerate faces
};

int euler_characteristic(const TriangleMesh& m);
/// Requires a closed, connected mesh.
int genus(const TriangleMesh& m);
/// Every edge shared by exactly two faces.
bool is_closed(const TriangleMesh& m);
bool is_connected(const TriangleMesh& m);
std::vector<TriangleMesh> connected_components(const TriangleMesh& m);
TriangleMesh largest_component(const TriangleMesh& m);
/// Drops vertices not referenced by any face; remaps face indices.
TriangleMesh compact(const TriangleMesh& m);

/// Area-weighted surface sampling; points carry face normals. Also reports
/// the source face and barycentric coordinates of each sample.
struct SurfaceSamples {
  PointSet points;                       // with normals
  std::vector<int> face;                 // source face per sample
  std::vector<Eigen::Vector3d> barycentric;
};
SurfaceSamples sample_surface(const TriangleMesh& m, std::size_t n, std::uint64_t seed);

/// Surface rasterization followed by interior filling; used for mesh IoU.
VoxelGrid voxelize_mesh(const TriangleMesh& m, int res);

/// Merge vertices within lattice cells of the given size until the vertex
/// count is at or below `target`, refusing any merge that changes the Euler
/// characteristic. Returns the input unchanged when already small enough.
TriangleMesh cluster_vertices(const TriangleMesh& m, std::size_t target);

double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c);
double distance_to_mesh(const TriangleMesh& m, const Eigen::Vector3d& p);
/// Ray-parity inside test along +x with a 3-ray majority vote.
bool point_inside_mesh(const TriangleMesh& m, const Eigen::Vector3d& p, std::uint64_t seed = 7);

// ---- I/O ----
void save_obj(const TriangleMesh& m, const std::string& path);
TriangleMesh load_obj(const std::string& path);
/// Binary little-endian PLY; optional normals and curve/sheet label property.
void save_ply(const PointSet& ps, const std::string& path);
PointSet load_ply(const std::string& path);
void save_mesh_ply(const TriangleMesh& m, const std::string& path);

}  // namespace skelforge
