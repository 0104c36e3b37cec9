#pragma once

#include "skelforge/mesh.hpp"
#include "skelforge/voxel.hpp"

namespace skelforge {

/// Table-driven isosurface extraction; samples sit at voxel centers, vertex
/// positions are linearly interpolated along cell edges and welded, so grids
/// whose boundary layer lies below iso yield watertight meshes.
TriangleMesh marching_cubes(const VoxelGrid& grid, double iso = 0.5);

}  // namespace skelforge
