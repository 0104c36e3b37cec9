#include "skelforge/voxel.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace skelforge {

double iou(const VoxelGrid& a, const VoxelGrid& b, double thresh) {
  if (a.res != b.res)
    throw TensorError("iou: resolution mismatch " + std::to_string(a.res) + " vs " + std::to_string(b.res));
  std::size_t inter = 0, uni = 0;
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    const bool oa = a.values(i) > thresh, ob = b.values(i) > thresh;
    inter += oa && ob;
    uni += oa || ob;
  }
  if (uni == 0) return 1.0;  // both empty
  return double(inter) / double(uni);
}

VoxelGrid binarize(const VoxelGrid& g, double thresh) {
  VoxelGrid out(g.res);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) out.values(i) = g.values(i) > thresh ? 1.0 : 0.0;
  return out;
}

VoxelGrid dilate(const VoxelGrid& g, int radius, Connectivity conn) {
  if (radius < 0) throw TensorError("dilate: negative radius");
  VoxelGrid cur = binarize(g);
  for (int it = 0; it < radius; ++it) {
    VoxelGrid next = cur;
    for (int z = 0; z < cur.res; ++z)
      for (int y = 0; y < cur.res; ++y)
        for (int x = 0; x < cur.res; ++x) {
          if (cur.at(x, y, z) < 0.5) continue;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                if (conn == Connectivity::Six && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1) continue;
                const int nx = x + dx, ny = y + dy, nz = z + dz;
                if (cur.inside(nx, ny, nz)) next.at(nx, ny, nz) = 1.0;
              }
        }
    cur = std::move(next);
  }
  return cur;
}

VoxelGrid fill_interior(const VoxelGrid& g) {
  VoxelGrid bin = binarize(g);
  const int r = bin.res;
  std::vector<std::uint8_t> exterior(bin.numel(), 0);
  std::vector<std::array<int, 3>> stack;
  auto push = [&](int x, int y, int z) {
    if (!bin.inside(x, y, z)) return;
    const std::size_t i = bin.index(x, y, z);
    if (exterior[i] || bin.values(Eigen::Index(i)) > 0.5) return;
    exterior[i] = 1;
    stack.push_back({x, y, z});
  };
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      push(a, b, 0);
      push(a, b, r - 1);
      push(a, 0, b);
      push(a, r - 1, b);
      push(0, a, b);
      push(r - 1, a, b);
    }
  while (!stack.empty()) {
    auto [x, y, z] = stack.back();
    stack.pop_back();
    push(x + 1, y, z);
    push(x - 1, y, z);
    push(x, y + 1, z);
    push(x, y - 1, z);
    push(x, y, z + 1);
    push(x, y, z - 1);
  }
  VoxelGrid out(r);
  for (std::size_t i = 0; i < bin.numel(); ++i) out.values(Eigen::Index(i)) = exterior[i] ? 0.0 : 1.0;
  return out;
}

VoxelGrid downsample_grid(const VoxelGrid& g, int factor) {
  if (g.res % factor != 0)
    throw TensorError("downsample: resolution " + std::to_string(g.res) + " not divisible by " +
                      std::to_string(factor));
  VoxelGrid out(g.res / factor);
  for (int z = 0; z < out.res; ++z)
    for (int y = 0; y < out.res; ++y)
      for (int x = 0; x < out.res; ++x) {
        double m = 0.0;
        for (int dz = 0; dz < factor; ++dz)
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              m = std::max(m, g.at(x * factor + dx, y * factor + dy, z * factor + dz));
        out.at(x, y, z) = m;
      }
  return out;
}

void save_skv(const VoxelGrid& g, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open volume file for writing: " + path);
  f.write("SKV1", 4);
  const std::uint32_t r = std::uint32_t(g.res);
  f.write(reinterpret_cast<const char*>(&r), 4);
  const std::uint64_t reserved = 0;
  f.write(reinterpret_cast<const char*>(&reserved), 8);
  std::vector<float> buf(g.numel());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(g.values(Eigen::Index(i)));
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
}

VoxelGrid load_skv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open volume file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "SKV1", 4) != 0) throw TensorError("bad volume magic in " + path);
  std::uint32_t r = 0;
  f.read(reinterpret_cast<char*>(&r), 4);
  std::uint64_t reserved = 0;
  f.read(reinterpret_cast<char*>(&reserved), 8);
  VoxelGrid g{int(r)};
  std::vector<float> buf(g.numel());
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
  if (!f) throw TensorError("truncated volume file: " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) g.values(Eigen::Index(i)) = buf[i];
  return g;
}

}  // namespace skelforge
