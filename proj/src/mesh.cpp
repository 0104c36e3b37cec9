#include "skelforge/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace skelforge {

namespace {

std::array<int, 2> ekey(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

std::vector<std::array<int, 2>> TriangleMesh::edges() const {
  std::map<std::array<int, 2>, int> seen;
  std::vector<std::array<int, 2>> out;
  for (const auto& f : faces)
    for (int k = 0; k < 3; ++k) {
      auto e = ekey(f[k], f[(k + 1) % 3]);
      if (seen.emplace(e, 1).second) out.push_back(e);
    }
  return out;
}

std::vector<std::vector<int>> TriangleMesh::vertex_adjacency() const {
  std::vector<std::vector<int>> adj(num_vertices());
  for (const auto& e : edges()) {
    adj[std::size_t(e[0])].push_back(e[1]);
    adj[std::size_t(e[1])].push_back(e[0]);
  }
  return adj;
}

Eigen::Vector3d TriangleMesh::face_normal(std::size_t f) const {
  const auto& fc = faces[f];
  Eigen::Vector3d a = vertices.row(fc[0]), b = vertices.row(fc[1]), c = vertices.row(fc[2]);
  Eigen::Vector3d n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d(0, 0, 1);
}

double TriangleMesh::face_area(std::size_t f) const {
  const auto& fc = faces[f];
  Eigen::Vector3d a = vertices.row(fc[0]), b = vertices.row(fc[1]), c = vertices.row(fc[2]);
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::total_area() const {
  double s = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) s += face_area(f);
  return s;
}

void TriangleMesh::validate() const {
  const int n = int(num_vertices());
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0 || f[k] >= n) throw TensorError("mesh: face index out of range");
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) throw TensorError("mesh: degenerate face");
  }
}

int euler_characteristic(const TriangleMesh& m) {
  return int(m.num_vertices()) - int(m.edges().size()) + int(m.num_faces());
}

bool is_closed(const TriangleMesh& m) {
  std::map<std::array<int, 2>, int> count;
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k) ++count[ekey(f[k], f[(k + 1) % 3])];
  for (const auto& [e, c] : count)
    if (c != 2) return false;
  return !m.faces.empty();
}

namespace {

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
  }
  void unite(int a, int b) { p[find(a)] = find(b); }
};

}  // namespace

bool is_connected(const TriangleMesh& m) {
  if (m.faces.empty()) return false;
  UnionFind uf(int(m.num_vertices()));
  for (const auto& f : m.faces) {
    uf.unite(f[0], f[1]);
    uf.unite(f[1], f[2]);
  }
  const int root = uf.find(m.faces[0][0]);
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k)
      if (uf.find(f[k]) != root) return false;
  return true;
}

int genus(const TriangleMesh& m) {
  if (!is_closed(m) || !is_connected(m)) throw TensorError("genus: mesh must be closed and connected");
  const int chi = euler_characteristic(compact(m));
  return (2 - chi) / 2;
}

TriangleMesh compact(const TriangleMesh& m) {
  std::vector<int> remap(m.num_vertices(), -1);
  TriangleMesh out;
  std::vector<int> used;
  for (const auto& f : m.faces)
    for (int k = 0; k < 3; ++k)
      if (remap[std::size_t(f[k])] < 0) {
        remap[std::size_t(f[k])] = int(used.size());
        used.push_back(f[k]);
      }
  out.vertices.resize(Eigen::Index(used.size()), 3);
  for (std::size_t i = 0; i < used.size(); ++i) out.vertices.row(Eigen::Index(i)) = m.vertices.row(used[i]);
  out.faces.reserve(m.faces.size());
  for (const auto& f : m.faces)
    out.faces.push_back({remap[std::size_t(f[0])], remap[std::size_t(f[1])], remap[std::size_t(f[2])]});
  return out;
}

std::vector<TriangleMesh> connected_components(const TriangleMesh& m) {
  UnionFind uf(int(m.num_vertices()));
  for (const auto& f : m.faces) {
    uf.unite(f[0], f[1]);
    uf.unite(f[1], f[2]);
  }
  std::map<int, std::vector<std::array<int, 3>>> groups;
  for (const auto& f : m.faces) groups[uf.find(f[0])].push_back(f);
  std::vector<TriangleMesh> out;
  for (auto& [root, faces] : groups) {
    TriangleMesh comp;
    comp.vertices = m.vertices;
    comp.faces = std::move(faces);
    out.push_back(compact(comp));
  }
  return out;
}

TriangleMesh largest_component(const TriangleMesh& m) {
  auto comps = connected_components(m);
  if (comps.empty()) throw TensorError("largest_component: empty mesh");
  std::size_t best = 0;
  for (std::size_t i = 1; i < comps.size(); ++i)
    if (comps[i].num_faces() > comps[best].num_faces()) best = i;
  return comps[best];
}

SurfaceSamples sample_surface(const TriangleMesh& m, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw TensorError("sample_surface: n must be positive");
  const double area = m.total_area();
  if (!(area > 0)) throw TensorError("sample_surface: zero total surface area");
  std::vector<double> cum(m.num_faces());
  double acc = 0;
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    acc += m.face_area(f);
    cum[f] = acc;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SurfaceSamples out;
  out.points.points.resize(Eigen::Index(n), 3);
  out.points.normals.emplace(Eigen::Index(n), 3);
  out.face.resize(n);
  out.barycentric.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = uni(rng) * acc;
    const std::size_t f = std::size_t(std::lower_bound(cum.begin(), cum.end(), t) - cum.begin());
    const auto& fc = m.faces[std::min(f, m.num_faces() - 1)];
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Eigen::Vector3d bc(1.0 - u - v, u, v);
    Eigen::Vector3d p = bc(0) * m.vertices.row(fc[0]) + bc(1) * m.vertices.row(fc[1]) +
                        bc(2) * m.vertices.row(fc[2]);
    out.points.points.row(Eigen::Index(i)) = p;
    out.points.normals->row(Eigen::Index(i)) = m.face_normal(std::min(f, m.num_faces() - 1));
    out.face[i] = int(std::min(f, m.num_faces() - 1));
    out.barycentric[i] = bc;
  }
  return out;
}

VoxelGrid voxelize_mesh(const TriangleMesh& m, int res) {
  VoxelGrid g(res);
  const double h = g.voxel_size() * 0.5;
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    const auto& fc = m.faces[f];
    const Eigen::Vector3d a = m.vertices.row(fc[0]), b = m.vertices.row(fc[1]), c = m.vertices.row(fc[2]);
    const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    const int steps = std::max(1, int(std::ceil(longest / h)));
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps - i; ++j) {
        const double u = double(i) / steps, v = double(j) / steps;
        const Eigen::Vector3d p = a + u * (b - a) + v * (c - a);
        const Eigen::Vector3i gi = g.grid_of(p);
        if (g.inside(gi.x(), gi.y(), gi.z())) g.at(gi.x(), gi.y(), gi.z()) = 1.0;
      }
  }
  return fill_interior(g);
}

TriangleMesh cluster_vertices(const TriangleMesh& m, std::size_t target) {
  if (m.num_vertices() <= target || m.faces.empty()) return m;
  const int chi0 = euler_characteristic(m);
  Eigen::Vector3d lo = m.vertices.colwise().minCoeff();
  Eigen::Vector3d hi = m.vertices.colwise().maxCoeff();
  const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
  double cell = extent / 256.0;
  for (int iter = 0; iter < 24; ++iter, cell *= 1.4) {
    std::map<std::array<int, 3>, int> cell_id;
    std::vector<int> remap(m.num_vertices());
    std::vector<Eigen::Vector3d> sums;
    std::vector<int> counts;
    for (Eigen::Index v = 0; v < m.vertices.rows(); ++v) {
      std::array<int, 3> key{int(std::floor((m.vertices(v, 0) - lo.x()) / cell)),
                             int(std::floor((m.vertices(v, 1) - lo.y()) / cell)),
                             int(std::floor((m.vertices(v, 2) - lo.z()) / cell))};
      auto [it, fresh] = cell_id.emplace(key, int(sums.size()));
      if (fresh) {
        sums.emplace_back(Eigen::Vector3d::Zero());
        counts.push_back(0);
      }
      remap[std::size_t(v)] = it->second;
      sums[std::size_t(it->second)] += m.vertices.row(v).transpose();
      counts[std::size_t(it->second)] += 1;
    }
    if (sums.size() > target) continue;
    TriangleMesh out;
    out.vertices.resize(Eigen::Index(sums.size()), 3);
    for (std::size_t i = 0; i < sums.size(); ++i) out.vertices.row(Eigen::Index(i)) = sums[i] / counts[i];
    std::map<std::array<int, 3>, int> face_seen;
    for (const auto& f : m.faces) {
      std::array<int, 3> nf{remap[std::size_t(f[0])], remap[std::size_t(f[1])], remap[std::size_t(f[2])]};
      if (nf[0] == nf[1] || nf[1] == nf[2] || nf[0] == nf[2]) continue;
      std::array<int, 3> key = nf;
      std::sort(key.begin(), key.end());
      if (!face_seen.emplace(key, 1).second) continue;
      out.faces.push_back(nf);
    }
    if (out.faces.empty()) return m;
    TriangleMesh compacted = compact(out);
    if (euler_characteristic(compacted) == chi0) return compacted;
    return m;  // merge would change topology; keep original
  }
  return m;
}

double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  // Ericson, Real-Time Collision Detection, closest point on triangle
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).norm();
}

double distance_to_mesh(const TriangleMesh& m, const Eigen::Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : m.faces)
    best = std::min(best, point_triangle_distance(p, m.vertices.row(f[0]), m.vertices.row(f[1]),
                                                  m.vertices.row(f[2])));
  return best;
}

namespace {

// Moller-Trumbore; counts crossings of a ray from p in direction dir
int ray_crossings(const TriangleMesh& m, const Eigen::Vector3d& p, const Eigen::Vector3d& dir) {
  int hits = 0;
  for (const auto& f : m.faces) {
    const Eigen::Vector3d a = m.vertices.row(f[0]), b = m.vertices.row(f[1]), c = m.vertices.row(f[2]);
    const Eigen::Vector3d e1 = b - a, e2 = c - a;
    const Eigen::Vector3d h = dir.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Eigen::Vector3d s = p - a;
    const double u = s.dot(h) * inv;
    if (u < 0 || u > 1) continue;
    const Eigen::Vector3d q = s.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < 0 || u + v > 1) continue;
    const double t = e2.dot(q) * inv;
    if (t > 1e-12) ++hits;
  }
  return hits;
}

}  // namespace

bool point_inside_mesh(const TriangleMesh& m, const Eigen::Vector3d& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.02);
  int votes = 0;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d dir(1.0, jitter(rng), jitter(rng));
    dir.normalize();
    if (ray_crossings(m, p, dir) % 2 == 1) ++votes;
  }
  return votes >= 2;
}

void save_obj(const TriangleMesh& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw TensorError("cannot open OBJ for writing: " + path);
  f.precision(10);
  for (Eigen::Index i = 0; i < m.vertices.rows(); ++i)
    f << "v " << m.vertices(i, 0) << " " << m.vertices(i, 1) << " " << m.vertices(i, 2) << "\n";
  for (const auto& fc : m.faces) f << "f " << fc[0] + 1 << " " << fc[1] + 1 << " " << fc[2] + 1 << "\n";
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("cannot open OBJ: " + path);
  std::vector<Eigen::Vector3d> verts;
  TriangleMesh m;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Eigen::Vector3d v;
      is >> v.x() >> v.y() >> v.z();
      verts.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> fc;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        is >> tok;
        fc[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      m.faces.push_back(fc);
    }
  }
  m.vertices.resize(Eigen::Index(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.row(Eigen::Index(i)) = verts[i];
  return m;
}

void save_ply(const PointSet& ps, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open PLY for writing: " + path);
  const bool with_n = ps.normals.has_value();
  const bool with_l = ps.labels.has_value();
  f << "ply\nformat binary_little_endian 1.0\n";
  f << "element vertex " << ps.size() << "\n";
  f << "property double x\nproperty double y\nproperty double z\n";
  if (with_n) f << "property double nx\nproperty double ny\nproperty double nz\n";
  if (with_l) f << "property uchar label\n";
  f << "end_header\n";
  for (std::size_t i = 0; i < ps.size(); ++i) {
    f.write(reinterpret_cast<const char*>(ps.points.row(Eigen::Index(i)).data()), 24);
    if (with_n) f.write(reinterpret_cast<const char*>(ps.normals->row(Eigen::Index(i)).data()), 24);
    if (with_l) {
      const std::uint8_t l = std::uint8_t((*ps.labels)[i]);
      f.write(reinterpret_cast<const char*>(&l), 1);
    }
  }
}

PointSet load_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open PLY: " + path);
  std::string line;
  std::size_t count = 0;
  bool with_n = false, with_l = false;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    if (tok == "element") {
      std::string what;
      is >> what >> count;
    } else if (tok == "property") {
      std::string type, name;
      is >> type >> name;
      if (name == "nx") with_n = true;
      if (name == "label") with_l = true;
    } else if (tok == "end_header") {
      break;
    }
  }
  PointSet ps;
  ps.points.resize(Eigen::Index(count), 3);
  if (with_n) ps.normals.emplace(Eigen::Index(count), 3);
  if (with_l) ps.labels.emplace(count);
  for (std::size_t i = 0; i < count; ++i) {
    f.read(reinterpret_cast<char*>(ps.points.row(Eigen::Index(i)).data()), 24);
    if (with_n) f.read(reinterpret_cast<char*>(ps.normals->row(Eigen::Index(i)).data()), 24);
    if (with_l) {
      std::uint8_t l = 0;
      f.read(reinterpret_cast<char*>(&l), 1);
      (*ps.labels)[i] = SkelLabel(l);
    }
  }
  if (!f) throw TensorError("truncated PLY: " + path);
  return ps;
}

void save_mesh_ply(const TriangleMesh& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open PLY for writing: " + path);
  f << "ply\nformat binary_little_endian 1.0\n";
  f << "element vertex " << m.num_vertices() << "\n";
  f << "property double x\nproperty double y\nproperty double z\n";
  f << "element face " << m.num_faces() << "\n";
  f << "property list uchar int vertex_indices\n";
  f << "end_header\n";
  for (Eigen::Index i = 0; i < m.vertices.rows(); ++i)
    f.write(reinterpret_cast<const char*>(m.vertices.row(i).data()), 24);
  for (const auto& fc : m.faces) {
    const std::uint8_t n = 3;
    f.write(reinterpret_cast<const char*>(&n), 1);
    f.write(reinterpret_cast<const char*>(fc.data()), 12);
  }
}

}  // namespace skelforge
