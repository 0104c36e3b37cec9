#include "skelforge/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "skelforge/marching_cubes.hpp"

namespace skelforge {

namespace fs = std::filesystem;
using nlohmann::json;

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "torus") return ShapeKind::Torus;
  if (s == "box_frame") return ShapeKind::BoxFrame;
  if (s == "table") return ShapeKind::MultiLegTable;
  if (s == "sphere") return ShapeKind::Sphere;
  throw TensorError("unknown shape kind: " + s);
}

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Torus: return "torus";
    case ShapeKind::BoxFrame: return "box_frame";
    case ShapeKind::MultiLegTable: return "table";
    case ShapeKind::Sphere: return "sphere";
  }
  throw TensorError("bad shape kind value");
}

int default_dilation_radius(int r) { return std::max(1, r * 2 / 256); }

// ---- analytic signed distances -------------------------------------------

namespace {

double sd_sphere(const Eigen::Vector3d& p, double radius) { return p.norm() - radius; }

double sd_torus(const Eigen::Vector3d& p, double major, double minor) {
  const double q = std::hypot(p.x(), p.y()) - major;
  return std::hypot(q, p.z()) - minor;
}

double sd_box(const Eigen::Vector3d& p, const Eigen::Vector3d& center, const Eigen::Vector3d& half) {
  const Eigen::Vector3d q = (p - center).cwiseAbs() - half;
  const Eigen::Vector3d qp = q.cwiseMax(0.0);
  return qp.norm() + std::min(q.maxCoeff(), 0.0);
}

double sd_segment(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                  double radius) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm() - radius;
}

std::vector<std::array<Eigen::Vector3d, 2>> box_frame_edges(double h) {
  std::vector<std::array<Eigen::Vector3d, 2>> edges;
  const double c[2] = {-h, h};
  for (double y : c)
    for (double z : c) edges.push_back({Eigen::Vector3d(-h, y, z), Eigen::Vector3d(h, y, z)});
  for (double x : c)
    for (double z : c) edges.push_back({Eigen::Vector3d(x, -h, z), Eigen::Vector3d(x, h, z)});
  for (double x : c)
    for (double y : c) edges.push_back({Eigen::Vector3d(x, y, -h), Eigen::Vector3d(x, y, h)});
  return edges;
}

std::vector<Eigen::Vector2d> table_leg_centers(const ShapeParams& prm) {
  std::vector<Eigen::Vector2d> centers;
  const double off = prm.table_top_half - 2.5 * prm.table_leg_half;
  if (prm.table_legs == 3) {
    for (int i = 0; i < 3; ++i) {
      const double a = 2.0 * M_PI * i / 3.0 + M_PI / 2.0;
      centers.emplace_back(off * std::cos(a), off * std::sin(a));
    }
  } else {
    centers.emplace_back(off, off);
    centers.emplace_back(-off, off);
    centers.emplace_back(off, -off);
    centers.emplace_back(-off, -off);
  }
  return centers;
}

double shape_sdf(ShapeKind kind, const ShapeParams& prm, const Eigen::Vector3d& p) {
  switch (kind) {
    case ShapeKind::Torus:
      return sd_torus(p, prm.torus_major, prm.torus_minor);
    case ShapeKind::Sphere:
      return sd_sphere(p, prm.sphere_radius);
    case ShapeKind::BoxFrame: {
      double d = 1e30;
      for (const auto& e : box_frame_edges(prm.frame_half))
        d = std::min(d, sd_segment(p, e[0], e[1], prm.frame_thickness));
      return d;
    }
    case ShapeKind::MultiLegTable: {
      const double top_z = 0.2;
      double d = sd_box(p, {0, 0, top_z},
                        {prm.table_top_half, prm.table_top_half, prm.table_top_thickness});
      for (const auto& c : table_leg_centers(prm)) {
        const double leg_top = top_z - prm.table_top_thickness;
        const double leg_bot = -0.3;
        d = std::min(d, sd_box(p, {c.x(), c.y(), (leg_top + leg_bot) / 2},
                               {prm.table_leg_half, prm.table_leg_half, (leg_top - leg_bot) / 2}));
      }
      return d;
    }
  }
  throw TensorError("bad shape kind value");
}

TriangleMesh mesh_from_sdf(ShapeKind kind, const ShapeParams& prm) {
  VoxelGrid g(prm.mesh_resolution);
  const double h = g.voxel_size();
  for (int z = 0; z < g.res; ++z)
    for (int y = 0; y < g.res; ++y)
      for (int x = 0; x < g.res; ++x) {
        // signed distance mapped so the iso-0.5 crossing interpolates sdf=0
        const double sdf = shape_sdf(kind, prm, g.center(x, y, z));
        g.at(x, y, z) = std::clamp(0.5 - sdf / (2.0 * h), 0.0, 1.0);
      }
  TriangleMesh m = largest_component(marching_cubes(g));
  m.validate();
  return m;
}

// ---- analytic skeletons ---------------------------------------------------

void append_points(Points& dst, std::vector<SkelLabel>& labels, const std::vector<Eigen::Vector3d>& src,
                   SkelLabel label) {
  const Eigen::Index base = dst.rows();
  dst.conservativeResize(base + Eigen::Index(src.size()), 3);
  for (std::size_t i = 0; i < src.size(); ++i) dst.row(base + Eigen::Index(i)) = src[i];
  labels.insert(labels.end(), src.size(), label);
}

PointSet analytic_skeleton(ShapeKind kind, const ShapeParams& prm) {
  Points pts(0, 3);
  std::vector<SkelLabel> labels;
  switch (kind) {
    case ShapeKind::Torus: {
      std::vector<Eigen::Vector3d> circle;
      const int n = 256;
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * i / n;
        circle.emplace_back(prm.torus_major * std::cos(a), prm.torus_major * std::sin(a), 0.0);
      }
      append_points(pts, labels, circle, SkelLabel::Curve);
      break;
    }
    case ShapeKind::Sphere: {
      // compact central disc; the medial locus degenerates to the center
      std::vector<Eigen::Vector3d> disc;
      const int rings = 5, per = 12;
      disc.emplace_back(0, 0, 0);
      for (int r = 1; r <= rings; ++r)
        for (int i = 0; i < per; ++i) {
          const double a = 2.0 * M_PI * i / per;
          const double rad = 0.04 * r / rings;
          disc.emplace_back(rad * std::cos(a), rad * std::sin(a), 0.0);
        }
      append_points(pts, labels, disc, SkelLabel::Sheet);
      break;
    }
    case ShapeKind::BoxFrame: {
      // edge curves, trimmed away from the corners so each point's k-NN
      // neighborhood stays collinear
      const double trim = 0.15;
      std::vector<Eigen::Vector3d> curve;
      for (const auto& e : box_frame_edges(prm.frame_half)) {
        const Eigen::Vector3d dir = (e[1] - e[0]).normalized();
        const double len = (e[1] - e[0]).norm();
        const int n = 40;
        for (int i = 0; i < n; ++i) {
          const double t = trim + (len - 2 * trim) * i / (n - 1);
          curve.push_back(e[0] + t * dir);
        }
      }
      append_points(pts, labels, curve, SkelLabel::Curve);
      break;
    }
    case ShapeKind::MultiLegTable: {
      std::vector<Eigen::Vector3d> sheet;
      const int n = 24;
      const double h = prm.table_top_half * 0.95;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          sheet.emplace_back(-h + 2 * h * i / (n - 1), -h + 2 * h * j / (n - 1), 0.2);
      append_points(pts, labels, sheet, SkelLabel::Sheet);
      std::vector<Eigen::Vector3d> legs;
      for (const auto& c : table_leg_centers(prm)) {
        const int m = 48;
        for (int i = 0; i < m; ++i) legs.emplace_back(c.x(), c.y(), -0.28 + (0.05 - (-0.28)) * i / (m - 1));
      }
      append_points(pts, labels, legs, SkelLabel::Curve);
      break;
    }
  }
  PointSet out;
  out.points = std::move(pts);
  out.labels = std::move(labels);
  return out;
}

}  // namespace

// ---- skeleton ground-truth operations -------------------------------------

PointSet sink_to_skeleton(const PointSet& surface, int steps, double step_size) {
  surface.require_nonempty("sink_to_skeleton");
  surface.require_normals("sink_to_skeleton");
  const Eigen::Index n = surface.points.rows();
  Points cur = surface.points;
  if (steps <= 0) {
    PointSet out;
    out.points = cur;
    return out;
  }
  // "opposite side" targets: surface points whose normal opposes this one's
  const Points& surf = surface.points;
  const Points& nrm = *surface.normals;
  auto opposite_dist = [&](Eigen::Index i, const Eigen::Vector3d& p) {
    double best = 1e30;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (nrm.row(i).dot(nrm.row(j)) > -0.2) continue;
      best = std::min(best, (surf.row(j).transpose() - p).squaredNorm());
    }
    return best;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d p = cur.row(i);
    const Eigen::Vector3d dir = -nrm.row(i).transpose();
    // sink while the opposite side stays farther than the way back: stopping at
    // (approximate) equidistance places the point on the medial set between
    // the two sides instead of on the far surface
    for (int s = 0; s < steps; ++s) {
      const double traveled = (s + 1) * step_size;
      const Eigen::Vector3d cand = p + step_size * dir;
      const double dc = opposite_dist(i, cand);
      if (dc <= traveled * traveled) break;
      p = cand;
    }
    cur.row(i) = p;
  }
  PointSet out;
  out.points = std::move(cur);
  return out;
}

std::vector<SkelLabel> classify_curve_sheet(const PointSet& skeleton, int k, double ratio_thresh) {
  skeleton.require_nonempty("classify_curve_sheet");
  if (k < 4) throw TensorError("classify_curve_sheet: k must be >= 4");
  const Eigen::Index n = skeleton.points.rows();
  if (n < k) throw TensorError("classify_curve_sheet: need at least k points");
  std::vector<SkelLabel> labels(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = skeleton.points.row(i);
    for (Eigen::Index j = 0; j < n; ++j)
      dist[std::size_t(j)] = {(skeleton.points.row(j).transpose() - p).squaredNorm(), int(j)};
    std::nth_element(dist.begin(), dist.begin() + k - 1, dist.end());
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j = 0; j < k; ++j) mean += skeleton.points.row(dist[std::size_t(j)].second).transpose();
    mean /= k;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j = 0; j < k; ++j) {
      const Eigen::Vector3d d = skeleton.points.row(dist[std::size_t(j)].second).transpose() - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const double l1 = es.eigenvalues()(2), l2 = es.eigenvalues()(1);
    labels[std::size_t(i)] = (l1 <= 0.0 || l2 / l1 < ratio_thresh) ? SkelLabel::Curve : SkelLabel::Sheet;
  }
  return labels;
}

VoxelGrid build_gt_volume(const PointSet& skeleton, int r, int dilation_radius, Connectivity conn) {
  skeleton.require_nonempty("build_gt_volume");
  VoxelGrid g(r);
  for (Eigen::Index i = 0; i < skeleton.points.rows(); ++i) {
    const Eigen::Vector3i c = g.grid_of(skeleton.points.row(i));
    if (g.inside(c.x(), c.y(), c.z())) g.at(c.x(), c.y(), c.z()) = 1.0;
  }
  return dilate(fill_interior(g), dilation_radius, conn);
}

// ---- rendering ------------------------------------------------------------

Tensor render_silhouette(const TriangleMesh& mesh, const Camera& cam) {
  const int w = cam.width, h = cam.height;
  Tensor img = Tensor::zeros({3, std::size_t(h), std::size_t(w)});
  std::vector<double> zbuf(std::size_t(w) * h, 1e30);
  const Eigen::Vector3d light = Eigen::Vector3d(0.3, -0.5, -1.0).normalized();  // camera space
  const Projection proj = project_vertices(cam, mesh.vertices);

  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const auto& face = mesh.faces[f];
    Eigen::Vector2d a = proj.pixels.row(face[0]), b = proj.pixels.row(face[1]),
                    c = proj.pixels.row(face[2]);
    double za = cam.to_camera(mesh.vertices.row(face[0])).z();
    double zb = cam.to_camera(mesh.vertices.row(face[1])).z();
    double zc = cam.to_camera(mesh.vertices.row(face[2])).z();
    if (za <= 1e-9 || zb <= 1e-9 || zc <= 1e-9) continue;
    const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (std::abs(area2) < 1e-12) continue;
    const int x0 = std::max(0, int(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(w - 1, int(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, int(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(h - 1, int(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    const Eigen::Vector3d n_cam = cam.rotation * mesh.face_normal(f);
    const double shade = 0.15 + 0.85 * std::max(0.0, -n_cam.dot(light));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        const Eigen::Vector2d p(px + 0.5, py + 0.5);
        const double w0 = ((b - p).x() * (c - p).y() - (b - p).y() * (c - p).x()) / area2;
        const double w1 = ((c - p).x() * (a - p).y() - (c - p).y() * (a - p).x()) / area2;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w0 * za + w1 * zb + w2 * zc;
        const std::size_t pix = std::size_t(py) * w + px;
        if (z >= zbuf[pix]) continue;
        zbuf[pix] = z;
        for (int ch = 0; ch < 3; ++ch)
          img.values()(Eigen::Index(std::size_t(ch) * h * w + pix)) = shade;
      }
  }
  return img;
}

// ---- generation -----------------------------------------------------------

ShapeSample generate_shape(ShapeKind kind, const ShapeParams& prm, std::uint64_t seed) {
  if (prm.mesh_resolution < 8 || prm.volume_resolution < 8)
    throw TensorError("generate_shape: resolution too small");
  if (prm.torus_minor <= 0 || prm.torus_major <= prm.torus_minor)
    throw TensorError("generate_shape: torus radii must satisfy 0 < minor < major");
  if (prm.table_legs != 3 && prm.table_legs != 4)
    throw TensorError("generate_shape: table_legs must be 3 or 4");

  ShapeSample s;
  s.mesh = mesh_from_sdf(kind, prm);
  s.gt_skeleton_points = analytic_skeleton(kind, prm);
  const int rad = prm.dilation_radius >= 0 ? prm.dilation_radius
                                           : default_dilation_radius(prm.volume_resolution);
  s.gt_skeleton_volume = build_gt_volume(s.gt_skeleton_points, prm.volume_resolution, rad);
  s.gt_surface_samples = sample_surface(s.mesh, prm.surface_samples, seed ^ 0x5a5a5a5aULL).points;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> azim(0.0, 2.0 * M_PI);
  for (int v = 0; v < prm.num_views; ++v) {
    const double a = azim(rng);
    const double elev = 0.35;  // fixed elevation, random azimuth
    const double dist = 1.4;
    const Eigen::Vector3d eye(dist * std::cos(elev) * std::cos(a), dist * std::cos(elev) * std::sin(a),
                              dist * std::sin(elev));
    const double focal = 1.4 * prm.image_size;
    Camera cam = Camera::look_at(eye, Eigen::Vector3d::Zero(), focal, prm.image_size, prm.image_size);
    s.views.push_back({render_silhouette(s.mesh, cam), cam});
  }
  return s;
}

// ---- I/O ------------------------------------------------------------------

void save_image(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3) throw TensorError("save_image: expected [C,H,W]");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open image file for writing: " + path);
  f.write("SKI1", 4);
  const std::uint32_t c = std::uint32_t(image.dim(0)), hh = std::uint32_t(image.dim(1)),
                      ww = std::uint32_t(image.dim(2));
  f.write(reinterpret_cast<const char*>(&c), 4);
  f.write(reinterpret_cast<const char*>(&hh), 4);
  f.write(reinterpret_cast<const char*>(&ww), 4);
  std::vector<float> buf(image.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(image.value(i));
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
}

Tensor load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorError("cannot open image file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, "SKI1", 4) != 0) throw TensorError("bad image magic in " + path);
  std::uint32_t c = 0, hh = 0, ww = 0;
  f.read(reinterpret_cast<char*>(&c), 4);
  f.read(reinterpret_cast<char*>(&hh), 4);
  f.read(reinterpret_cast<char*>(&ww), 4);
  std::vector<float> buf(std::size_t(c) * hh * ww);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
  if (!f) throw TensorError("truncated image file: " + path);
  Tensor t = Tensor::zeros({c, hh, ww});
  for (std::size_t i = 0; i < buf.size(); ++i) t.values()(Eigen::Index(i)) = buf[i];
  return t;
}

void save_camera_json(const Camera& cam, const std::string& path) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> rot(9), t(3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[std::size_t(r * 3 + c)] = cam.rotation(r, c);
  for (int r = 0; r < 3; ++r) t[std::size_t(r)] = cam.translation(r);
  j["rotation"] = rot;
  j["translation"] = t;
  std::ofstream f(path);
  if (!f) throw TensorError("cannot open camera file for writing: " + path);
  f << j.dump(2) << "\n";
}

Camera load_camera_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("cannot open camera file: " + path);
  json j = json::parse(f);
  Camera cam;
  cam.fx = j.at("fx");
  cam.fy = j.at("fy");
  cam.cx = j.at("cx");
  cam.cy = j.at("cy");
  cam.width = j.at("width");
  cam.height = j.at("height");
  const std::vector<double> rot = j.at("rotation"), t = j.at("translation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot.at(std::size_t(r * 3 + c));
  for (int r = 0; r < 3; ++r) cam.translation(r) = t.at(std::size_t(r));
  cam.validate();
  return cam;
}

void save_sample(const ShapeSample& s, const std::string& dir) {
  fs::create_directories(dir);
  save_obj(s.mesh, dir + "/mesh.obj");
  save_ply(s.gt_skeleton_points, dir + "/skeleton.ply");
  save_skv(s.gt_skeleton_volume, dir + "/volume.skv");
  save_ply(s.gt_surface_samples, dir + "/surface.ply");
  for (std::size_t v = 0; v < s.views.size(); ++v) {
    save_image(s.views[v].image, dir + "/view_" + std::to_string(v) + ".ski");
    save_camera_json(s.views[v].camera, dir + "/view_" + std::to_string(v) + ".json");
  }
  json meta;
  meta["num_views"] = s.views.size();
  std::ofstream f(dir + "/sample.json");
  f << meta.dump(2) << "\n";
}

ShapeSample load_sample(const std::string& dir) {
  if (!fs::exists(dir + "/sample.json")) throw TensorError("missing sample metadata: " + dir + "/sample.json");
  std::ifstream mf(dir + "/sample.json");
  json meta = json::parse(mf);
  ShapeSample s;
  s.mesh = load_obj(dir + "/mesh.obj");
  s.gt_skeleton_points = load_ply(dir + "/skeleton.ply");
  s.gt_skeleton_volume = load_skv(dir + "/volume.skv");
  s.gt_surface_samples = load_ply(dir + "/surface.ply");
  const std::size_t n = meta.at("num_views");
  for (std::size_t v = 0; v < n; ++v)
    s.views.push_back({load_image(dir + "/view_" + std::to_string(v) + ".ski"),
                       load_camera_json(dir + "/view_" + std::to_string(v) + ".json")});
  return s;
}

void write_manifest(const std::vector<std::string>& dirs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw TensorError("cannot open manifest for writing: " + path);
  for (const auto& d : dirs) {
    json j;
    j["dir"] = d;
    f << j.dump() << "\n";
  }
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TensorError("cannot open manifest: " + path);
  std::vector<std::string> dirs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    dirs.push_back(json::parse(line).at("dir"));
  }
  return dirs;
}

}  // namespace skelforge
