#include "skelforge/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <json.hpp>

#include "skelforge/dataset.hpp"
#include "skelforge/decoders.hpp"
#include "skelforge/evalmetrics.hpp"
#include "skelforge/ops.hpp"
#include "skelforge/point2voxel.hpp"
#include "skelforge/refine.hpp"
#include "skelforge/skedisn.hpp"
#include "skelforge/skegcnn.hpp"

namespace skelforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- shared plumbing ------------------------------------------------------

std::string manifest_path(const RunConfig& cfg) { return cfg.data_dir + "/manifest.jsonl"; }

std::vector<std::string> require_manifest(const RunConfig& cfg) {
  const std::string path = manifest_path(cfg);
  if (!fs::exists(path))
    throw ArtifactError("missing dataset manifest: " + path + " (run gen-data first)");
  return read_manifest(path);
}

std::string sample_name(const std::string& dir) { return fs::path(dir).filename().string(); }

void require_checkpoint(const std::string& path, const char* producer) {
  if (!fs::exists(path))
    throw ArtifactError("missing checkpoint: " + path + " (run " + producer + " first)");
}

struct JsonlLog {
  std::ofstream f;
  explicit JsonlLog(const std::string& path) : f(path) {
    if (!f) throw TensorError("cannot open log file: " + path);
  }
  void write(const json& j) { f << j.dump() << "\n"; }
};

/// Temporarily disables gradient tracking on every parameter; forward passes
/// inside the scope build no tape.
struct GradGuard {
  std::vector<NodePtr> nodes;
  explicit GradGuard(const ParamStore& ps) {
    for (const auto& [name, p] : ps.params()) {
      nodes.push_back(p.node());
      p.node()->requires_grad = false;
    }
  }
  ~GradGuard() {
    for (auto& n : nodes) n->requires_grad = true;
  }
};

struct GtSplit {
  Points curves;
  Points sheets;
};

GtSplit split_skeleton(const PointSet& sk) {
  if (!sk.labels) throw TensorError("ground-truth skeleton has no labels");
  std::vector<int> ci, si;
  for (std::size_t i = 0; i < sk.size(); ++i)
    ((*sk.labels)[i] == SkelLabel::Curve ? ci : si).push_back(int(i));
  GtSplit out;
  out.curves = sk.subset(ci).points;
  out.sheets = sk.subset(si).points;
  return out;
}

RefinementConfig refinement_config(const RunConfig& cfg) {
  RefinementConfig rc;
  rc.r = cfg.model.r;
  rc.global_down = cfg.model.global_down;
  rc.global_up = cfg.model.global_up;
  rc.local_down = cfg.model.local_down;
  rc.local_up = cfg.model.local_up;
  rc.feature_volume_channels = cfg.model.feature_volume_channels;
  return rc;
}

std::size_t lifted_feature_width(const EncoderOutput& enc) {
  std::size_t w = 0;
  for (const auto& fm : enc.feature_maps) w += fm.map.dim(0);
  return w;
}

}  // namespace

// ---- gen-data -------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
  fs::create_directories(cfg.data_dir);
  std::vector<std::string> dirs;
  for (const std::string& kind_name : cfg.dataset.shapes) {
    const ShapeKind kind = shape_kind_from_string(kind_name);
    for (int i = 0; i < cfg.dataset.shapes_per_kind; ++i) {
      ShapeParams prm;
      prm.mesh_resolution = cfg.dataset.mesh_resolution;
      prm.volume_resolution = cfg.dataset.volume_resolution;
      prm.dilation_radius = cfg.dataset.dilation_radius;
      prm.num_views = cfg.dataset.num_views;
      prm.image_size = cfg.dataset.image_size;
      prm.surface_samples = cfg.dataset.surface_samples;
      // mild per-instance size variation so instances are not identical
      const double f = 1.0 + 0.08 * i;
      prm.torus_major *= f;
      prm.sphere_radius *= f;
      prm.frame_half *= f;
      prm.table_top_half *= f;
      const std::uint64_t seed = cfg.seed * 1000003ULL + std::hash<std::string>{}(kind_name) + i;
      const ShapeSample s = generate_shape(kind, prm, seed);
      const std::string dir = cfg.data_dir + "/" + kind_name + "_" + std::to_string(i);
      save_sample(s, dir);
      dirs.push_back(dir);
      std::cout << "wrote " << dir << " (" << s.mesh.num_vertices() << " verts, "
                << s.mesh.num_faces() << " faces)\n";
    }
  }
  write_manifest(dirs, manifest_path(cfg));
  return 0;
}

// ---- train-skeleton -------------------------------------------------------

int cmd_train_skeleton(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  fs::create_directories(cfg.run_dir);
  std::vector<ShapeSample> samples;
  std::vector<GtSplit> splits;
  for (const auto& d : dirs) {
    samples.push_back(load_sample(d));
    splits.push_back(split_skeleton(samples.back().gt_skeleton_points));
  }

  std::mt19937_64 rng(cfg.seed);
  ParamStore ps;
  ImageEncoder enc = ImageEncoder::create(ps, "enc", std::size_t(cfg.model.code_dim), rng);
  SkeDecoder cur = SkeDecoder::create(ps, "cur", std::size_t(cfg.model.code_dim), rng);
  SkeDecoder sur = SkeDecoder::create(ps, "sur", std::size_t(cfg.model.code_dim), rng);
  const PrimitiveSet lines = PrimitiveSet::lines(cfg.model.curve_primitives, cfg.model.curve_samples);
  const PrimitiveSet squares = PrimitiveSet::squares(cfg.model.sheet_primitives, cfg.model.sheet_grid);

  JsonlLog log(cfg.run_dir + "/log_train_skeleton.jsonl");
  for (int step = 0; step < cfg.train.skeleton_steps; ++step) {
    const std::size_t si = std::size_t(step) % samples.size();
    const auto& sample = samples[si];
    const auto& view = sample.views[std::size_t(step) % sample.views.size()];
    const Tensor code = enc(view.image).global_code;
    Tensor loss = Tensor::scalar(0.0);
    if (splits[si].curves.rows() > 0)
      loss = ops::add(loss, decoder_loss(decode_curves(code, lines, cur), splits[si].curves, lines,
                                         cfg.model.alpha));
    if (splits[si].sheets.rows() > 0)
      loss = ops::add(loss, decoder_loss(decode_sheets(code, squares, sur), splits[si].sheets,
                                         squares, cfg.model.alpha));
    backward(loss);
    ps.adam_step(cfg.train.lr);
    if (step % cfg.train.log_every == 0 || step + 1 == cfg.train.skeleton_steps) {
      log.write({{"step", step}, {"sample", sample_name(dirs[si])}, {"loss", loss.scalar_value()}});
      std::cout << "train-skeleton step " << step << " loss " << loss.scalar_value() << "\n";
    }
  }
  ps.save(cfg.run_dir + "/skeleton.skf");

  // export predicted skeletons
  GradGuard guard(ps);
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const Tensor code = enc(samples[si].views[0].image).global_code;
    const Points curves = tensor_to_points(decode_curves(code, lines, cur));
    const Points sheets = tensor_to_points(decode_sheets(code, squares, sur));
    save_ply(assemble_skeleton(curves, sheets),
             cfg.run_dir + "/skeleton_" + sample_name(dirs[si]) + ".ply");
  }
  return 0;
}

// ---- refine ---------------------------------------------------------------

int cmd_refine(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  require_checkpoint(cfg.run_dir + "/skeleton.skf", "train-skeleton");
  const RefinementConfig rc = refinement_config(cfg);
  const SubvolumeTiling tiling = plan_tiling(rc);

  ParamStore enc_ps;
  enc_ps.load(cfg.run_dir + "/skeleton.skf");
  ImageEncoder enc = ImageEncoder::fetch(enc_ps, "enc", std::size_t(cfg.model.code_dim));
  GradGuard enc_guard(enc_ps);  // refinement trains its own nets only

  struct Prepared {
    Tensor u_down;        // [1,n,n,n] constant
    VoxelGrid u_in;       // r'
    VoxelGrid target;     // r (ground truth skeletal volume)
    VoxelGrid target_down;  // r/4 target for the global stream
    Tensor code;
  };
  std::vector<Prepared> prep;
  std::vector<ShapeSample> samples;
  for (const auto& d : dirs) {
    samples.push_back(load_sample(d));
    const auto& s = samples.back();
    Prepared p;
    P2VConfig pv;
    pv.scaling = cfg.model.scaling_m;
    pv.resolution = rc.r_half();
    p.u_in = point2voxel_plain(s.gt_skeleton_points.points, pv);
    const VoxelGrid down = downsample_grid(p.u_in, 2);
    const std::size_t n = std::size_t(down.res);
    p.u_down = Tensor::from_vector({1, n, n, n}, down.values);
    const int rad = cfg.dataset.dilation_radius >= 0 ? cfg.dataset.dilation_radius
                                                     : default_dilation_radius(rc.r);
    p.target = build_gt_volume(s.gt_skeleton_points, rc.r, rad);
    p.target_down = downsample_grid(downsample_grid(p.target, 2), 2);
    p.code = enc(s.views[0].image).global_code;
    prep.push_back(std::move(p));
  }

  std::mt19937_64 rng(cfg.seed + 17);
  ParamStore ps;
  FeatureVolumeNet fv = FeatureVolumeNet::create(ps, "fv", std::size_t(cfg.model.code_dim), rc, rng);
  GlobalStream gs = GlobalStream::create(ps, "global", rc, rng);
  LocalStream ls = LocalStream::create(ps, "local", rc, rng);

  JsonlLog log(cfg.run_dir + "/log_refine.jsonl");
  std::uniform_int_distribution<std::size_t> wpick(0, tiling.windows.size() - 1);
  const int steps = cfg.train.refine_steps;
  for (int step = 0; step < steps; ++step) {
    const std::size_t si = std::size_t(step) % prep.size();
    const Prepared& p = prep[si];
    Tensor u_out_down = gs(p.u_down, fv(p.code));
    Tensor loss = refine_loss(u_out_down, p.target_down);
    // random window subset keeps the local stream cost bounded per step
    for (int w = 0; w < cfg.train.refine_windows_per_step; ++w) {
      const std::size_t wid = wpick(rng);
      const std::size_t rr = std::size_t(rc.r_half());
      Tensor u_in_t = Tensor::from_vector({rr, rr, rr}, p.u_in.values);
      Tensor p_in = extract_window(u_in_t, tiling, wid);
      Tensor guidance = extract_guidance(u_out_down, tiling, wid);
      Tensor p_out = ls(p_in, guidance);
      const auto& off = tiling.windows[wid].out_offset;
      VoxelGrid tgt_win(tiling.s_out);
      for (int z = 0; z < tiling.s_out; ++z)
        for (int y = 0; y < tiling.s_out; ++y)
          for (int x = 0; x < tiling.s_out; ++x)
            tgt_win.at(x, y, z) = p.target.at(off[0] + x, off[1] + y, off[2] + z);
      loss = ops::add(loss, refine_loss(p_out, tgt_win));
    }
    backward(loss);
    ps.adam_step(cfg.train.lr);
    if (step % cfg.train.log_every == 0 || step + 1 == steps) {
      log.write({{"step", step}, {"sample", sample_name(dirs[si])}, {"loss", loss.scalar_value()}});
      std::cout << "refine step " << step << " loss " << loss.scalar_value() << "\n";
    }
  }
  ps.save(cfg.run_dir + "/refine.skf");

  // stitch and export refined volumes
  GradGuard guard(ps);
  for (std::size_t si = 0; si < prep.size(); ++si) {
    const Prepared& p = prep[si];
    Tensor u_out_down = gs(p.u_down, fv(p.code));
    const std::size_t rr = std::size_t(rc.r_half());
    Tensor u_in_t = Tensor::from_vector({rr, rr, rr}, p.u_in.values);
    std::vector<Tensor> wins;
    for (std::size_t wid = 0; wid < tiling.windows.size(); ++wid)
      wins.push_back(ls(extract_window(u_in_t, tiling, wid), extract_guidance(u_out_down, tiling, wid)));
    Tensor v = stitch(tiling, wins);
    VoxelGrid out(rc.r);
    out.values = v.values();
    save_skv(out, cfg.run_dir + "/volume_" + sample_name(dirs[si]) + ".skv");
  }
  return 0;
}

// ---- recon-explicit -------------------------------------------------------

int cmd_recon_explicit(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  require_checkpoint(cfg.run_dir + "/skeleton.skf", "train-skeleton");
  ParamStore enc_ps;
  enc_ps.load(cfg.run_dir + "/skeleton.skf");
  ImageEncoder encoder = ImageEncoder::fetch(enc_ps, "enc", std::size_t(cfg.model.code_dim));
  GradGuard enc_guard(enc_ps);

  GcnConfig gc;
  gc.layers = cfg.model.gcn_layers;
  gc.hidden = cfg.model.gcn_hidden;

  JsonlLog log(cfg.run_dir + "/log_recon_explicit.jsonl");
  std::ofstream metrics(cfg.run_dir + "/metrics_explicit.csv");
  metrics << "sample,cd,iou\n";
  for (const auto& d : dirs) {
    const ShapeSample s = load_sample(d);
    const std::string name = sample_name(d);
    const std::string refined = cfg.run_dir + "/volume_" + name + ".skv";
    const VoxelGrid v = fs::exists(refined) ? load_skv(refined) : s.gt_skeleton_volume;
    const TriangleMesh init = extract_initial_mesh(v, 0.5, cfg.model.max_mesh_vertices);
    const EncoderOutput enc = encoder(s.views[0].image);
    const Camera& cam = s.views[0].camera;

    std::mt19937_64 rng(cfg.seed + std::hash<std::string>{}(name));
    ParamStore ps;
    const std::size_t in_width = lifted_feature_width(enc) + 3;
    GcnNet net = GcnNet::create(ps, "gcn", in_width, gc, rng);

    for (int step = 0; step < cfg.train.gcnn_steps; ++step) {
      DeformResult def = deform(init, enc, cam, net);
      SkeGcnnLossParts parts =
          skegcnn_loss(def.vertices, init, s.gt_surface_samples, cfg.model.lambda1,
                       cfg.model.lambda2, cfg.model.gcnn_sample_budget, cfg.seed + std::size_t(step));
      backward(parts.total);
      ps.adam_step(cfg.train.lr);
      if (step % cfg.train.log_every == 0 || step + 1 == cfg.train.gcnn_steps) {
        log.write({{"sample", name},
                   {"step", step},
                   {"loss", parts.total.scalar_value()},
                   {"chamfer", parts.chamfer_part},
                   {"edge", parts.edge_part},
                   {"curvature", parts.curvature_part}});
        std::cout << "recon-explicit " << name << " step " << step << " loss "
                  << parts.total.scalar_value() << "\n";
      }
    }
    GradGuard guard(ps);
    DeformResult final = deform(init, enc, cam, net);
    save_obj(final.mesh, cfg.run_dir + "/explicit_" + name + ".obj");
    const EvalResult ev = evaluate_mesh(final.mesh, s.mesh, cfg.eval.cd_samples,
                                        cfg.eval.iou_resolution, cfg.seed);
    metrics << name << "," << ev.cd << "," << ev.iou << "\n";
  }
  return 0;
}

// ---- recon-implicit -------------------------------------------------------

int cmd_recon_implicit(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  require_checkpoint(cfg.run_dir + "/skeleton.skf", "train-skeleton");
  ParamStore enc_ps;
  enc_ps.load(cfg.run_dir + "/skeleton.skf");
  ImageEncoder encoder = ImageEncoder::fetch(enc_ps, "enc", std::size_t(cfg.model.code_dim));
  GradGuard enc_guard(enc_ps);

  JsonlLog log(cfg.run_dir + "/log_recon_implicit.jsonl");
  std::ofstream metrics(cfg.run_dir + "/metrics_implicit.csv");
  metrics << "sample,cd,iou\n";
  for (const auto& d : dirs) {
    const ShapeSample s = load_sample(d);
    const std::string name = sample_name(d);
    const EncoderOutput enc = encoder(s.views[0].image);
    const Camera& cam = s.views[0].camera;
    const std::string refined = cfg.run_dir + "/volume_" + name + ".skv";
    const VoxelGrid v =
        fs::exists(refined) ? binarize(load_skv(refined)) : s.gt_skeleton_volume;
    const LabeledPoints train_pts = sample_training_points(
        s.mesh, cfg.model.disn_points_per_shape, cfg.model.epsilon, cfg.seed + 3);

    std::mt19937_64 rng(cfg.seed + std::hash<std::string>{}(name) + 5);
    ParamStore ps;
    SkeDisnConfig dc;
    SkeDisn net = SkeDisn::create(ps, "disn", std::size_t(cfg.model.code_dim),
                                  lifted_feature_width(enc), dc, rng);
    std::uniform_int_distribution<std::size_t> pick(0, train_pts.points.rows() - 1);
    for (int step = 0; step < cfg.train.disn_steps; ++step) {
      Points batch(Eigen::Index(cfg.model.disn_batch), 3);
      std::vector<int> labels(cfg.model.disn_batch);
      for (std::size_t i = 0; i < cfg.model.disn_batch; ++i) {
        const std::size_t j = pick(rng);
        batch.row(Eigen::Index(i)) = train_pts.points.row(Eigen::Index(j));
        labels[i] = train_pts.inside[j];
      }
      Tensor probs = net.field(batch, enc, cam, v);
      Tensor loss = skedisn_loss(probs, labels);
      backward(loss);
      ps.adam_step(cfg.train.lr);
      if (step % cfg.train.log_every == 0 || step + 1 == cfg.train.disn_steps) {
        log.write({{"sample", name}, {"step", step}, {"loss", loss.scalar_value()}});
        std::cout << "recon-implicit " << name << " step " << step << " loss "
                  << loss.scalar_value() << "\n";
      }
    }
    ps.save(cfg.run_dir + "/disn_" + name + ".skf");

    GradGuard guard(ps);
    auto inside_prob = [&](const Points& q) {
      const Tensor p = net.field(q, enc, cam, v);
      Eigen::VectorXd out(q.rows());
      for (Eigen::Index i = 0; i < q.rows(); ++i) out(i) = p.value(std::size_t(2 * i + 1));
      return out;
    };
    const TriangleMesh mesh = extract_isosurface(inside_prob, cfg.eval.iou_resolution);
    save_obj(mesh, cfg.run_dir + "/implicit_" + name + ".obj");
    const EvalResult ev =
        evaluate_mesh(mesh, s.mesh, cfg.eval.cd_samples, cfg.eval.iou_resolution, cfg.seed);
    metrics << name << "," << ev.cd << "," << ev.iou << "\n";
  }
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  std::ofstream metrics(cfg.run_dir + "/metrics.csv");
  metrics << "sample,method,cd,iou\n";
  double cd_sum = 0, iou_sum = 0;
  int count = 0;
  for (const auto& d : dirs) {
    const ShapeSample s = load_sample(d);
    const std::string name = sample_name(d);
    for (const char* method : {"explicit", "implicit"}) {
      const std::string path = cfg.run_dir + "/" + method + "_" + name + ".obj";
      if (!fs::exists(path)) continue;
      const TriangleMesh pred = load_obj(path);
      const EvalResult ev =
          evaluate_mesh(pred, s.mesh, cfg.eval.cd_samples, cfg.eval.iou_resolution, cfg.seed);
      metrics << name << "," << method << "," << ev.cd << "," << ev.iou << "\n";
      std::cout << name << " " << method << " CD(x0.001) " << ev.cd << " IoU " << ev.iou << "\n";
      cd_sum += ev.cd;
      iou_sum += ev.iou;
      ++count;
    }
  }
  if (count == 0) throw ArtifactError("eval: no reconstructed meshes found under " + cfg.run_dir);
  std::cout << "aggregate CD(x0.001) " << cd_sum / count << " IoU " << iou_sum / count << "\n";
  return 0;
}

// ---- interp ---------------------------------------------------------------

int cmd_interp(const RunConfig& cfg) {
  const auto dirs = require_manifest(cfg);
  if (dirs.size() < 2) throw ArtifactError("interp: need at least two samples in the dataset");
  require_checkpoint(cfg.run_dir + "/skeleton.skf", "train-skeleton");
  ParamStore ps;
  ps.load(cfg.run_dir + "/skeleton.skf");
  ImageEncoder enc = ImageEncoder::fetch(ps, "enc", std::size_t(cfg.model.code_dim));
  SkeDecoder cur = SkeDecoder::fetch(ps, "cur");
  SkeDecoder sur = SkeDecoder::fetch(ps, "sur");
  GradGuard guard(ps);
  const PrimitiveSet lines = PrimitiveSet::lines(cfg.model.curve_primitives, cfg.model.curve_samples);
  const PrimitiveSet squares = PrimitiveSet::squares(cfg.model.sheet_primitives, cfg.model.sheet_grid);

  const ShapeSample a = load_sample(dirs[0]), b = load_sample(dirs[1]);
  const Eigen::VectorXd ca = enc(a.views[0].image).global_code.values();
  const Eigen::VectorXd cb = enc(b.views[0].image).global_code.values();
  for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const Eigen::VectorXd blend = (1.0 - w) * ca + w * cb;
    Tensor code = Tensor::from_vector({std::size_t(blend.size())}, blend);
    const Points curves = tensor_to_points(decode_curves(code, lines, cur));
    const Points sheets = tensor_to_points(decode_sheets(code, squares, sur));
    std::ostringstream nm;
    nm << cfg.run_dir << "/interp_w" << std::fixed << std::setprecision(2) << w << ".ply";
    save_ply(assemble_skeleton(curves, sheets), nm.str());
    std::cout << "wrote " << nm.str() << "\n";
  }
  return 0;
}

// ---- dispatch -------------------------------------------------------------

int run_command(const std::string& command, const RunConfig& cfg) {
  try {
    if (command == "gen-data") return cmd_gen_data(cfg);
    if (command == "train-skeleton") return cmd_train_skeleton(cfg);
    if (command == "refine") return cmd_refine(cfg);
    if (command == "recon-explicit") return cmd_recon_explicit(cfg);
    if (command == "recon-implicit") return cmd_recon_implicit(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "interp") return cmd_interp(cfg);
    std::cerr << "unknown command: " << command << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace skelforge
