#include "skelforge/config.hpp"

#include <fstream>
#include <json.hpp>

namespace skelforge {

using nlohmann::json;

namespace {

json defaults_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["run_dir"] = c.run_dir;
  json& d = j["dataset"];
  d["shapes"] = c.dataset.shapes;
  d["shapes_per_kind"] = c.dataset.shapes_per_kind;
  d["mesh_resolution"] = c.dataset.mesh_resolution;
  d["volume_resolution"] = c.dataset.volume_resolution;
  d["dilation_radius"] = c.dataset.dilation_radius;
  d["num_views"] = c.dataset.num_views;
  d["image_size"] = c.dataset.image_size;
  d["surface_samples"] = c.dataset.surface_samples;
  json& m = j["model"];
  m["alpha"] = c.model.alpha;
  m["beta"] = c.model.beta;
  m["scaling_m"] = c.model.scaling_m;
  m["lambda1"] = c.model.lambda1;
  m["lambda2"] = c.model.lambda2;
  m["epsilon"] = c.model.epsilon;
  m["kappa_k"] = c.model.kappa_k;
  m["kappa_angle_deg"] = c.model.kappa_angle_deg;
  m["kappa_high"] = c.model.kappa_high;
  m["curve_primitives"] = c.model.curve_primitives;
  m["curve_samples"] = c.model.curve_samples;
  m["sheet_primitives"] = c.model.sheet_primitives;
  m["sheet_grid"] = c.model.sheet_grid;
  m["r"] = c.model.r;
  m["code_dim"] = c.model.code_dim;
  m["global_down"] = c.model.global_down;
  m["global_up"] = c.model.global_up;
  m["local_down"] = c.model.local_down;
  m["local_up"] = c.model.local_up;
  m["feature_volume_channels"] = c.model.feature_volume_channels;
  m["gcn_layers"] = c.model.gcn_layers;
  m["gcn_hidden"] = c.model.gcn_hidden;
  m["gcnn_sample_budget"] = c.model.gcnn_sample_budget;
  m["max_mesh_vertices"] = c.model.max_mesh_vertices;
  m["disn_points_per_shape"] = c.model.disn_points_per_shape;
  m["disn_batch"] = c.model.disn_batch;
  json& t = j["train"];
  t["lr"] = c.train.lr;
  t["skeleton_steps"] = c.train.skeleton_steps;
  t["refine_steps"] = c.train.refine_steps;
  t["refine_windows_per_step"] = c.train.refine_windows_per_step;
  t["gcnn_steps"] = c.train.gcnn_steps;
  t["disn_steps"] = c.train.disn_steps;
  t["log_every"] = c.train.log_every;
  json& e = j["eval"];
  e["cd_samples"] = c.eval.cd_samples;
  e["iou_resolution"] = c.eval.iou_resolution;
  return j;
}

void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: expected an object at '" + path + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key_path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key_path);
    } else {
      if (slot.type() != it.value().type() &&
          !(slot.is_number() && it.value().is_number()))
        throw ConfigError("config: wrong type for '" + key_path + "'");
      slot = it.value();
    }
  }
}

void apply_override(json& base, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quoting on the command line
  }
  json* slot = &base;
  std::size_t pos = 0;
  std::string walked;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    walked = walked.empty() ? key : walked + "." + key;
    if (!slot->contains(key)) throw ConfigError("config: unknown key '" + walked + "'");
    slot = &(*slot)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (slot->is_object()) throw ConfigError("config: cannot override object '" + path + "'");
  if (slot->type() != value.type() && !(slot->is_number() && value.is_number()))
    throw ConfigError("config: wrong type for '" + path + "'");
  *slot = value;
}

RunConfig from_merged(const json& j) {
  RunConfig c;
  c.seed = j.at("seed");
  c.data_dir = j.at("data_dir");
  c.run_dir = j.at("run_dir");
  const json& d = j.at("dataset");
  c.dataset.shapes = d.at("shapes").get<std::vector<std::string>>();
  c.dataset.shapes_per_kind = d.at("shapes_per_kind");
  c.dataset.mesh_resolution = d.at("mesh_resolution");
  c.dataset.volume_resolution = d.at("volume_resolution");
  c.dataset.dilation_radius = d.at("dilation_radius");
  c.dataset.num_views = d.at("num_views");
  c.dataset.image_size = d.at("image_size");
  c.dataset.surface_samples = d.at("surface_samples");
  const json& m = j.at("model");
  c.model.alpha = m.at("alpha");
  c.model.beta = m.at("beta");
  c.model.scaling_m = m.at("scaling_m");
  c.model.lambda1 = m.at("lambda1");
  c.model.lambda2 = m.at("lambda2");
  c.model.epsilon = m.at("epsilon");
  c.model.kappa_k = m.at("kappa_k");
  c.model.kappa_angle_deg = m.at("kappa_angle_deg");
  c.model.kappa_high = m.at("kappa_high");
  c.model.curve_primitives = m.at("curve_primitives");
  c.model.curve_samples = m.at("curve_samples");
  c.model.sheet_primitives = m.at("sheet_primitives");
  c.model.sheet_grid = m.at("sheet_grid");
  c.model.r = m.at("r");
  c.model.code_dim = m.at("code_dim");
  c.model.global_down = m.at("global_down").get<std::vector<int>>();
  c.model.global_up = m.at("global_up").get<std::vector<int>>();
  c.model.local_down = m.at("local_down").get<std::vector<int>>();
  c.model.local_up = m.at("local_up").get<std::vector<int>>();
  c.model.feature_volume_channels = m.at("feature_volume_channels");
  c.model.gcn_layers = m.at("gcn_layers");
  c.model.gcn_hidden = m.at("gcn_hidden");
  c.model.gcnn_sample_budget = m.at("gcnn_sample_budget");
  c.model.max_mesh_vertices = m.at("max_mesh_vertices");
  c.model.disn_points_per_shape = m.at("disn_points_per_shape");
  c.model.disn_batch = m.at("disn_batch");
  const json& t = j.at("train");
  c.train.lr = t.at("lr");
  c.train.skeleton_steps = t.at("skeleton_steps");
  c.train.refine_steps = t.at("refine_steps");
  c.train.refine_windows_per_step = t.at("refine_windows_per_step");
  c.train.gcnn_steps = t.at("gcnn_steps");
  c.train.disn_steps = t.at("disn_steps");
  c.train.log_every = t.at("log_every");
  const json& e = j.at("eval");
  c.eval.cd_samples = e.at("cd_samples");
  c.eval.iou_resolution = e.at("iou_resolution");
  return c;
}

RunConfig from_text_or_json(const json& loaded, const std::vector<std::string>& overrides) {
  json base = defaults_json(RunConfig{});
  merge_checked(base, loaded, "");
  for (const auto& kv : overrides) apply_override(base, kv);
  return from_merged(base);
}

}  // namespace

RunConfig config_from_json_text(const std::string& text, const std::vector<std::string>& overrides) {
  json loaded;
  try {
    loaded = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return from_text_or_json(loaded, overrides);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json_text(text, overrides);
}

std::string config_to_json_text(const RunConfig& cfg) { return defaults_json(cfg).dump(2); }

}  // namespace skelforge
