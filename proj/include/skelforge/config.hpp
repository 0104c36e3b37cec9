#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skelforge {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing upstream artifact (trained checkpoint, dataset, ...).
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string run_dir = "runs/default";

  struct Dataset {
    std::vector<std::string> shapes = {"torus", "sphere", "box_frame", "table"};
    int shapes_per_kind = 2;
    int mesh_resolution = 64;
    int volume_resolution = 64;
    int dilation_radius = -1;  // <0: resolution-scaled default
    int num_views = 6;
    int image_size = 64;
    std::size_t surface_samples = 10000;
  } dataset;

  struct Model {
    double alpha = 0.2;
    double beta = 1.0;
    double scaling_m = 10.0;
    double lambda1 = 0.7;
    double lambda2 = 3e-4;
    double epsilon = 0.1;
    int kappa_k = 16;
    double kappa_angle_deg = 60.0;
    double kappa_high = 5.0;
    int curve_primitives = 20;
    int curve_samples = 64;
    int sheet_primitives = 20;
    int sheet_grid = 8;
    int r = 64;
    int code_dim = 512;
    std::vector<int> global_down = {32, 64, 128, 128};
    std::vector<int> global_up = {128, 64, 32, 2};
    std::vector<int> local_down = {32, 64, 128, 128};
    std::vector<int> local_up = {128, 64, 32, 16, 2};
    int feature_volume_channels = 8;
    int gcn_layers = 6;
    int gcn_hidden = 192;
    std::size_t gcnn_sample_budget = 2048;
    std::size_t max_mesh_vertices = 10000;
    std::size_t disn_points_per_shape = 4096;
    std::size_t disn_batch = 128;
  } model;

  struct Train {
    double lr = 1e-3;
    int skeleton_steps = 2000;
    int refine_steps = 500;
    int refine_windows_per_step = 4;
    int gcnn_steps = 1000;
    int disn_steps = 2000;
    int log_every = 25;
  } train;

  struct Eval {
    std::size_t cd_samples = 10000;
    int iou_resolution = 64;
  } eval;
};

/// Load a JSON config, apply `key.path=value` overrides, reject unknown keys.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig config_from_json_text(const std::string& text, const std::vector<std::string>& overrides = {});
std::string config_to_json_text(const RunConfig& cfg);

}  // namespace skelforge
