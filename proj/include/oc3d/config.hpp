#pragma once

#include <json.hpp>
#include <string>

#include "oc3d/align.hpp"
#include "oc3d/capture.hpp"
#include "oc3d/net/train.hpp"
#include "oc3d/scene.hpp"

namespace oc3d {

// Whole-pipeline configuration. One JSON document with per-stage sections;
// unknown keys are rejected so typos fail loudly before any stage runs.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // scene generation
  int scene_count = 12;
  SceneParams scene;     // world_offset is derived per scene index
  double scene_gap_m = 30.0;

  // capture
  int patch_px = 192;
  double fov_deg = 60.0;
  double cam_height_m = 2.5;
  double candidate_spacing_m = 5.0;
  double min_view_dist_m = 6.0;
  double max_view_dist_m = 40.0;
  int max_views_per_bundle = 6;
  int targets_per_scene = 110;
  double target_margin = 0.18;

  // noise injection
  bool noise_enabled = true;
  NoiseStats noise;

  // alignment
  AlignThresholds align;

  // dataset
  double neg_per_pos_train = 1.0;
  double neg_per_pos_test = 4.4;
  double test_fraction = 0.2;
  double buffer_m = 25.0;
  int input_px = 65;

  // training
  net::TrainConfig train;
  std::string checkpoint_name = "model.oc3w";

  // evaluation
  int eval_bins = 8;
  bool eval_normals = false;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

// Applies a dot-path override like "train.batch=64" onto the JSON document.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace oc3d
