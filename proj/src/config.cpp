#include "oc3d/config.hpp"

#include <fstream>
#include <set>

namespace oc3d {

namespace {

using nlohmann::json;

// Section reader that rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(Err::InvalidParams, "config: " + name_ + " must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(Err::InvalidParams, "config: bad value for " + name_ + "." + key);
    }
  }

  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(Err::InvalidParams, "config: unknown key " + name_ + "." + key);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  if (scene_count < 1) fail(Err::InvalidParams, "config: scene.count must be >= 1");
  if (scene.n_blocks < 1) fail(Err::InvalidParams, "config: scene.n_blocks must be >= 1");
  if (!(scene.street_width_m > 0) || !(scene.building_width_m > 0) || !(scene.building_height_m > 0))
    fail(Err::InvalidParams, "config: scene dimensions must be positive");
  if (scene_gap_m < 0) fail(Err::InvalidParams, "config: scene.gap_m must be >= 0");
  if (patch_px < 8) fail(Err::InvalidParams, "config: capture.patch_px must be >= 8");
  if (!(fov_deg > 0) || fov_deg >= 180) fail(Err::InvalidParams, "config: capture.fov_deg out of range");
  if (!(candidate_spacing_m > 0)) fail(Err::InvalidParams, "config: capture.candidate_spacing_m must be > 0");
  if (max_views_per_bundle < 2) fail(Err::InvalidParams, "config: capture.max_views_per_bundle must be >= 2");
  if (targets_per_scene < 1) fail(Err::InvalidParams, "config: capture.targets_per_scene must be >= 1");
  if (target_margin < 0 || target_margin >= 0.5)
    fail(Err::InvalidParams, "config: capture.target_margin must be in [0, 0.5)");
  if (noise.mean_px < 0 || noise.std_px < 0 || noise.max_px < 0)
    fail(Err::InvalidParams, "config: noise statistics must be nonnegative");
  if (neg_per_pos_train < 0 || neg_per_pos_test < 0)
    fail(Err::InvalidParams, "config: dataset ratios must be >= 0");
  if (!(test_fraction > 0) || !(test_fraction < 1))
    fail(Err::InvalidParams, "config: dataset.test_fraction must be in (0, 1)");
  if (buffer_m < 0) fail(Err::InvalidParams, "config: dataset.buffer_m must be >= 0");
  if (input_px < 8) fail(Err::InvalidParams, "config: dataset.input_px must be >= 8");
  if (input_px > patch_px) fail(Err::InvalidParams, "config: dataset.input_px must not exceed capture.patch_px");
  if (eval_bins < 1) fail(Err::InvalidParams, "config: eval.bins must be >= 1");
  train.validate();
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (!j.is_object()) fail(Err::InvalidParams, "config: top level must be an object");
  Section top(j, "config");
  top.get("seed", c.seed);
  top.get("out_dir", c.out_dir);

  static const json empty = json::object();
  auto section = [&](const char* key) -> const json& {
    return j.contains(key) ? j.at(key) : empty;
  };
  {
    Section s(section("scene"), "scene");
    s.get("count", c.scene_count);
    s.get("n_blocks", c.scene.n_blocks);
    s.get("street_width_m", c.scene.street_width_m);
    s.get("building_width_m", c.scene.building_width_m);
    s.get("building_height_m", c.scene.building_height_m);
    s.get("texture_mix", c.scene.texture_mix);
    s.get("gap_m", c.scene_gap_m);
    s.finish();
  }
  {
    Section s(section("capture"), "capture");
    s.get("patch_px", c.patch_px);
    s.get("fov_deg", c.fov_deg);
    s.get("cam_height_m", c.cam_height_m);
    s.get("candidate_spacing_m", c.candidate_spacing_m);
    s.get("min_view_dist_m", c.min_view_dist_m);
    s.get("max_view_dist_m", c.max_view_dist_m);
    s.get("max_views_per_bundle", c.max_views_per_bundle);
    s.get("targets_per_scene", c.targets_per_scene);
    s.get("target_margin", c.target_margin);
    s.finish();
  }
  {
    Section s(section("noise"), "noise");
    s.get("enabled", c.noise_enabled);
    s.get("mean_px", c.noise.mean_px);
    s.get("std_px", c.noise.std_px);
    s.get("max_px", c.noise.max_px);
    s.finish();
  }
  {
    Section s(section("align"), "align");
    s.get("min_ssim", c.align.min_ssim);
    s.get("max_translation_px", c.align.max_translation_px);
    s.get("max_log_scale", c.align.max_log_scale);
    s.get("block_px", c.align.block_px);
    s.get("search_px", c.align.search_px);
    s.get("pyramid_levels", c.align.pyramid_levels);
    s.get("ransac_iters", c.align.ransac_iters);
    s.get("ransac_inlier_px", c.align.ransac_inlier_px);
    s.finish();
  }
  {
    Section s(section("dataset"), "dataset");
    s.get("neg_per_pos_train", c.neg_per_pos_train);
    s.get("neg_per_pos_test", c.neg_per_pos_test);
    s.get("test_fraction", c.test_fraction);
    s.get("buffer_m", c.buffer_m);
    s.get("input_px", c.input_px);
    s.finish();
  }
  {
    const json& tj = section("train");
    Section s(tj, "train");
    s.get("arch", c.train.arch);
    s.get("input_px", c.train.input_px);
    s.get("fusion_units", c.train.fusion_units);
    s.get("task", c.train.task);
    s.get("pose_param", c.train.pose_param);
    s.get("pose_loss", c.train.pose_loss);
    s.get("lr0", c.train.lr0);
    s.get("lr_drop_every", c.train.lr_drop_every);
    s.get("lr_factor", c.train.lr_factor);
    s.get("momentum", c.train.momentum);
    s.get("batch", c.train.batch);
    s.get("clip_norm", c.train.clip_norm);
    s.get("lambda", c.train.lambda);
    s.get("max_iters", c.train.max_iters);
    s.get("float64", c.train.float64);
    s.get("seed", c.train.seed);
    s.get("checkpoint", c.checkpoint_name);
    s.mark("curriculum");
    if (tj.contains("curriculum")) {
      c.train.curriculum.clear();
      if (!tj.at("curriculum").is_array())
        fail(Err::InvalidParams, "config: train.curriculum must be an array");
      for (const auto& st : tj.at("curriculum")) {
        net::CurriculumStage stage;
        Section ss(st, "train.curriculum[]");
        ss.get("max_abs_angle_deg", stage.max_abs_angle_deg);
        ss.get("iters", stage.iters);
        ss.finish();
        c.train.curriculum.push_back(stage);
      }
    }
    s.finish();
  }
  {
    Section s(section("eval"), "eval");
    s.get("bins", c.eval_bins);
    s.get("normals", c.eval_normals);
    s.finish();
  }
  top.mark("scene");
  top.mark("capture");
  top.mark("noise");
  top.mark("align");
  top.mark("dataset");
  top.mark("train");
  top.mark("eval");
  top.finish();

  if (c.train.seed == 0) c.train.seed = c.seed;
  if (c.train.input_px == 0 && net::arch_default_input(c.train.arch) == 0)
    c.train.input_px = c.input_px;
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["scene"] = {{"count", c.scene_count},
                {"n_blocks", c.scene.n_blocks},
                {"street_width_m", c.scene.street_width_m},
                {"building_width_m", c.scene.building_width_m},
                {"building_height_m", c.scene.building_height_m},
                {"texture_mix", c.scene.texture_mix},
                {"gap_m", c.scene_gap_m}};
  j["capture"] = {{"patch_px", c.patch_px},
                  {"fov_deg", c.fov_deg},
                  {"cam_height_m", c.cam_height_m},
                  {"candidate_spacing_m", c.candidate_spacing_m},
                  {"min_view_dist_m", c.min_view_dist_m},
                  {"max_view_dist_m", c.max_view_dist_m},
                  {"max_views_per_bundle", c.max_views_per_bundle},
                  {"targets_per_scene", c.targets_per_scene},
                  {"target_margin", c.target_margin}};
  j["noise"] = {{"enabled", c.noise_enabled},
                {"mean_px", c.noise.mean_px},
                {"std_px", c.noise.std_px},
                {"max_px", c.noise.max_px}};
  j["align"] = {{"min_ssim", c.align.min_ssim},
                {"max_translation_px", c.align.max_translation_px},
                {"max_log_scale", c.align.max_log_scale},
                {"block_px", c.align.block_px},
                {"search_px", c.align.search_px},
                {"pyramid_levels", c.align.pyramid_levels},
                {"ransac_iters", c.align.ransac_iters},
                {"ransac_inlier_px", c.align.ransac_inlier_px}};
  j["dataset"] = {{"neg_per_pos_train", c.neg_per_pos_train},
                  {"neg_per_pos_test", c.neg_per_pos_test},
                  {"test_fraction", c.test_fraction},
                  {"buffer_m", c.buffer_m},
                  {"input_px", c.input_px}};
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& st : c.train.curriculum)
    stages.push_back({{"max_abs_angle_deg", st.max_abs_angle_deg}, {"iters", st.iters}});
  j["train"] = {{"arch", c.train.arch},
                {"input_px", c.train.input_px},
                {"fusion_units", c.train.fusion_units},
                {"task", c.train.task},
                {"pose_param", c.train.pose_param},
                {"pose_loss", c.train.pose_loss},
                {"lr0", c.train.lr0},
                {"lr_drop_every", c.train.lr_drop_every},
                {"lr_factor", c.train.lr_factor},
                {"momentum", c.train.momentum},
                {"batch", c.train.batch},
                {"clip_norm", c.train.clip_norm},
                {"lambda", c.train.lambda},
                {"max_iters", c.train.max_iters},
                {"curriculum", stages},
                {"float64", c.train.float64},
                {"seed", c.train.seed},
                {"checkpoint", c.checkpoint_name}};
  j["eval"] = {{"bins", c.eval_bins}, {"normals", c.eval_normals}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Err::MissingArtifact, "config file not found: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Err::InvalidParams, std::string("config: parse error: ") + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(Err::InvalidParams, "override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) fail(Err::InvalidParams, "override has an empty path segment: " + assignment);
    if (dot == std::string::npos) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(value);
      } catch (const nlohmann::json::exception&) {
        parsed = value;  // unquoted strings pass through
      }
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

}  // namespace oc3d
