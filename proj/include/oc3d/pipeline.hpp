#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "oc3d/config.hpp"
#include "oc3d/dataset.hpp"

namespace oc3d::pipeline {

// Artifact layout under config.out_dir. Every stage consumes only the
// artifacts of the stage before it.
struct Paths {
  std::string root;
  std::string scenes_dir, bundles_dir, records_dir, train_dir, eval_dir;
  std::string scene_file(int i) const;
  std::string bundle_file(int i) const;
  std::string patches_file(int i) const;
  std::string align_file(int i) const;
  std::string train_records, test_records, split_file;
  std::string checkpoint, train_log;
  std::string report_json, roc_csv, bins_csv;
};
Paths paths_for(const RunConfig& config);

void cmd_generate(const RunConfig& config);
// dump_previews > 0 writes that many bundles' first-view patches per scene
// as PPM files next to the bundle artifacts (inspection only).
void cmd_render(const RunConfig& config, int dump_previews = 0);
void cmd_pack(const RunConfig& config);
void cmd_train(const RunConfig& config);
nlohmann::ordered_json cmd_eval(const RunConfig& config, const std::string& checkpoint_path);
void cmd_embed(const RunConfig& config, const std::string& checkpoint_path,
               const std::vector<std::string>& inputs, const std::string& out_csv);
std::string render_report_table(const nlohmann::json& report);

// Bundle persistence (scene-indexed JSON metadata + raw patch blob).
void save_bundles(const std::string& json_path, const std::string& patches_path,
                  const std::vector<TaggedBundle>& bundles);
std::vector<TaggedBundle> load_bundles(const std::string& json_path, const std::string& patches_path);

}  // namespace oc3d::pipeline
