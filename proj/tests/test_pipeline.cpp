#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "oc3d/net/checkpoint.hpp"
#include "oc3d/pipeline.hpp"

using namespace oc3d;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config_json(const std::string& out_dir) {
  nlohmann::json j;
  j["seed"] = 21;
  j["out_dir"] = out_dir;
  j["scene"] = {{"count", 4}, {"n_blocks", 1}};
  j["capture"] = {{"targets_per_scene", 6}, {"patch_px", 96}, {"max_views_per_bundle", 4}};
  j["noise"] = {{"mean_px", 5.0}, {"std_px", 3.0}, {"max_px", 10.0}};
  j["align"] = {{"max_translation_px", 40.0}};
  j["dataset"] = {{"input_px", 33}, {"test_fraction", 0.25}, {"buffer_m", 5.0}};
  j["train"] = {{"arch", "C(4,5,2)-ReLU-P(2,2)-F(16)-ReLU"},
                {"input_px", 33},
                {"fusion_units", 16},
                {"batch", 16},
                {"max_iters", 20},
                {"curriculum", nlohmann::json::array({{{"max_abs_angle_deg", 90.0}, {"iters", 10}}})}};
  j["eval"] = {{"normals", true}};
  return j;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config: defaults, overrides, unknown keys, bad values") {
  nlohmann::json j = tiny_config_json("/tmp/oc3d_cfg");
  const RunConfig c = config_from_json(j);
  CHECK(c.scene_count == 4);
  CHECK(c.train.batch == 16);
  CHECK(c.train.seed == 21);  // inherits the global seed

  apply_override(j, "train.batch=32");
  apply_override(j, "capture.fov_deg=55.5");
  apply_override(j, "train.pose_param=quaternion");
  const RunConfig c2 = config_from_json(j);
  CHECK(c2.train.batch == 32);
  CHECK(c2.fov_deg == 55.5);
  CHECK(c2.train.pose_param == "quaternion");

  nlohmann::json bad = tiny_config_json("/tmp/oc3d_cfg");
  bad["capture"]["focal"] = 3;
  try {
    (void)config_from_json(bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::InvalidParams);
    CHECK(std::string(e.what()).find("capture.focal") != std::string::npos);
  }

  nlohmann::json bad2 = tiny_config_json("/tmp/oc3d_cfg");
  bad2["dataset"]["test_fraction"] = 1.5;
  CHECK_THROWS_AS((void)config_from_json(bad2), Error);

  nlohmann::json bad3 = tiny_config_json("/tmp/oc3d_cfg");
  bad3["train"]["task"] = "everything";
  CHECK_THROWS_AS((void)config_from_json(bad3), Error);
}

TEST_CASE("pipeline stages produce consistent artifacts end to end") {
  const std::string dir = "/tmp/oc3d_pipe_test";
  fs::remove_all(dir);
  const RunConfig config = config_from_json(tiny_config_json(dir));
  const pipeline::Paths paths = pipeline::paths_for(config);

  pipeline::cmd_generate(config);
  for (int i = 0; i < config.scene_count; ++i) CHECK(fs::exists(paths.scene_file(i)));
  // idempotent: regenerating produces identical bytes
  const std::string scene0 = slurp(paths.scene_file(0));
  pipeline::cmd_generate(config);
  CHECK(slurp(paths.scene_file(0)) == scene0);

  pipeline::cmd_render(config);
  const auto bundles = pipeline::load_bundles(paths.bundle_file(0), paths.patches_file(0));
  CHECK(!bundles.empty());
  for (const auto& tb : bundles) {
    CHECK(tb.bundle.views.size() >= 2);
    for (const View& v : tb.bundle.views) {
      CHECK(v.patch.width == config.input_px);
      CHECK(v.patch.channels == 3);
    }
  }

  pipeline::cmd_pack(config);
  const RecordFile train_data = read_records(paths.train_records);
  const RecordFile test_data = read_records(paths.test_records);
  CHECK(train_data.records.size() >= 20);
  CHECK(test_data.records.size() >= 10);
  CHECK(train_data.stats.mean == test_data.stats.mean);  // test carries train stats
  // geo-fencing: no target id appears on both sides
  std::set<std::uint64_t> train_ids, test_ids;
  for (const auto& r : train_data.records) train_ids.insert(r.target_id);
  for (const auto& r : test_data.records) test_ids.insert(r.target_id);
  for (std::uint64_t id : test_ids) CHECK(!train_ids.count(id));

  pipeline::cmd_train(config);
  CHECK(fs::exists(paths.checkpoint));
  CHECK(fs::exists(paths.train_log));
  const std::string log = slurp(paths.train_log);
  CHECK(log.rfind("iter,lr,loss_joint,loss_pose,loss_match,grad_norm\n", 0) == 0);

  const auto report = pipeline::cmd_eval(config, paths.checkpoint);
  CHECK(report.contains("auc"));
  CHECK(report.contains("fpr95"));
  CHECK(report.at("pose").contains("median_angular_deg"));
  CHECK(report.at("baseline_bins").size() == static_cast<std::size_t>(config.eval_bins));
  // frozen-representation surface-normal readout
  REQUIRE(report.contains("normals"));
  CHECK(report.at("normals").at("linear").contains("binned_accuracy"));
  CHECK(report.at("normals").at("knn").contains("accuracy"));
  CHECK(report.at("normals").at("train_views").get<int>() >= 40);
  CHECK(fs::exists(paths.report_json));
  CHECK(fs::exists(paths.roc_csv));
  CHECK(fs::exists(paths.bins_csv));

  // an untrained (random-init) checkpoint scores at chance
  RunConfig random_cfg = config;
  random_cfg.train.max_iters = 0;
  random_cfg.checkpoint_name = "random.oc3w";
  pipeline::cmd_train(random_cfg);
  const auto chance = pipeline::cmd_eval(random_cfg, pipeline::paths_for(random_cfg).checkpoint);
  // chance behavior; wide bounds because this test set is tiny (the
  // acceptance suite checks [0.4, 0.6] on the full-size split)
  const double auc_value = chance.at("auc");
  CHECK(auc_value > 0.2);
  CHECK(auc_value < 0.8);

  // embeddings: one row per record, tower width columns
  pipeline::cmd_embed(config, paths.checkpoint, {paths.test_records}, dir + "/emb.csv");
  const std::string emb = slurp(dir + "/emb.csv");
  std::size_t rows = 0;
  for (char ch : emb) rows += ch == '\n';
  CHECK(rows == test_data.records.size());
  const std::string first = emb.substr(0, emb.find('\n'));
  CHECK(std::count(first.begin(), first.end(), ',') == 15);  // 16 columns

  // report table renders
  const std::string table = pipeline::render_report_table(report);
  CHECK(table.find("auc") != std::string::npos);
  CHECK(table.find("median angular") != std::string::npos);
}

TEST_CASE("bundle files round trip") {
  const std::string dir = "/tmp/oc3d_pipe_test";  // artifacts from the previous case
  const RunConfig config = config_from_json(tiny_config_json(dir));
  const pipeline::Paths paths = pipeline::paths_for(config);
  if (!fs::exists(paths.bundle_file(0))) {
    pipeline::cmd_generate(config);
    pipeline::cmd_render(config);
  }
  const auto bundles = pipeline::load_bundles(paths.bundle_file(0), paths.patches_file(0));
  pipeline::save_bundles(dir + "/resaved.json", dir + "/resaved.bin", bundles);
  CHECK(slurp(dir + "/resaved.json") == slurp(paths.bundle_file(0)));
  CHECK(slurp(dir + "/resaved.bin") == slurp(paths.patches_file(0)));
}

TEST_CASE("missing artifacts raise MissingArtifact") {
  RunConfig config = config_from_json(tiny_config_json("/tmp/oc3d_missing"));
  fs::remove_all("/tmp/oc3d_missing");
  try {
    pipeline::cmd_render(config);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::MissingArtifact);
  }
  try {
    pipeline::cmd_train(config);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::MissingArtifact);
  }
}
