#include "oc3d/pipeline.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "oc3d/align.hpp"
#include "oc3d/evalmetrics.hpp"
#include "oc3d/net/checkpoint.hpp"
#include "oc3d/net/train.hpp"
#include "oc3d/parallel.hpp"
#include "oc3d/rng.hpp"

namespace oc3d::pipeline {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string zero_pad(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Err::Io, "cannot create directory: " + dir);
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::Io, "cannot open for write: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Err::Io, "write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::MissingArtifact, "missing artifact: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const nlohmann::json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }

ordered_json mat3_json(const Mat3& m) {
  ordered_json a = ordered_json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

Mat3 mat3_from(const nlohmann::json& j) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r * 3 + c);
  return m;
}

std::uint64_t stage_seed(const RunConfig& c, std::uint64_t tag, std::uint64_t a = 0,
                         std::uint64_t b = 0) {
  return hash_combine(hash_combine(c.seed, tag), a, b);
}

}  // namespace

std::string Paths::scene_file(int i) const { return scenes_dir + "/scene_" + zero_pad(i) + ".json"; }
std::string Paths::bundle_file(int i) const { return bundles_dir + "/scene_" + zero_pad(i) + ".json"; }
std::string Paths::patches_file(int i) const {
  return bundles_dir + "/scene_" + zero_pad(i) + ".patches.bin";
}
std::string Paths::align_file(int i) const {
  return bundles_dir + "/scene_" + zero_pad(i) + ".align.jsonl";
}

Paths paths_for(const RunConfig& config) {
  Paths p;
  p.root = config.out_dir;
  p.scenes_dir = p.root + "/scenes";
  p.bundles_dir = p.root + "/bundles";
  p.records_dir = p.root + "/records";
  p.train_dir = p.root + "/train";
  p.eval_dir = p.root + "/eval";
  p.train_records = p.records_dir + "/train.oc3d";
  p.test_records = p.records_dir + "/test.oc3d";
  p.split_file = p.records_dir + "/split.json";
  p.checkpoint = p.train_dir + "/" + config.checkpoint_name;
  p.train_log = p.checkpoint + ".log.csv";
  p.report_json = p.eval_dir + "/report.json";
  p.roc_csv = p.eval_dir + "/roc.csv";
  p.bins_csv = p.eval_dir + "/baseline_bins.csv";
  return p;
}

void cmd_generate(const RunConfig& config) {
  const Paths paths = paths_for(config);
  ensure_dir(paths.scenes_dir);
  for (int i = 0; i < config.scene_count; ++i) {
    SceneParams params = config.scene;
    params.world_offset = Vec3(i * (params.extent_m() + config.scene_gap_m), 0.0, 0.0);
    const Scene scene = generate_scene(stage_seed(config, 0x5ce9e, i), params);
    save_scene(paths.scene_file(i), scene);
  }
}

void save_bundles(const std::string& json_path, const std::string& patches_path,
                  const std::vector<TaggedBundle>& bundles) {
  ordered_json j;
  j["format"] = "oc3d-bundles";
  j["version"] = 1;
  std::string blob;
  ordered_json entries = ordered_json::array();
  for (const TaggedBundle& tb : bundles) {
    ordered_json bj;
    bj["target_id"] = tb.target_id;
    bj["point"] = vec3_json(tb.bundle.target.point);
    bj["normal"] = vec3_json(tb.bundle.target.normal);
    bj["facade_id"] = tb.bundle.target.facade_id;
    bj["uv"] = {tb.bundle.target.uv.x(), tb.bundle.target.uv.y()};
    ordered_json views = ordered_json::array();
    for (const View& v : tb.bundle.views) {
      ordered_json vj;
      vj["rotation"] = mat3_json(v.extrinsics.rotation.matrix());
      vj["center"] = vec3_json(v.extrinsics.center);
      vj["actual_rotation"] = mat3_json(v.actual.rotation.matrix());
      vj["fx"] = v.intrinsics.fx;
      vj["fy"] = v.intrinsics.fy;
      vj["cx"] = v.intrinsics.cx;
      vj["cy"] = v.intrinsics.cy;
      vj["size"] = v.intrinsics.width;
      vj["patch_px"] = ordered_json::array({v.patch.width, v.patch.height, v.patch.channels});
      vj["center_offset_px"] = {v.center_offset_px.x(), v.center_offset_px.y()};
      vj["pruned"] = v.pruned;
      vj["patch_offset"] = blob.size();
      blob.append(reinterpret_cast<const char*>(v.patch.pixels.data()), v.patch.pixels.size());
      views.push_back(vj);
    }
    bj["views"] = views;
    entries.push_back(bj);
  }
  j["bundles"] = entries;
  write_file(json_path, j.dump(1) + "\n");
  write_file(patches_path, blob);
}

std::vector<TaggedBundle> load_bundles(const std::string& json_path,
                                       const std::string& patches_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    fail(Err::CorruptFile, std::string("bundle json: ") + e.what());
  }
  const std::string blob = read_file(patches_path);
  std::vector<TaggedBundle> out;
  try {
    if (j.at("format") != "oc3d-bundles" || j.at("version") != 1)
      fail(Err::CorruptFile, "bundle json: bad format/version");
    for (const auto& bj : j.at("bundles")) {
      TaggedBundle tb;
      tb.target_id = bj.at("target_id");
      tb.bundle.target.point = vec3_from(bj.at("point"));
      tb.bundle.target.normal = vec3_from(bj.at("normal"));
      tb.bundle.target.facade_id = bj.at("facade_id");
      tb.bundle.target.uv = Vec2(bj.at("uv").at(0), bj.at("uv").at(1));
      for (const auto& vj : bj.at("views")) {
        View v;
        v.extrinsics.rotation = Rotation(mat3_from(vj.at("rotation")));
        v.extrinsics.center = vec3_from(vj.at("center"));
        v.actual.rotation = Rotation(mat3_from(vj.at("actual_rotation")));
        v.actual.center = v.extrinsics.center;
        v.intrinsics.fx = vj.at("fx");
        v.intrinsics.fy = vj.at("fy");
        v.intrinsics.cx = vj.at("cx");
        v.intrinsics.cy = vj.at("cy");
        v.intrinsics.width = vj.at("size");
        v.intrinsics.height = vj.at("size");
        const auto& px = vj.at("patch_px");
        v.patch = ImagePatch::create(px.at(0), px.at(1), px.at(2));
        v.center_offset_px = Vec2(vj.at("center_offset_px").at(0), vj.at("center_offset_px").at(1));
        v.pruned = vj.at("pruned");
        const std::size_t off = vj.at("patch_offset");
        if (off + v.patch.pixels.size() > blob.size())
          fail(Err::CorruptFile, "bundle blob: truncated");
        std::memcpy(v.patch.pixels.data(), blob.data() + off, v.patch.pixels.size());
        tb.bundle.views.push_back(std::move(v));
      }
      out.push_back(std::move(tb));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Err::CorruptFile, std::string("bundle json: ") + e.what());
  }
  return out;
}

void cmd_render(const RunConfig& config, int dump_previews) {
  const Paths paths = paths_for(config);
  ensure_dir(paths.bundles_dir);
  for (int i = 0; i < config.scene_count; ++i) {
    const Scene scene = load_scene(paths.scene_file(i));
    const auto targets =
        sample_targets(scene, config.targets_per_scene, stage_seed(config, 0x7a96e7, i),
                       config.target_margin);
    const auto candidates =
        street_candidates(scene.params, config.candidate_spacing_m, config.cam_height_m);

    std::vector<TaggedBundle> bundles;
    std::string align_lines;
    for (int t = 0; t < static_cast<int>(targets.size()); ++t) {
      const Target& target = targets[t];
      // distance-gated candidates, deterministic order
      std::vector<Vec3> close;
      for (const Vec3& c : candidates) {
        const double d = (target.point - c).norm();
        if (d >= config.min_view_dist_m && d <= config.max_view_dist_m) close.push_back(c);
      }
      if (close.empty()) continue;
      const auto visible = visible_viewpoints(scene, target, close);
      if (visible.size() < 2) continue;
      // spread the kept views evenly across the visible set
      std::vector<Vec3> chosen;
      const std::size_t want = std::min<std::size_t>(config.max_views_per_bundle, visible.size());
      for (std::size_t k = 0; k < want; ++k) {
        const std::size_t idx = want == 1 ? 0 : k * (visible.size() - 1) / (want - 1);
        chosen.push_back(close[visible[idx]]);
      }
      Bundle bundle = build_bundle(scene, target, chosen, config.fov_deg, config.patch_px);
      if (!bundle.usable()) continue;
      if (config.noise_enabled && (config.noise.mean_px > 0 || config.noise.std_px > 0))
        bundle = inject_noise(scene, bundle, config.noise, stage_seed(config, 0x4015e, i, t));

      AlignThresholds th = config.align;
      th.seed = stage_seed(config, 0xa119, i, t);
      const AlignmentReport report = align_bundle(bundle, th);
      bundle = apply_alignment(scene, bundle, report);
      align_lines += alignment_report_jsonl(report);

      // training-resolution patches; geometry metadata stays at render scale
      for (View& v : bundle.views)
        v.patch = resample_area(v.patch, config.input_px, config.input_px);

      TaggedBundle tb;
      tb.target_id = static_cast<std::uint64_t>(i) * 1000000ull + static_cast<std::uint64_t>(t);
      tb.bundle = std::move(bundle);
      bundles.push_back(std::move(tb));
    }
    save_bundles(paths.bundle_file(i), paths.patches_file(i), bundles);
    write_file(paths.align_file(i), align_lines);
    for (int p = 0; p < dump_previews && p < static_cast<int>(bundles.size()); ++p)
      for (std::size_t v = 0; v < bundles[p].bundle.views.size(); ++v)
        write_pnm(paths.bundles_dir + "/preview_s" + zero_pad(i) + "_b" + std::to_string(p) +
                      "_v" + std::to_string(v) + ".ppm",
                  bundles[p].bundle.views[v].patch);
  }
}

void cmd_pack(const RunConfig& config) {
  const Paths paths = paths_for(config);
  ensure_dir(paths.records_dir);

  std::vector<Aabb> bounds;
  for (int i = 0; i < config.scene_count; ++i) bounds.push_back(load_scene(paths.scene_file(i)).bounds);
  const SplitResult split =
      geofenced_split(bounds, config.test_fraction, config.buffer_m, stage_seed(config, 0x5617));

  auto collect = [&](const std::vector<std::size_t>& ids) {
    std::vector<TaggedBundle> all;
    for (std::size_t i : ids) {
      auto part = load_bundles(paths.bundle_file(static_cast<int>(i)),
                               paths.patches_file(static_cast<int>(i)));
      for (auto& tb : part) all.push_back(std::move(tb));
    }
    return all;
  };

  const auto train_bundles = collect(split.train);
  const auto test_bundles = collect(split.test);
  auto train_records = make_pairs(train_bundles, config.neg_per_pos_train, stage_seed(config, 0x9e60, 1));
  auto test_records = make_pairs(test_bundles, config.neg_per_pos_test, stage_seed(config, 0x9e60, 2));

  // z-scoring always uses the training statistics
  const ZScoreStats stats = fit_zscore(train_records);
  zscore_records(train_records, stats);
  zscore_records(test_records, stats);
  write_records(paths.train_records, train_records, stats);
  write_records(paths.test_records, test_records, stats);

  ordered_json sj;
  sj["train_scenes"] = split.train;
  sj["test_scenes"] = split.test;
  sj["train_records"] = train_records.size();
  sj["test_records"] = test_records.size();
  write_file(paths.split_file, sj.dump(2) + "\n");
}

void cmd_train(const RunConfig& config) {
  const Paths paths = paths_for(config);
  ensure_dir(paths.train_dir);
  const RecordFile data = read_records(paths.train_records);
  if (config.train.float64) {
    const auto result = net::train<double>(data, config.train);
    net::save_checkpoint(paths.checkpoint, result.net);
    write_file(paths.train_log, net::log_to_csv(result.log));
  } else {
    const auto result = net::train<float>(data, config.train);
    net::save_checkpoint(paths.checkpoint, result.net);
    write_file(paths.train_log, net::log_to_csv(result.log));
  }
}

namespace {

// Pose prediction in label space -> raw Pose6D. Quaternion heads decode
// through the rotation matrix; gimbal-locked decodes are dropped by the
// caller via the optional return.
std::optional<Pose6D> decode_pose(const net::SiameseNet<double>& net,
                                  const std::vector<double>& head) {
  Pose6D p;
  if (net.pose_param == "euler") {
    std::array<double, 6> z{};
    for (int k = 0; k < 6; ++k) z[k] = head[k];
    std::array<double, 6> raw{};
    for (int k = 0; k < 6; ++k) raw[k] = z[k] * net.label_std[k] + net.label_mean[k];
    p.angles = {raw[0], raw[1], raw[2]};
    p.translation = Vec3(raw[3], raw[4], raw[5]);
    return p;
  }
  Eigen::Vector4d q(head[0], head[1], head[2], head[3]);
  if (q.norm() < 1e-9) return std::nullopt;
  q.normalize();
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  try {
    p.angles = rotation_to_euler(Rotation(quat.toRotationMatrix()));
  } catch (const Error& e) {
    if (e.code() == Err::GimbalLock) return std::nullopt;
    throw;
  }
  for (int k = 0; k < 3; ++k)
    p.translation[k] = head[4 + k] * net.label_std[4 + k] + net.label_mean[4 + k];
  return p;
}

ordered_json normals_report(const RunConfig& config, const net::SiameseNet<double>& net);

}  // namespace

nlohmann::ordered_json cmd_eval(const RunConfig& config, const std::string& checkpoint_path) {
  const Paths paths = paths_for(config);
  ensure_dir(paths.eval_dir);
  const net::SiameseNet<double> net = net::load_checkpoint_f64(checkpoint_path);
  const RecordFile data = read_records(paths.test_records);
  const std::size_t n = data.records.size();
  if (n == 0) fail(Err::InsufficientData, "eval: empty test set");

  std::vector<double> scores(n);
  std::vector<int> labels(n);
  std::vector<std::vector<double>> heads(n);
  parallel_for(n, [&](std::size_t i) {
    thread_local net::JointWs<double> ws;
    const auto out = net::forward_joint(net, data.records[i].patch_a, data.records[i].patch_b, ws);
    scores[i] = net::sigmoid(out.match_logit);
    labels[i] = data.records[i].label;
    heads[i] = *out.pose;
  });

  const RocCurve curve = roc(scores, labels);
  const double auc_value = auc(curve);
  const double fpr95 = fpr_at_recall(curve, 0.95);

  std::vector<Pose6D> preds, gts;
  std::vector<double> baselines;
  std::size_t undecodable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.records[i].label != 1) continue;
    const auto pred = decode_pose(net, heads[i]);
    if (!pred) {
      ++undecodable;
      continue;
    }
    Pose6D gt;
    gt.angles = {data.records[i].pose_raw[0], data.records[i].pose_raw[1], data.records[i].pose_raw[2]};
    gt.translation = Vec3(data.records[i].pose_raw[3], data.records[i].pose_raw[4],
                          data.records[i].pose_raw[5]);
    preds.push_back(*pred);
    gts.push_back(gt);
    baselines.push_back(data.records[i].baseline_deg);
  }
  if (preds.empty()) fail(Err::InsufficientData, "eval: no matching pairs to score");
  const PoseStats stats = pose_stats(preds, gts);

  // angular error per baseline for the robustness table; pairs with a
  // zero-norm Euler triplet are excluded (pose_stats counts them)
  std::vector<double> binned_errors, binned_baselines;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    try {
      binned_errors.push_back(angular_error_deg(preds[i].angles.vector(), gts[i].angles.vector()));
      binned_baselines.push_back(baselines[i]);
    } catch (const Error& e) {
      if (e.code() != Err::ZeroVector) throw;
    }
  }
  const auto bins = baseline_bins(binned_errors, binned_baselines, config.eval_bins);

  ordered_json report;
  report["test_records"] = n;
  report["positives"] = curve.positives;
  report["negatives"] = curve.negatives;
  report["auc"] = auc_value;
  report["fpr95"] = fpr95;
  ordered_json pj;
  pj["count"] = preds.size();
  pj["median_angular_deg"] = stats.median_angular_deg;
  pj["mean_angular_deg"] = stats.mean_angular_deg;
  pj["median_translation"] = stats.median_translation;
  pj["mean_translation"] = stats.mean_translation;
  pj["skipped_zero_norm"] = stats.skipped;
  pj["skipped_undecodable"] = undecodable;
  report["pose"] = pj;
  ordered_json bj = ordered_json::array();
  for (const auto& b : bins)
    bj.push_back({{"lo_deg", b.lo}, {"hi_deg", b.hi}, {"count", b.count},
                  {"median_angular_deg", b.median_error}});
  report["baseline_bins"] = bj;
  if (config.eval_normals) report["normals"] = normals_report(config, net);

  write_file(paths.report_json, report.dump(2) + "\n");

  std::string roc_csv = "fpr,tpr\n";
  char line[96];
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.10g,%.10g\n", curve.fpr[i], curve.tpr[i]);
    roc_csv += line;
  }
  write_file(paths.roc_csv, roc_csv);

  std::string bins_csv = "lo_deg,hi_deg,count,median_angular_deg\n";
  for (const auto& b : bins) {
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%zu,%.10g\n", b.lo, b.hi, b.count,
                  b.median_error);
    bins_csv += line;
  }
  write_file(paths.bins_csv, bins_csv);

  std::string scores_csv = "label,score,baseline_deg\n";
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.6g\n", labels[i], scores[i],
                  static_cast<double>(data.records[i].baseline_deg));
    scores_csv += line;
  }
  write_file(paths.eval_dir + "/scores.csv", scores_csv);
  return report;
}

namespace {

// Frozen-representation surface-normal probe over the rendered bundles:
// 20-way classification of the camera-frame facade normal, read out with a
// linear classifier and 1-NN on the tower embeddings.
ordered_json normals_report(const RunConfig& config, const net::SiameseNet<double>& net) {
  const Paths paths = paths_for(config);
  nlohmann::json split;
  try {
    split = nlohmann::json::parse(read_file(paths.split_file));
  } catch (const nlohmann::json::exception& e) {
    fail(Err::CorruptFile, std::string("split file: ") + e.what());
  }

  auto gather = [&](const std::vector<std::size_t>& ids, std::vector<std::vector<double>>* reps,
                    std::vector<Vec3>* normals) {
    for (std::size_t scene_id : ids) {
      const auto bundles = load_bundles(paths.bundle_file(static_cast<int>(scene_id)),
                                        paths.patches_file(static_cast<int>(scene_id)));
      std::vector<const View*> views;
      std::vector<Vec3> view_normals;
      for (const TaggedBundle& tb : bundles)
        for (const View& v : tb.bundle.views) {
          if (v.pruned) continue;
          views.push_back(&v);
          view_normals.push_back(v.extrinsics.rotation * tb.bundle.target.normal);
        }
      const std::size_t base = reps->size();
      reps->resize(base + views.size());
      normals->insert(normals->end(), view_normals.begin(), view_normals.end());
      parallel_for(views.size(), [&](std::size_t i) {
        (*reps)[base + i] = net::embed(net, views[i]->patch);
      });
    }
  };

  std::vector<std::vector<double>> train_reps, test_reps;
  std::vector<Vec3> train_normals, test_normals;
  gather(split.at("train_scenes").get<std::vector<std::size_t>>(), &train_reps, &train_normals);
  gather(split.at("test_scenes").get<std::vector<std::size_t>>(), &test_reps, &test_normals);
  if (train_reps.size() < 40 || test_reps.empty())
    fail(Err::InsufficientData, "normals report: not enough unpruned views");

  const NormalCodebook codebook = fit_normal_codebook(train_normals, 20, stage_seed(config, 0xc0de));
  std::vector<int> train_bins, test_bins;
  for (const Vec3& v : train_normals) train_bins.push_back(assign_normal(codebook, v));
  for (const Vec3& v : test_normals) test_bins.push_back(assign_normal(codebook, v));

  const LinearProbe probe =
      linear_readout_classify(train_reps, train_bins, 20, 300, 0.5, stage_seed(config, 0x11ea5));
  std::vector<int> linear_pred;
  for (const auto& r : test_reps) linear_pred.push_back(probe.predict_class(r));
  const NormalReport linear = binned_normal_report(linear_pred, test_bins, codebook);

  const std::vector<int> knn_pred = knn_readout(train_reps, train_bins, test_reps, 1);
  const NormalReport knn = binned_normal_report(knn_pred, test_bins, codebook);

  auto to_json = [](const NormalReport& r) {
    return ordered_json{{"accuracy", r.accuracy},
                        {"mean_deg", r.mean_deg},
                        {"median_deg", r.median_deg},
                        {"binned_accuracy", r.binned_accuracy},
                        {"binned_mean_deg", r.binned_mean_deg},
                        {"binned_median_deg", r.binned_median_deg}};
  };
  ordered_json out;
  out["train_views"] = train_reps.size();
  out["test_views"] = test_reps.size();
  out["linear"] = to_json(linear);
  out["knn"] = to_json(knn);
  return out;
}

}  // namespace

void cmd_embed(const RunConfig& config, const std::string& checkpoint_path,
               const std::vector<std::string>& inputs, const std::string& out_csv) {
  (void)config;
  const net::SiameseNet<double> net = net::load_checkpoint_f64(checkpoint_path);
  std::vector<std::vector<double>> vectors;
  for (const std::string& input : inputs) {
    if (input.size() > 5 && input.substr(input.size() - 5) == ".oc3d") {
      const RecordFile data = read_records(input);
      const std::size_t base = vectors.size();
      vectors.resize(base + data.records.size());
      parallel_for(data.records.size(), [&](std::size_t i) {
        vectors[base + i] = net::embed(net, data.records[i].patch_a);
      });
    } else {
      ImagePatch patch = read_pnm(input);
      if (patch.width != net.arch.input.w || patch.height != net.arch.input.h)
        patch = resample_area(patch, net.arch.input.w, net.arch.input.h);
      vectors.push_back(net::embed(net, patch));
    }
  }
  std::string csv;
  char num[40];
  for (const auto& v : vectors) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(num, sizeof(num), i + 1 == v.size() ? "%.9g\n" : "%.9g,", v[i]);
      csv += num;
    }
  }
  write_file(out_csv, csv);
}

std::string render_report_table(const nlohmann::json& report) {
  char line[160];
  std::string out;
  auto row = [&](const char* k, double v) {
    std::snprintf(line, sizeof(line), "  %-28s %12.6g\n", k, v);
    out += line;
  };
  out += "matching\n";
  row("auc", report.at("auc"));
  row("fpr@95", report.at("fpr95"));
  row("positives", report.at("positives"));
  row("negatives", report.at("negatives"));
  out += "pose (matching pairs)\n";
  const auto& p = report.at("pose");
  row("median angular (deg)", p.at("median_angular_deg"));
  row("mean angular (deg)", p.at("mean_angular_deg"));
  row("median translation", p.at("median_translation"));
  row("mean translation", p.at("mean_translation"));
  out += "baseline bins (deg -> median angular error)\n";
  for (const auto& b : report.at("baseline_bins")) {
    std::snprintf(line, sizeof(line), "  [%6.2f, %6.2f]  n=%-6llu median=%.4g\n",
                  b.at("lo_deg").get<double>(), b.at("hi_deg").get<double>(),
                  static_cast<unsigned long long>(b.at("count").get<std::size_t>()),
                  b.at("median_angular_deg").get<double>());
    out += line;
  }
  if (report.contains("normals")) {
    const auto& nm = report.at("normals");
    out += "surface-normal readout (20 bins)\n";
    row("linear accuracy", nm.at("linear").at("accuracy"));
    row("linear binned accuracy", nm.at("linear").at("binned_accuracy"));
    row("knn accuracy", nm.at("knn").at("accuracy"));
    row("knn binned accuracy", nm.at("knn").at("binned_accuracy"));
  }
  return out;
}

}  // namespace oc3d::pipeline
