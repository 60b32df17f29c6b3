#include <doctest.h>

#include <cstdlib>

#include "oc3d/net/train.hpp"
#include "oc3d/rng.hpp"

using namespace oc3d;
using namespace oc3d::net;

namespace {

// Synthetic record set: random patches, poses drawn wide enough to exercise
// the curriculum filter.
RecordFile synthetic_records(std::size_t n, int size, std::uint64_t seed) {
  RecordFile data;
  std::mt19937_64 g(seed);
  for (std::size_t i = 0; i < n; ++i) {
    PairRecord r;
    r.target_id = i / 2;
    r.view_a = 0;
    r.view_b = 1;
    r.label = i % 2 ? 1 : 0;
    r.baseline_deg = static_cast<float>(uniform_real(g, 0, 140));
    for (int k = 0; k < 3; ++k) r.pose_raw[k] = static_cast<float>(uniform_real(g, -2.5, 2.5));
    for (int k = 3; k < 6; ++k) r.pose_raw[k] = static_cast<float>(uniform_real(g, -8, 8));
    // distinct patches with identical per-channel byte multisets, so the
    // dataset input mean is the same for any subset of records
    r.patch_a = ImagePatch::create(size, size, 3);
    r.patch_b = ImagePatch::create(size, size, 3);
    for (std::size_t p = 0; p < r.patch_a.pixels.size(); ++p) {
      r.patch_a.pixels[p] = static_cast<std::uint8_t>((p / 3) & 0xFF);
      r.patch_b.pixels[p] = static_cast<std::uint8_t>((p / 3) & 0xFF);
    }
    const std::size_t plane = r.patch_a.pixels.size() / 3;
    for (int ch = 0; ch < 3; ++ch) {
      std::mt19937_64 ga(hash_combine(seed, i * 2, ch));
      std::mt19937_64 gb(hash_combine(seed, i * 2 + 1, ch));
      for (std::size_t p = plane; p > 1; --p) {
        std::swap(r.patch_a.pixels[(p - 1) * 3 + ch],
                  r.patch_a.pixels[uniform_index(ga, p) * 3 + ch]);
        std::swap(r.patch_b.pixels[(p - 1) * 3 + ch],
                  r.patch_b.pixels[uniform_index(gb, p) * 3 + ch]);
      }
    }
    data.records.push_back(std::move(r));
  }
  data.stats = fit_zscore(data.records);
  zscore_records(data.records, data.stats);
  return data;
}

TrainConfig tiny_config(long iters) {
  TrainConfig cfg;
  cfg.arch = "C(4,5,2)-ReLU-P(2,2)-F(16)-ReLU";
  cfg.input_px = 33;
  cfg.fusion_units = 16;
  cfg.batch = 16;
  cfg.max_iters = iters;
  cfg.lr0 = 0.01;
  cfg.lr_drop_every = 100000;
  cfg.clip_norm = 10;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("training is bit-deterministic and independent of the thread budget") {
  const RecordFile data = synthetic_records(24, 33, 3);
  const TrainConfig cfg = tiny_config(40);

  const TrainResult<double> a = train<double>(data, cfg);
  const TrainResult<double> b = train<double>(data, cfg);
  REQUIRE(a.net.params.size() == b.net.params.size());
  for (std::size_t i = 0; i < a.net.params.size(); ++i)
    CHECK(a.net.params[i].data == b.net.params[i].data);

  setenv("OC3D_THREADS", "1", 1);
  const TrainResult<double> c = train<double>(data, cfg);
  setenv("OC3D_THREADS", "3", 1);
  const TrainResult<double> d = train<double>(data, cfg);
  unsetenv("OC3D_THREADS");
  for (std::size_t i = 0; i < a.net.params.size(); ++i) {
    CHECK(a.net.params[i].data == c.net.params[i].data);
    CHECK(a.net.params[i].data == d.net.params[i].data);
  }

  // the log carries the documented fields
  REQUIRE(a.log.size() == 40);
  CHECK(a.log[0].iter == 0);
  CHECK(a.log[0].lr == doctest::Approx(0.01));
  const std::string csv = log_to_csv(a.log);
  CHECK(csv.rfind("iter,lr,loss_joint,loss_pose,loss_match,grad_norm\n", 0) == 0);
}

TEST_CASE("a 32-record set is overfit within 2000 iterations") {
  const RecordFile data = synthetic_records(32, 33, 11);
  TrainConfig cfg = tiny_config(2000);
  cfg.batch = 32;
  const TrainResult<double> r = train<double>(data, cfg);
  const double initial = r.log.front().loss_joint;
  const double final_loss = r.log.back().loss_joint;
  CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("curriculum stage 1 trains exactly on the angle-filtered subset") {
  const RecordFile data = synthetic_records(40, 33, 7);
  // manual filter: |roll|,|yaw|,|pitch| <= 90 degrees
  RecordFile filtered;
  filtered.stats = data.stats;
  for (const PairRecord& r : data.records) {
    const double limit = M_PI / 2;
    if (std::abs(r.pose_raw[0]) <= limit && std::abs(r.pose_raw[1]) <= limit &&
        std::abs(r.pose_raw[2]) <= limit)
      filtered.records.push_back(r);
  }
  REQUIRE(filtered.records.size() >= 8);
  REQUIRE(filtered.records.size() < data.records.size());

  TrainConfig cfg = tiny_config(30);
  cfg.batch = 8;
  cfg.curriculum = {{90.0, 1000}};  // never leaves stage 1
  const TrainResult<double> staged = train<double>(data, cfg);

  TrainConfig plain = cfg;
  plain.curriculum.clear();
  const TrainResult<double> manual = train<double>(filtered, plain);
  for (std::size_t i = 0; i < staged.net.params.size(); ++i)
    CHECK(staged.net.params[i].data == manual.net.params[i].data);
}

TEST_CASE("curriculum advances to the full range after the stage budget") {
  const RecordFile data = synthetic_records(40, 33, 7);
  TrainConfig cfg = tiny_config(20);
  cfg.batch = 8;
  cfg.curriculum = {{90.0, 10}};
  const TrainResult<double> r = train<double>(data, cfg);
  CHECK(r.log.size() == 20);  // both stages ran
}

TEST_CASE("quaternion and l2 configurations train and carry 7-dim label stats") {
  const RecordFile data = synthetic_records(24, 33, 13);
  TrainConfig cfg = tiny_config(10);
  cfg.pose_param = "quaternion";
  const TrainResult<float> q = train<float>(data, cfg);
  CHECK(q.net.pose_dim == 7);
  CHECK(q.net.label_mean.size() == 7);
  CHECK(q.net.label_std[0] == 1.0);  // quaternion dims unscaled

  cfg.pose_param = "euler";
  cfg.pose_loss = "l2";
  const TrainResult<float> l2 = train<float>(data, cfg);
  CHECK(l2.net.pose_dim == 6);
  for (const LogRow& row : l2.log) CHECK(std::isfinite(row.loss_joint));
}

TEST_CASE("task variants mask the other head's loss") {
  const RecordFile data = synthetic_records(24, 33, 17);
  TrainConfig cfg = tiny_config(5);
  cfg.task = "pose";
  const TrainResult<float> p = train<float>(data, cfg);
  for (const LogRow& row : p.log) CHECK(row.loss_joint == row.loss_pose);
  cfg.task = "match";
  const TrainResult<float> m = train<float>(data, cfg);
  for (const LogRow& row : m.log) CHECK(row.loss_joint == row.loss_match);
}

TEST_CASE("max_iters 0 returns the seeded initialization") {
  const RecordFile data = synthetic_records(8, 33, 19);
  TrainConfig cfg = tiny_config(0);
  const TrainResult<float> r = train<float>(data, cfg);
  CHECK(r.log.empty());
  SiameseNet<float> fresh = build_net<float>(
      parse_arch(cfg.arch, cfg.input_px, cfg.input_px, 3), cfg.fusion_units, cfg.pose_param);
  init_params(fresh, cfg.seed);
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(fresh.params[i].data == r.net.params[i].data);
}
