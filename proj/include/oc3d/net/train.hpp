#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "oc3d/dataset.hpp"
#include "oc3d/net/loss.hpp"
#include "oc3d/net/optim.hpp"
#include "oc3d/net/siamese.hpp"
#include "oc3d/parallel.hpp"

namespace oc3d::net {

struct CurriculumStage {
  double max_abs_angle_deg = 90.0;
  long iters = 0;
};

struct TrainConfig {
  std::string arch = "desk65";
  int input_px = 0;       // 0 -> arch default
  int fusion_units = 0;   // 0 -> arch default
  std::string task = "joint";        // joint | pose | match
  std::string pose_param = "euler";  // euler | quaternion
  std::string pose_loss = "robust";  // robust | l2
  double lr0 = 0.001;
  long lr_drop_every = 60000;
  double lr_factor = 0.1;
  double momentum = 0.9;
  int batch = 256;
  double clip_norm = 10.0;
  double lambda = 1.0;
  long max_iters = 1000;
  std::vector<CurriculumStage> curriculum;  // stages before the final full-range stage
  std::uint64_t seed = 0;
  bool float64 = false;  // callers pick the instantiation with this

  void validate() const {
    if (batch < 1 || max_iters < 0 || !(lr0 > 0) || !(clip_norm > 0) || lambda < 0 ||
        lr_drop_every < 1 || momentum < 0)
      fail(Err::InvalidParams, "train config: non-positive setting");
    if (task != "joint" && task != "pose" && task != "match")
      fail(Err::InvalidParams, "train config: unknown task " + task);
    if (pose_param != "euler" && pose_param != "quaternion")
      fail(Err::InvalidParams, "train config: unknown pose_param " + pose_param);
    if (pose_loss != "robust" && pose_loss != "l2")
      fail(Err::InvalidParams, "train config: unknown pose_loss " + pose_loss);
  }
};

struct LossWeights {
  double w_pose = 1.0;
  double w_match = 1.0;
  bool robust = true;
  bool quaternion = false;
};

inline LossWeights loss_weights(const TrainConfig& cfg) {
  LossWeights w;
  w.robust = cfg.pose_loss == "robust";
  w.quaternion = cfg.pose_param == "quaternion";
  if (cfg.task == "pose") {
    w.w_pose = 1.0;
    w.w_match = 0.0;
  } else if (cfg.task == "match") {
    w.w_pose = 0.0;
    w.w_match = 1.0;
  } else {
    w.w_pose = 1.0;
    w.w_match = cfg.lambda;
  }
  return w;
}

template <typename T>
struct BatchExample {
  const ImagePatch* a = nullptr;
  const ImagePatch* b = nullptr;
  int label = 0;
  std::array<T, 7> pose_label{};  // first pose_dim entries meaningful
};

struct BatchStats {
  double sum_pose = 0;   // masked pose losses
  double sum_match = 0;
  std::size_t count = 0;
};

struct LogRow {
  long iter = 0;
  double lr = 0, loss_joint = 0, loss_pose = 0, loss_match = 0, grad_norm = 0;
};

// Forward + loss for one example; fills head gradient seeds when requested.
template <typename T>
void example_loss(const SiameseNet<T>& net, const BatchExample<T>& ex, const LossWeights& w,
                  JointWs<T>& ws, double* out_pose_loss, double* out_match_loss,
                  std::vector<T>* dpose, T* dmatch) {
  const auto out = forward_joint_pre(net, patch_to_input(net, *ex.a), patch_to_input(net, *ex.b), ws);
  const int dim = net.pose_dim;
  *out_pose_loss = 0;
  if (dpose) dpose->assign(dim, T(0));
  if (ex.label == 1 && w.w_pose != 0) {
    std::array<T, 7> grad{};
    T loss;
    if (w.quaternion)
      loss = quat_pose_loss(ex.pose_label.data(), out.pose->data(), w.robust,
                            dpose ? grad.data() : nullptr);
    else if (w.robust)
      loss = robust_pose_loss(ex.pose_label.data(), out.pose->data(), dim,
                              dpose ? grad.data() : nullptr);
    else
      loss = l2_pose_loss(ex.pose_label.data(), out.pose->data(), dim, dpose ? grad.data() : nullptr);
    *out_pose_loss = static_cast<double>(loss);
    if (dpose)
      for (int i = 0; i < dim; ++i) (*dpose)[i] = static_cast<T>(w.w_pose) * grad[i];
  }
  T mgrad{};
  *out_match_loss = static_cast<double>(match_loss(ex.label, out.match_logit, dmatch ? &mgrad : nullptr));
  if (dmatch) *dmatch = static_cast<T>(w.w_match) * mgrad;
}

// Deterministic batch gradient: examples are processed in fixed-size waves
// (parallel within a wave, each example into its own buffer) and reduced in
// example-index order, so results do not depend on the thread budget.
inline constexpr std::size_t kWaveSize = 8;

template <typename T>
BatchStats batch_backward(const SiameseNet<T>& net, std::span<const BatchExample<T>> batch,
                          const LossWeights& w, GradBuf<T>& total,
                          std::vector<JointWs<T>>& ws_slots, std::vector<GradBuf<T>>& grad_slots) {
  if (ws_slots.size() < kWaveSize) ws_slots.resize(kWaveSize);
  while (grad_slots.size() < kWaveSize) grad_slots.push_back(make_grad_buf(net));

  BatchStats stats;
  stats.count = batch.size();
  std::array<double, kWaveSize> pose_l{}, match_l{};
  for (std::size_t base = 0; base < batch.size(); base += kWaveSize) {
    const std::size_t wave = std::min(kWaveSize, batch.size() - base);
    parallel_for(wave, [&](std::size_t s) {
      zero_grad(grad_slots[s]);
      std::vector<T> dpose;
      T dmatch{};
      example_loss(net, batch[base + s], w, ws_slots[s], &pose_l[s], &match_l[s], &dpose, &dmatch);
      backward_joint(net, ws_slots[s], dpose, dmatch, grad_slots[s]);
    });
    for (std::size_t s = 0; s < wave; ++s) {
      stats.sum_pose += pose_l[s];
      stats.sum_match += match_l[s];
      for (std::size_t pi = 0; pi < total.size(); ++pi) {
        const auto& g = grad_slots[s][pi];
        auto& t = total[pi];
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += g[i];
      }
    }
  }
  return stats;
}

// Loss only (no gradients); used by finite-difference checks.
template <typename T>
BatchStats batch_loss(const SiameseNet<T>& net, std::span<const BatchExample<T>> batch,
                      const LossWeights& w, JointWs<T>& ws) {
  BatchStats stats;
  stats.count = batch.size();
  for (const auto& ex : batch) {
    double pl, ml;
    example_loss<T>(net, ex, w, ws, &pl, &ml, nullptr, nullptr);
    stats.sum_pose += pl;
    stats.sum_match += ml;
  }
  return stats;
}

inline double joint_of(const BatchStats& s, const LossWeights& w) {
  if (s.count == 0) return 0;
  return (w.w_pose * s.sum_pose + w.w_match * s.sum_match) / static_cast<double>(s.count);
}

// ---- label preparation -----------------------------------------------------

template <typename T>
std::array<T, 7> euler_label(const PairRecord& r) {
  std::array<T, 7> out{};
  for (int i = 0; i < 6; ++i) out[i] = static_cast<T>(r.pose_z[i]);
  return out;
}

// Quaternion labels: unit quaternion of the relative rotation (w >= 0) plus
// z-scored translation; quaternion components are left unscaled.
template <typename T>
std::array<T, 7> quaternion_label(const PairRecord& r, const std::vector<double>& mean,
                                  const std::vector<double>& stddev) {
  EulerAngles e{r.pose_raw[0], r.pose_raw[1], r.pose_raw[2]};
  Eigen::Quaterniond q(euler_to_rotation(e).matrix());
  if (q.w() < 0) q.coeffs() *= -1;
  std::array<T, 7> out{};
  out[0] = static_cast<T>(q.w());
  out[1] = static_cast<T>(q.x());
  out[2] = static_cast<T>(q.y());
  out[3] = static_cast<T>(q.z());
  for (int i = 0; i < 3; ++i)
    out[4 + i] = static_cast<T>((r.pose_raw[3 + i] - mean[4 + i]) / stddev[4 + i]);
  return out;
}

// Per-channel input mean over both patches of every record, [0,1] scale.
// Integer accumulation keeps the value exact for any accumulation order.
inline std::array<double, 3> dataset_input_mean(const std::vector<PairRecord>& records) {
  std::array<std::uint64_t, 3> sum{};
  std::uint64_t n = 0;
  for (const PairRecord& r : records) {
    const int c = r.patch_a.channels;
    for (const ImagePatch* p : {&r.patch_a, &r.patch_b}) {
      for (std::size_t i = 0; i < p->pixels.size(); ++i) sum[i % c] += p->pixels[i];
      n += p->pixels.size() / c;
    }
  }
  std::array<double, 3> mean{};
  for (int i = 0; i < 3; ++i)
    mean[i] = n ? static_cast<double>(sum[i]) / (255.0 * static_cast<double>(n)) : 0.0;
  if (!records.empty() && records[0].patch_a.channels == 1) mean[1] = mean[2] = mean[0];
  return mean;
}

// ---- training driver -------------------------------------------------------

template <typename T>
struct TrainResult {
  SiameseNet<T> net;
  std::vector<LogRow> log;
};

template <typename T>
TrainResult<T> train(const RecordFile& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.records.empty()) fail(Err::InsufficientData, "train: no records");

  const std::string tokens = arch_tokens(cfg.arch);
  const int input_px = cfg.input_px > 0 ? cfg.input_px : arch_default_input(cfg.arch);
  const int fusion = cfg.fusion_units > 0 ? cfg.fusion_units : arch_default_fusion(cfg.arch);
  if (input_px <= 0 || fusion <= 0)
    fail(Err::InvalidParams, "train: input_px and fusion_units required for custom arch strings");
  const int channels = data.records[0].patch_a.channels;

  SiameseNet<T> net = build_net<T>(parse_arch(tokens, input_px, input_px, channels), fusion,
                                   cfg.pose_param);
  init_params(net, cfg.seed);
  net.input_mean = dataset_input_mean(data.records);

  // Label statistics live with the checkpoint so evaluation can undo them.
  if (cfg.pose_param == "euler") {
    net.label_mean.assign(6, 0.0);
    net.label_std.assign(6, 1.0);
    for (int i = 0; i < 6; ++i) {
      net.label_mean[i] = data.stats.mean[i];
      net.label_std[i] = data.stats.stddev[i];
    }
  } else {
    net.label_mean.assign(7, 0.0);
    net.label_std.assign(7, 1.0);
    std::array<double, 3> sum{}, sum2{};
    std::size_t n = 0;
    for (const PairRecord& r : data.records) {
      if (r.label != 1) continue;
      for (int i = 0; i < 3; ++i) {
        sum[i] += r.pose_raw[3 + i];
        sum2[i] += static_cast<double>(r.pose_raw[3 + i]) * r.pose_raw[3 + i];
      }
      ++n;
    }
    if (n < 2) fail(Err::InsufficientData, "train: quaternion stats need >= 2 matches");
    for (int i = 0; i < 3; ++i) {
      net.label_mean[4 + i] = sum[i] / n;
      net.label_std[4 + i] =
          std::max(std::sqrt(std::max(0.0, sum2[i] / n - net.label_mean[4 + i] * net.label_mean[4 + i])),
                   1e-8);
    }
  }

  std::vector<std::array<T, 7>> labels(data.records.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = cfg.pose_param == "euler"
                    ? euler_label<T>(data.records[i])
                    : quaternion_label<T>(data.records[i], net.label_mean, net.label_std);

  // Curriculum stages: listed angle-limited stages, then the full range.
  struct Stage {
    double max_deg;
    long iters;
  };
  std::vector<Stage> stages;
  long listed = 0;
  for (const auto& s : cfg.curriculum) {
    stages.push_back({s.max_abs_angle_deg, s.iters});
    listed += s.iters;
  }
  stages.push_back({360.0, std::max<long>(0, cfg.max_iters - listed)});

  const LossWeights weights = loss_weights(cfg);
  GradBuf<T> total = make_grad_buf(net);
  GradBuf<T> velocity = make_grad_buf(net);
  std::vector<JointWs<T>> ws_slots;
  std::vector<GradBuf<T>> grad_slots;
  std::vector<LogRow> log;
  log.reserve(static_cast<std::size_t>(std::max<long>(cfg.max_iters, 0)));

  long iter = 0;
  for (std::size_t si = 0; si < stages.size() && iter < cfg.max_iters; ++si) {
    const Stage& stage = stages[si];
    if (stage.iters <= 0) continue;
    const double limit = stage.max_deg * M_PI / 180.0;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      const auto& p = data.records[i].pose_raw;
      if (std::abs(p[0]) <= limit && std::abs(p[1]) <= limit && std::abs(p[2]) <= limit)
        pool.push_back(i);
    }
    if (pool.empty()) fail(Err::InsufficientData, "train: curriculum stage has no records");
    const std::size_t batch_n = std::min<std::size_t>(cfg.batch, pool.size());

    std::mt19937_64 shuffler(hash_combine(cfg.seed, 0xba7c4, si));
    std::size_t cursor = pool.size();  // force an initial shuffle
    const long stage_end = std::min<long>(cfg.max_iters, iter + stage.iters);
    std::vector<BatchExample<T>> batch(batch_n);
    for (; iter < stage_end; ++iter) {
      if (cursor + batch_n > pool.size()) {
        shuffle_indices(shuffler, pool);
        cursor = 0;
      }
      for (std::size_t b = 0; b < batch_n; ++b) {
        const std::size_t ri = pool[cursor + b];
        batch[b].a = &data.records[ri].patch_a;
        batch[b].b = &data.records[ri].patch_b;
        batch[b].label = data.records[ri].label;
        batch[b].pose_label = labels[ri];
      }
      cursor += batch_n;

      zero_grad(total);
      const BatchStats stats =
          batch_backward<T>(net, std::span<const BatchExample<T>>(batch), weights, total, ws_slots,
                            grad_slots);
      const T inv_b = static_cast<T>(1.0 / static_cast<double>(batch_n));
      for (auto& g : total)
        for (T& v : g) v *= inv_b;

      LogRow row;
      row.iter = iter;
      row.lr = lr_at(iter, cfg.lr0, cfg.lr_drop_every, cfg.lr_factor);
      row.loss_pose = stats.sum_pose / static_cast<double>(batch_n);
      row.loss_match = stats.sum_match / static_cast<double>(batch_n);
      row.loss_joint = weights.w_pose * row.loss_pose + weights.w_match * row.loss_match;
      row.grad_norm = grad_norm(total);
      if (!std::isfinite(row.loss_joint) || !std::isfinite(row.grad_norm))
        fail(Err::NumericFailure, "train: non-finite loss at iter " + std::to_string(iter));
      clip_gradients(total, cfg.clip_norm);
      sgd_step(net, velocity, total, row.lr, cfg.momentum);
      log.push_back(row);
    }
  }
  return TrainResult<T>{std::move(net), std::move(log)};
}

inline std::string log_to_csv(const std::vector<LogRow>& log) {
  std::string out = "iter,lr,loss_joint,loss_pose,loss_match,grad_norm\n";
  char line[256];
  for (const LogRow& r : log) {
    std::snprintf(line, sizeof(line), "%ld,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.iter, r.lr,
                  r.loss_joint, r.loss_pose, r.loss_match, r.grad_norm);
    out += line;
  }
  return out;
}

}  // namespace oc3d::net
