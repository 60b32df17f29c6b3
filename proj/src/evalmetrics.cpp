#include "oc3d/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oc3d/rng.hpp"

namespace oc3d {

RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) fail(Err::LengthMismatch, "roc: size mismatch");
  RocCurve c;
  for (int l : labels) (l == 1 ? c.positives : c.negatives)++;
  if (c.positives == 0 || c.negatives == 0) fail(Err::SingleClass, "roc: need both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  c.fpr.push_back(0);
  c.tpr.push_back(0);
  c.tp.push_back(0);
  c.fp.push_back(0);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // all ties flip together
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    c.fpr.push_back(static_cast<double>(fp) / c.negatives);
    c.tpr.push_back(static_cast<double>(tp) / c.positives);
    c.tp.push_back(tp);
    c.fp.push_back(fp);
  }
  return c;
}

double auc(const RocCurve& curve) {
  if (curve.tp.size() == curve.fpr.size() && curve.positives > 0 && curve.negatives > 0) {
    // exact: twice the trapezoid numerator is an integer
    std::uint64_t num2 = 0;
    for (std::size_t i = 1; i < curve.tp.size(); ++i)
      num2 += static_cast<std::uint64_t>(curve.fp[i] - curve.fp[i - 1]) *
              (curve.tp[i] + curve.tp[i - 1]);
    return static_cast<double>(num2) /
           (2.0 * static_cast<double>(curve.positives) * static_cast<double>(curve.negatives));
  }
  double area = 0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i)
    area += 0.5 * (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]);
  return area;
}

double fpr_at_recall(const RocCurve& curve, double recall) {
  for (std::size_t i = 0; i < curve.tpr.size(); ++i)
    if (curve.tpr[i] >= recall) return curve.fpr[i];
  return 1.0;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

PoseStats pose_stats(const std::vector<Pose6D>& preds, const std::vector<Pose6D>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    fail(Err::LengthMismatch, "pose_stats: need equal nonempty lists");
  PoseStats s;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    try {
      s.angular_deg.push_back(angular_error_deg(preds[i].angles.vector(), gts[i].angles.vector()));
    } catch (const Error& e) {
      if (e.code() != Err::ZeroVector) throw;
      ++s.skipped;
    }
    try {
      s.translation.push_back(translation_error(preds[i].translation, gts[i].translation));
    } catch (const Error& e) {
      if (e.code() != Err::ZeroVector) throw;
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  s.median_angular_deg = lower_median(s.angular_deg);
  s.mean_angular_deg = mean(s.angular_deg);
  s.median_translation = lower_median(s.translation);
  s.mean_translation = mean(s.translation);
  return s;
}

std::vector<BaselineBin> baseline_bins(const std::vector<double>& errors,
                                       const std::vector<double>& baselines_deg, int n_bins) {
  if (errors.size() != baselines_deg.size()) fail(Err::LengthMismatch, "baseline_bins: size mismatch");
  if (n_bins < 1) fail(Err::InvalidParams, "baseline_bins: n_bins must be >= 1");
  std::vector<BaselineBin> bins(n_bins);
  if (errors.empty()) return bins;
  const auto [lo_it, hi_it] = std::minmax_element(baselines_deg.begin(), baselines_deg.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = (hi - lo) / n_bins;
  for (int b = 0; b < n_bins; ++b) {
    bins[b].lo = lo + b * width;
    bins[b].hi = b + 1 == n_bins ? hi : lo + (b + 1) * width;
  }
  std::vector<std::vector<double>> content(n_bins);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    int b = width > 0 ? static_cast<int>((baselines_deg[i] - lo) / width) : 0;
    b = std::clamp(b, 0, n_bins - 1);
    content[b].push_back(errors[i]);
  }
  for (int b = 0; b < n_bins; ++b) {
    bins[b].count = content[b].size();
    bins[b].median_error = lower_median(content[b]);
  }
  return bins;
}

NormalCodebook fit_normal_codebook(const std::vector<Vec3>& normals, int k, std::uint64_t seed,
                                   std::vector<double>* objective_trace) {
  if (k < 1) fail(Err::InvalidParams, "codebook: k must be >= 1");
  std::vector<Vec3> units;
  units.reserve(normals.size());
  for (const Vec3& n : normals) {
    if (n.norm() < 1e-12) continue;
    units.push_back(n.normalized());
  }
  if (static_cast<int>(units.size()) < k)
    fail(Err::InsufficientData, "codebook: fewer normals than clusters");

  NormalCodebook cb;
  cb.seed = seed;
  std::mt19937_64 g(hash_combine(seed, 0xc0de));
  // distance-weighted seeding: each new center drawn with probability
  // proportional to 1 - max cosine to the existing centers
  cb.centers.push_back(units[uniform_index(g, units.size())]);
  std::vector<double> weight(units.size());
  while (static_cast<int>(cb.centers.size()) < k) {
    double total = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      double best = -2;
      for (const Vec3& c : cb.centers) best = std::max(best, units[i].dot(c));
      weight[i] = std::max(0.0, 1.0 - best);
      total += weight[i];
    }
    if (total < 1e-12) fail(Err::InsufficientData, "codebook: could not seed k distinct centers");
    double pick = unit_real(g) * total;
    std::size_t chosen = units.size() - 1;
    for (std::size_t i = 0; i < units.size(); ++i) {
      pick -= weight[i];
      if (pick <= 0) {
        chosen = i;
        break;
      }
    }
    cb.centers.push_back(units[chosen]);
  }

  std::vector<int> assign(units.size(), -1);
  if (objective_trace) objective_trace->clear();
  for (int it = 0; it < 100; ++it) {
    bool changed = false;
    double objective = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      int best = 0;
      double best_dot = -2;
      for (int c = 0; c < k; ++c) {
        const double d = units[i].dot(cb.centers[c]);
        if (d > best_dot) {
          best_dot = d;
          best = c;
        }
      }
      objective += 1.0 - best_dot;
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (objective_trace) objective_trace->push_back(objective);
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      Vec3 sum = Vec3::Zero();
      for (std::size_t i = 0; i < units.size(); ++i)
        if (assign[i] == c) sum += units[i];
      if (sum.norm() > 1e-12) cb.centers[c] = sum.normalized();  // empty/degenerate: keep previous
    }
  }
  return cb;
}

int assign_normal(const NormalCodebook& codebook, const Vec3& normal) {
  if (codebook.centers.empty()) fail(Err::InvalidParams, "assign_normal: empty codebook");
  const Vec3 u = normal.normalized();
  int best = 0;
  double best_dot = -2;
  for (std::size_t c = 0; c < codebook.centers.size(); ++c) {
    const double d = u.dot(codebook.centers[c]);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

NormalReport binned_normal_report(const std::vector<int>& pred_bins, const std::vector<int>& gt_bins,
                                  const NormalCodebook& codebook) {
  if (pred_bins.size() != gt_bins.size() || pred_bins.empty())
    fail(Err::LengthMismatch, "normal report: need equal nonempty lists");
  const int k = static_cast<int>(codebook.centers.size());
  auto angle_deg = [&](int a, int b) {
    if (a == b) return 0.0;
    const double c = std::clamp(codebook.centers[a].dot(codebook.centers[b]), -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
  };

  NormalReport r;
  r.bin_counts.assign(k, 0);
  std::vector<double> errors(pred_bins.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred_bins.size(); ++i) {
    if (pred_bins[i] < 0 || pred_bins[i] >= k || gt_bins[i] < 0 || gt_bins[i] >= k)
      fail(Err::InvalidParams, "normal report: bin out of range");
    errors[i] = angle_deg(pred_bins[i], gt_bins[i]);
    correct += pred_bins[i] == gt_bins[i];
    r.bin_counts[gt_bins[i]]++;
  }
  r.accuracy = static_cast<double>(correct) / pred_bins.size();
  r.mean_deg = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  r.median_deg = lower_median(errors);

  double acc_sum = 0, mean_sum = 0, median_sum = 0;
  int used = 0;
  for (int b = 0; b < k; ++b) {
    if (r.bin_counts[b] == 0) continue;
    std::vector<double> bin_err;
    std::size_t bin_correct = 0;
    for (std::size_t i = 0; i < gt_bins.size(); ++i) {
      if (gt_bins[i] != b) continue;
      bin_err.push_back(errors[i]);
      bin_correct += pred_bins[i] == b;
    }
    acc_sum += static_cast<double>(bin_correct) / bin_err.size();
    mean_sum += std::accumulate(bin_err.begin(), bin_err.end(), 0.0) / bin_err.size();
    median_sum += lower_median(bin_err);
    ++used;
  }
  r.binned_accuracy = acc_sum / used;
  r.binned_mean_deg = mean_sum / used;
  r.binned_median_deg = median_sum / used;
  return r;
}

std::vector<int> knn_readout(const std::vector<std::vector<double>>& train_reps,
                             const std::vector<int>& train_labels,
                             const std::vector<std::vector<double>>& query_reps, int k) {
  if (train_reps.empty() || train_reps.size() != train_labels.size())
    fail(Err::InsufficientData, "knn: empty or mismatched training set");
  if (k < 1) fail(Err::InvalidParams, "knn: k must be >= 1");
  const int kk = std::min<int>(k, static_cast<int>(train_reps.size()));

  std::vector<int> out;
  out.reserve(query_reps.size());
  for (const auto& q : query_reps) {
    if (q.size() != train_reps[0].size()) fail(Err::LengthMismatch, "knn: dimension mismatch");
    std::vector<std::pair<double, std::size_t>> d(train_reps.size());
    for (std::size_t i = 0; i < train_reps.size(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double diff = q[j] - train_reps[i][j];
        s += diff * diff;
      }
      d[i] = {s, i};
    }
    std::partial_sort(d.begin(), d.begin() + kk, d.end());
    // majority vote; ties go to the label appearing earliest in distance order
    std::vector<int> votes_label;
    std::vector<int> votes_count;
    for (int n = 0; n < kk; ++n) {
      const int label = train_labels[d[n].second];
      bool seen = false;
      for (std::size_t v = 0; v < votes_label.size(); ++v)
        if (votes_label[v] == label) {
          votes_count[v]++;
          seen = true;
          break;
        }
      if (!seen) {
        votes_label.push_back(label);
        votes_count.push_back(1);
      }
    }
    int best = 0;
    for (std::size_t v = 1; v < votes_label.size(); ++v)
      if (votes_count[v] > votes_count[best]) best = static_cast<int>(v);
    out.push_back(votes_label[best]);
  }
  return out;
}

std::vector<double> LinearProbe::raw(const std::vector<double>& rep) const {
  std::vector<double> out(bias);
  for (std::size_t o = 0; o < weights.size(); ++o)
    for (std::size_t i = 0; i < rep.size(); ++i) out[o] += weights[o][i] * rep[i];
  return out;
}

int LinearProbe::predict_class(const std::vector<double>& rep) const {
  const auto scores = raw(rep);
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

namespace {

LinearProbe init_probe(std::size_t in_dim, int out_dim, bool classifier, std::uint64_t seed) {
  LinearProbe p;
  p.classifier = classifier;
  p.weights.assign(out_dim, std::vector<double>(in_dim, 0.0));
  p.bias.assign(out_dim, 0.0);
  std::mt19937_64 g(hash_combine(seed, 0x11ea5));
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
  for (auto& row : p.weights)
    for (double& w : row) w = uniform_real(g, -bound, bound);
  return p;
}

}  // namespace

LinearProbe linear_readout_classify(const std::vector<std::vector<double>>& train_reps,
                                    const std::vector<int>& train_labels, int classes, int epochs,
                                    double lr, std::uint64_t seed) {
  if (train_reps.empty() || train_reps.size() != train_labels.size())
    fail(Err::InsufficientData, "linear probe: empty or mismatched training set");
  const std::size_t n = train_reps.size(), d = train_reps[0].size();
  LinearProbe p = init_probe(d, classes, true, seed);
  std::vector<std::vector<double>> gw(classes, std::vector<double>(d));
  std::vector<double> gb(classes);
  for (int e = 0; e < epochs; ++e) {
    for (auto& row : gw) std::fill(row.begin(), row.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto scores = p.raw(train_reps[i]);
      const double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (int c = 0; c < classes; ++c) {
        const double g = scores[c] / z - (train_labels[i] == c ? 1.0 : 0.0);
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[c][j] += g * train_reps[i][j];
      }
    }
    const double step = lr / static_cast<double>(n);
    for (int c = 0; c < classes; ++c) {
      p.bias[c] -= step * gb[c];
      for (std::size_t j = 0; j < d; ++j) p.weights[c][j] -= step * gw[c][j];
    }
  }
  return p;
}

LinearProbe linear_readout_regress(const std::vector<std::vector<double>>& train_reps,
                                   const std::vector<std::vector<double>>& train_targets, int epochs,
                                   double lr, std::uint64_t seed) {
  if (train_reps.empty() || train_reps.size() != train_targets.size())
    fail(Err::InsufficientData, "linear probe: empty or mismatched training set");
  const std::size_t n = train_reps.size(), d = train_reps[0].size();
  const int out_dim = static_cast<int>(train_targets[0].size());
  LinearProbe p = init_probe(d, out_dim, false, seed);
  std::vector<std::vector<double>> gw(out_dim, std::vector<double>(d));
  std::vector<double> gb(out_dim);
  for (int e = 0; e < epochs; ++e) {
    for (auto& row : gw) std::fill(row.begin(), row.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = p.raw(train_reps[i]);
      for (int c = 0; c < out_dim; ++c) {
        const double g = y[c] - train_targets[i][c];  // d/dy of 0.5 (y - t)^2
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[c][j] += g * train_reps[i][j];
      }
    }
    const double step = lr / static_cast<double>(n);
    for (int c = 0; c < out_dim; ++c) {
      p.bias[c] -= step * gb[c];
      for (std::size_t j = 0; j < d; ++j) p.weights[c][j] -= step * gw[c][j];
    }
  }
  return p;
}

}  // namespace oc3d
