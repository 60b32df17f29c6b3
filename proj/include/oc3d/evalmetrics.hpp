#pragma once

#include <cstdint>
#include <vector>

#include "oc3d/geometry.hpp"

namespace oc3d {

// Threshold sweep over descending scores; tied scores flip together. Points
// are cumulative (fpr, tpr) pairs bracketed by (0,0) and (1,1). The integer
// cumulative counts are kept alongside so the area can be computed exactly.
struct RocCurve {
  std::vector<double> fpr, tpr;
  std::vector<std::size_t> tp, fp;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

RocCurve roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Trapezoidal area; equals the Mann-Whitney statistic with ties counted 1/2,
// exactly (integer accumulation) when the curve carries counts.
double auc(const RocCurve& curve);

// Smallest fpr among sweep points with tpr >= recall.
double fpr_at_recall(const RocCurve& curve, double recall = 0.95);

struct PoseStats {
  double median_angular_deg = 0, mean_angular_deg = 0;
  double median_translation = 0, mean_translation = 0;
  std::vector<double> angular_deg, translation;  // per example
  std::size_t skipped = 0;  // zero-norm vectors excluded from the angular stats
};

// Per-example angular error on the Euler triplets and up-to-scale translation
// error, aggregated with lower medians.
PoseStats pose_stats(const std::vector<Pose6D>& preds, const std::vector<Pose6D>& gts);

double lower_median(std::vector<double> values);

struct BaselineBin {
  double lo = 0, hi = 0;
  std::size_t count = 0;
  double median_error = 0;  // 0 when empty
};

// Equal-width bins over [min, max] of the baselines; per-bin lower median.
std::vector<BaselineBin> baseline_bins(const std::vector<double>& errors,
                                       const std::vector<double>& baselines_deg, int n_bins = 8);

// Spherical k-means codebook over unit normals (cosine distance, renormalized
// centroids, seeded distance-weighted initialization, <= 100 iterations).
// objective_trace, when given, receives the objective sum(1 - cos) after each
// assignment pass.
struct NormalCodebook {
  std::vector<Vec3> centers;
  std::uint64_t seed = 0;
};

NormalCodebook fit_normal_codebook(const std::vector<Vec3>& normals, int k = 20,
                                   std::uint64_t seed = 0,
                                   std::vector<double>* objective_trace = nullptr);

// Nearest center by angular distance, lowest index on ties.
int assign_normal(const NormalCodebook& codebook, const Vec3& normal);

struct NormalReport {
  double accuracy = 0, mean_deg = 0, median_deg = 0;              // unbinned
  double binned_accuracy = 0, binned_mean_deg = 0, binned_median_deg = 0;
  std::vector<std::size_t> bin_counts;
};

// Errors are angles between predicted and ground-truth cluster centers.
// Binned statistics average the per-gt-bin statistic with equal bin weight
// over non-empty bins.
NormalReport binned_normal_report(const std::vector<int>& pred_bins, const std::vector<int>& gt_bins,
                                  const NormalCodebook& codebook);

// k-NN readout on frozen representations: L2 metric, majority vote, ties
// resolved by the earliest neighbor in distance order.
std::vector<int> knn_readout(const std::vector<std::vector<double>>& train_reps,
                             const std::vector<int>& train_labels,
                             const std::vector<std::vector<double>>& query_reps, int k = 1);

// Single linear layer trained by full-batch gradient descent on the frozen
// representations; softmax cross entropy for classification, MSE for
// regression. The representations themselves are never touched.
struct LinearProbe {
  std::vector<std::vector<double>> weights;  // [out][in]
  std::vector<double> bias;
  bool classifier = true;

  std::vector<double> raw(const std::vector<double>& rep) const;
  int predict_class(const std::vector<double>& rep) const;
};

LinearProbe linear_readout_classify(const std::vector<std::vector<double>>& train_reps,
                                    const std::vector<int>& train_labels, int classes, int epochs,
                                    double lr, std::uint64_t seed);

LinearProbe linear_readout_regress(const std::vector<std::vector<double>>& train_reps,
                                   const std::vector<std::vector<double>>& train_targets, int epochs,
                                   double lr, std::uint64_t seed);

}  // namespace oc3d
