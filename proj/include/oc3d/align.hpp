#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oc3d/capture.hpp"
#include "oc3d/geometry.hpp"
#include "oc3d/image.hpp"

namespace oc3d {

// Coarse per-block displacement field from a to b, in pixels of the finest
// level. confidence is the winning ZNCC score in [-1, 1] (0 where undefined).
struct FlowField {
  int width = 0;   // cells
  int height = 0;  // cells
  int block_px = 0;
  std::vector<double> du, dv, confidence;

  std::size_t index(int cx, int cy) const { return static_cast<std::size_t>(cy) * width + cx; }
  // Center of cell (cx, cy) in image pixel-center coordinates.
  Vec2 cell_center(int cx, int cy) const {
    return Vec2((cx + 0.5) * block_px, (cy + 0.5) * block_px);
  }
};

struct Similarity2D {
  double scale = 1.0;
  double angle = 0.0;  // radians
  double tx = 0.0, ty = 0.0;

  Vec2 apply(const Vec2& p) const {
    const double c = scale * std::cos(angle), s = scale * std::sin(angle);
    return Vec2(c * p.x() - s * p.y() + tx, s * p.x() + c * p.y() + ty);
  }
  Vec2 apply_inverse(const Vec2& p) const {
    const double c = scale * std::cos(angle), s = scale * std::sin(angle);
    const double det = c * c + s * s;
    const double x = p.x() - tx, y = p.y() - ty;
    return Vec2((c * x + s * y) / det, (c * y - s * x) / det);
  }
};

struct ViewAlignment {
  int view = 0;
  bool frontal = false;
  double ssim = 0.0;
  Similarity2D sim;
  Vec2 adjustment_px = Vec2::Zero();  // source-image translation of the believed center
  bool pruned = false;
  std::string reason;  // nonempty iff pruned
};

struct AlignmentReport {
  std::vector<ViewAlignment> views;
};

struct AlignThresholds {
  double min_ssim = 0.4;
  double max_translation_px = 25.0;
  double max_log_scale = 0.3;
  int block_px = 16;
  int search_px = 8;
  int pyramid_levels = 3;
  int ransac_iters = 200;
  double ransac_inlier_px = 2.0;
  std::uint64_t seed = 0;
};

// Index of the view whose direction is most anti-parallel to the target
// normal; ties break to the lowest index. Throws UnusableBundle on < 2 views.
std::size_t select_frontal(const Bundle& bundle);

// Warps `patch` (seen from cam_src) into cam_ref's frame via the plane
// through the target; out-of-bounds pixels are masked invalid.
MaskedPatch rectify(const ImagePatch& patch, const CameraExtrinsics& cam_src,
                    const CameraIntrinsics& k_src, const CameraExtrinsics& cam_ref,
                    const CameraIntrinsics& k_ref, const Target& target);

// Integer block matching maximizing ZNCC within +-search_px. Constant or
// masked blocks get confidence 0.
FlowField block_flow(const ImagePatch& a, const ImagePatch& b, int block_px, int search_px);

// Coarse-to-fine variant used by align_bundle: `levels` octaves, each
// searching +-search_px around the upsampled coarser estimate.
FlowField pyramid_flow(const MaskedPatch& a, const MaskedPatch& b, int levels, int block_px,
                       int search_px);

// RANSAC similarity fit over flow cells with confidence > 0.3, 2-point
// hypotheses, least-squares refit over the inliers of the best model.
// Deterministic per seed; invariant to cell order. Throws
// InsufficientCorrespondences when fewer than 2 confident cells exist.
std::pair<Similarity2D, std::vector<std::uint8_t>> fit_similarity(const FlowField& flow, int iters,
                                                                  double inlier_px,
                                                                  std::uint64_t seed);

// Mean local SSIM over non-overlapping 8x8 windows on ITU-R 601 luma,
// C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
double ssim(const ImagePatch& a, const ImagePatch& b);

// Masked variant: only windows fully valid in both images contribute;
// returns -1 when no window qualifies.
double ssim_masked(const MaskedPatch& a, const MaskedPatch& b);

// Full per-view alignment pass: rectify toward the most frontal view, flow,
// similarity, SSIM, threshold pruning. Never aborts the bundle; per-view
// failures prune that view with a reason.
AlignmentReport align_bundle(const Bundle& bundle, const AlignThresholds& thresholds);

// Applies recovered adjustments by re-aiming each unpruned view's actual
// camera and re-rendering, and marks pruned views. center_offset_px becomes
// the residual (recomputed exactly from the corrected camera).
Bundle apply_alignment(const Scene& scene, const Bundle& bundle, const AlignmentReport& report);

std::string alignment_report_jsonl(const AlignmentReport& report);

}  // namespace oc3d
