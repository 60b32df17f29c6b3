#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oc3d/capture.hpp"
#include "oc3d/geometry.hpp"
#include "oc3d/scene.hpp"

namespace oc3d {

// One training example: two patches, the match label, and the 6D pose label
// (raw and z-scored). For label 0 the pose fields are populated but carry no
// meaning; the label itself is the "unused" flag.
struct PairRecord {
  std::uint64_t target_id = 0;
  std::uint32_t view_a = 0;
  std::uint32_t view_b = 0;
  std::uint8_t label = 0;  // m*
  float baseline_deg = 0;  // angle between the two viewing directions
  std::array<float, 6> pose_raw{};  // roll, yaw, pitch (rad), tx, ty, tz (m)
  std::array<float, 6> pose_z{};
  ImagePatch patch_a, patch_b;
};

struct ZScoreStats {
  std::array<double, 6> mean{};
  std::array<double, 6> stddev{};  // floored at 1e-8
};

struct RecordFile {
  std::vector<PairRecord> records;
  ZScoreStats stats;
};

// A bundle paired with its global target id, as produced by the capture and
// alignment stages.
struct TaggedBundle {
  std::uint64_t target_id = 0;
  Bundle bundle;
};

// Positives: all unordered view pairs of unpruned views within each usable
// bundle. Negatives: round(neg_per_pos * positives) cross-target pairs drawn
// uniformly. Positive pairs whose relative pose hits gimbal lock are skipped.
std::vector<PairRecord> make_pairs(const std::vector<TaggedBundle>& bundles, double neg_per_pos,
                                   std::uint64_t seed);

// Per-dimension mean/std over the raw poses of matching records only.
ZScoreStats fit_zscore(const std::vector<PairRecord>& records);

std::array<double, 6> apply_zscore(const ZScoreStats& stats, const std::array<double, 6>& pose);
std::array<double, 6> invert_zscore(const ZScoreStats& stats, const std::array<double, 6>& z);

// Recomputes pose_z for every record from stats.
void zscore_records(std::vector<PairRecord>& records, const ZScoreStats& stats);

std::array<double, 6> pose_to_array(const Pose6D& p);

// Little-endian binary container; see the format notes in dataset.cpp.
void write_records(const std::string& path, const std::vector<PairRecord>& records,
                   const ZScoreStats& stats);
RecordFile read_records(const std::string& path);

// Whole scenes go to exactly one side; train scenes within buffer_m of any
// test scene are dropped from both sides.
struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
SplitResult geofenced_split(const std::vector<Aabb>& scene_bounds, double test_fraction,
                            double buffer_m, std::uint64_t seed);

}  // namespace oc3d
