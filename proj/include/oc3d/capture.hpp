#pragma once

#include <cstdint>
#include <vector>

#include "oc3d/geometry.hpp"
#include "oc3d/image.hpp"
#include "oc3d/scene.hpp"

namespace oc3d {

// One fixating view of a target. `extrinsics` is the metadata pose (ideal
// fixation) used for labels and rectification; `actual` is the camera the
// pixels were really rendered with. They differ only after noise injection,
// which mimics metadata/pixel misalignment in real capture.
struct View {
  CameraExtrinsics extrinsics;
  CameraExtrinsics actual;
  CameraIntrinsics intrinsics;
  ImagePatch patch;
  Vec2 center_offset_px = Vec2::Zero();  // where the target really projects, relative to center
  bool pruned = false;
};

struct Bundle {
  Target target;
  std::vector<View> views;
  bool usable() const { return views.size() >= 2; }
};

// Magnitude statistics of injected misalignment, defined at a 144 px
// reference patch width and scaled by width/144 at draw time. Negative draws
// clamp to zero, draws above max_px clamp to max_px.
struct NoiseStats {
  double mean_px = 16.12;
  double std_px = 11.55;
  double max_px = 1e30;
};

inline constexpr double kNoiseReferenceWidthPx = 144.0;

// Camera at `position` whose optical axis passes through target.point, with
// the x axis orthogonal to world_up. Throws Err::DegenerateUp when the view
// direction is parallel to world_up.
CameraExtrinsics fixate(const Vec3& position, const Target& target, const Vec3& world_up);

// Rotates `extr` so the point previously on the optical axis projects at
// principal point + offset_px.
CameraExtrinsics reaim(const CameraExtrinsics& extr, const CameraIntrinsics& k, const Vec2& offset_px);

// One primary ray per pixel center; miss -> sky (135, 206, 235).
ImagePatch render(const Scene& scene, const CameraExtrinsics& extr, const CameraIntrinsics& k, int size);

// One view per visible candidate. Bundles with < 2 views are returned but
// flagged unusable via Bundle::usable().
Bundle build_bundle(const Scene& scene, const Target& target, const std::vector<Vec3>& candidates,
                    double fov_x_deg, int size, const Vec3& world_up = Vec3(0, 1, 0));

// Re-aims each view (except skip_view, when >= 0) by a random offset whose
// magnitude follows the given stats and whose direction is uniform, re-renders
// it, and records the truth in center_offset_px.
Bundle inject_noise(const Scene& scene, const Bundle& bundle, const NoiseStats& stats,
                    std::uint64_t seed, int skip_view = -1);

// Candidate camera positions along every street centerline of the scene grid.
std::vector<Vec3> street_candidates(const SceneParams& params, double spacing_m, double height_m);

// Candidate positions on a horizontal arc of `arc_deg` centered on the target
// normal at the given radius; used to probe baseline coverage.
std::vector<Vec3> arc_candidates(const Target& target, double radius_m, double arc_deg, int count,
                                 double height_m);

}  // namespace oc3d
