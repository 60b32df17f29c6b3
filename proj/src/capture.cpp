#include "oc3d/capture.hpp"

#include <cmath>

#include "oc3d/parallel.hpp"
#include "oc3d/rng.hpp"

namespace oc3d {

namespace {

// Minimal rotation taking the +z axis onto unit vector v (Rodrigues,
// stable form of the (1 - cos)/sin^2 factor).
Mat3 rotation_z_to(const Vec3& v) {
  const Vec3 z(0, 0, 1);
  const Vec3 a = z.cross(v);
  const double c = z.dot(v);
  if (c < -1.0 + 1e-12) fail(Err::InvalidParams, "reaim: 180 degree re-aim unsupported");
  Mat3 ax;
  ax << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Mat3::Identity() + ax + ax * ax / (1.0 + c);
}

}  // namespace

CameraExtrinsics fixate(const Vec3& position, const Target& target, const Vec3& world_up) {
  const Vec3 delta = target.point - position;
  const double dist = delta.norm();
  if (dist < 1e-12) fail(Err::InvalidParams, "fixate: position equals target");
  const Vec3 f = delta / dist;
  const Vec3 right_raw = world_up.cross(f);
  if (right_raw.norm() < 1e-9) fail(Err::DegenerateUp, "fixate: view direction parallel to world_up");
  const Vec3 r = right_raw.normalized();
  const Vec3 y = f.cross(r);
  Mat3 m;
  m.row(0) = r;
  m.row(1) = y;
  m.row(2) = f;
  CameraExtrinsics e;
  e.rotation = Rotation(m);
  e.center = position;
  return e;
}

CameraExtrinsics reaim(const CameraExtrinsics& extr, const CameraIntrinsics& k, const Vec2& offset_px) {
  const Vec3 v = Vec3(offset_px.x() / k.fx, offset_px.y() / k.fy, 1.0).normalized();
  CameraExtrinsics out = extr;
  out.rotation = Rotation(Mat3(rotation_z_to(v) * extr.rotation.matrix()));
  return out;
}

ImagePatch render(const Scene& scene, const CameraExtrinsics& extr, const CameraIntrinsics& k, int size) {
  if (size < 8) fail(Err::InvalidParams, "render: size must be >= 8");
  CameraIntrinsics ki = k;
  ki.width = size;
  ki.height = size;
  ki.cx = 0.5 * size;
  ki.cy = 0.5 * size;
  ImagePatch img = ImagePatch::create(size, size, 3);
  const Mat3 r_t = extr.rotation.matrix().transpose();
  parallel_for(static_cast<std::size_t>(size), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < size; ++x) {
      const Vec3 dir = (r_t * pixel_direction(ki, Vec2(x + 0.5, y + 0.5))).normalized();
      std::array<std::uint8_t, 3> c{{135, 206, 235}};  // sky
      if (const auto hit = ray_cast(scene, extr.center, dir))
        c = texture_color(scene.facades[hit->facade_id], hit->uv.x(), hit->uv.y());
      img.at(x, y, 0) = c[0];
      img.at(x, y, 1) = c[1];
      img.at(x, y, 2) = c[2];
    }
  });
  return img;
}

Bundle build_bundle(const Scene& scene, const Target& target, const std::vector<Vec3>& candidates,
                    double fov_x_deg, int size, const Vec3& world_up) {
  Bundle b;
  b.target = target;
  const CameraIntrinsics k = CameraIntrinsics::from_fov(fov_x_deg, size, size);
  for (std::size_t i : visible_viewpoints(scene, target, candidates)) {
    CameraExtrinsics extr;
    try {
      extr = fixate(candidates[i], target, world_up);
    } catch (const Error& e) {
      if (e.code() == Err::DegenerateUp) continue;
      throw;
    }
    View v;
    v.extrinsics = extr;
    v.actual = extr;
    v.intrinsics = k;
    v.patch = render(scene, extr, k, size);
    b.views.push_back(std::move(v));
  }
  return b;
}

Bundle inject_noise(const Scene& scene, const Bundle& bundle, const NoiseStats& stats,
                    std::uint64_t seed, int skip_view) {
  if (stats.mean_px < 0 || stats.std_px < 0) fail(Err::InvalidParams, "noise stats must be nonnegative");
  Bundle out = bundle;
  std::mt19937_64 g(hash_combine(seed, 0x0ff5e7));
  for (std::size_t i = 0; i < out.views.size(); ++i) {
    View& v = out.views[i];
    const double scale = v.intrinsics.width / kNoiseReferenceWidthPx;
    const double raw = normal(g, stats.mean_px * scale, stats.std_px * scale);
    const double angle = uniform_real(g, 0.0, 2.0 * M_PI);
    if (static_cast<int>(i) == skip_view) continue;
    const double mag = std::clamp(raw, 0.0, stats.max_px * scale);
    const Vec2 offset(mag * std::cos(angle), mag * std::sin(angle));
    v.center_offset_px = offset;
    if (mag > 0) {
      v.actual = reaim(v.extrinsics, v.intrinsics, offset);
      v.patch = render(scene, v.actual, v.intrinsics, v.intrinsics.width);
    }
  }
  return out;
}

std::vector<Vec3> street_candidates(const SceneParams& params, double spacing_m, double height_m) {
  if (!(spacing_m > 0)) fail(Err::InvalidParams, "candidate spacing must be positive");
  std::vector<Vec3> out;
  const double extent = params.extent_m();
  const Vec3 off = params.world_offset;
  const int n_streets = params.n_blocks + 1;
  const int steps = static_cast<int>(std::floor(extent / spacing_m));
  for (int s = 0; s < n_streets; ++s) {
    const double line = s * params.cell_m() + 0.5 * params.street_width_m;
    for (int i = 0; i <= steps; ++i) {
      const double along = i * spacing_m;
      out.push_back(off + Vec3(line, height_m, along));   // street parallel to z
      out.push_back(off + Vec3(along, height_m, line));   // street parallel to x
    }
  }
  return out;
}

std::vector<Vec3> arc_candidates(const Target& target, double radius_m, double arc_deg, int count,
                                 double height_m) {
  if (count < 1) fail(Err::InvalidParams, "arc_candidates: count must be >= 1");
  std::vector<Vec3> out;
  out.reserve(count);
  // Horizontal frame around the outward normal.
  Vec3 n = target.normal;
  n.y() = 0;
  if (n.norm() < 1e-9) fail(Err::InvalidParams, "arc_candidates: vertical facade normal");
  n.normalize();
  const Vec3 side = Vec3(0, 1, 0).cross(n).normalized();
  const double half = 0.5 * arc_deg * M_PI / 180.0;
  for (int i = 0; i < count; ++i) {
    const double a = count == 1 ? 0.0 : -half + 2.0 * half * i / (count - 1);
    const Vec3 dir = std::cos(a) * n + std::sin(a) * side;
    Vec3 p = target.point + radius_m * dir;
    p.y() = height_m;
    out.push_back(p);
  }
  return out;
}

}  // namespace oc3d
