#include "oc3d/geometry.hpp"

#include <cmath>

namespace oc3d {

CameraIntrinsics CameraIntrinsics::from_fov(double fov_x_deg, int width, int height) {
  if (!(fov_x_deg > 0) || fov_x_deg >= 180) fail(Err::InvalidParams, "fov must be in (0, 180)");
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  const double half = 0.5 * fov_x_deg * M_PI / 180.0;
  k.fx = 0.5 * width / std::tan(half);
  k.fy = k.fx;  // square pixels
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  k.validate();
  return k;
}

Rotation euler_to_rotation(const EulerAngles& e) {
  if (!std::isfinite(e.roll) || !std::isfinite(e.yaw) || !std::isfinite(e.pitch))
    fail(Err::InvalidParams, "euler angles must be finite");
  const double ca = std::cos(e.roll), sa = std::sin(e.roll);
  const double cb = std::cos(e.yaw), sb = std::sin(e.yaw);
  const double cc = std::cos(e.pitch), sc = std::sin(e.pitch);
  Mat3 rz, ry, rx;
  rz << ca, -sa, 0, sa, ca, 0, 0, 0, 1;
  ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  rx << 1, 0, 0, 0, cc, -sc, 0, sc, cc;
  return Rotation(Mat3(rz * ry * rx));
}

EulerAngles rotation_to_euler(const Rotation& r) {
  const Mat3& m = r.matrix();
  // R = Rz(roll) Ry(yaw) Rx(pitch) gives m(2,0) = -sin(yaw).
  if (std::abs(m(2, 0)) > 1.0 - 1e-9) fail(Err::GimbalLock, "rotation_to_euler: |yaw| at 90 degrees");
  EulerAngles e;
  e.yaw = std::asin(std::clamp(-m(2, 0), -1.0, 1.0));
  e.roll = std::atan2(m(1, 0), m(0, 0));
  e.pitch = std::atan2(m(2, 1), m(2, 2));
  return e;
}

Pose6D relative_pose(const CameraExtrinsics& cam_a, const CameraExtrinsics& cam_b) {
  Pose6D p;
  const Rotation rel = cam_b.rotation * cam_a.rotation.transposed();
  p.angles = rotation_to_euler(rel);
  p.translation = cam_a.rotation * (cam_b.center - cam_a.center);
  return p;
}

RelativeTransform relative_transform(const CameraExtrinsics& src, const CameraExtrinsics& dst) {
  RelativeTransform rel;
  rel.r = dst.rotation.matrix() * src.rotation.matrix().transpose();
  rel.t = dst.rotation * (src.center - dst.center);
  return rel;
}

double angular_error_deg(const Vec3& v_pred, const Vec3& v_gt) {
  const double na = v_pred.norm(), nb = v_gt.norm();
  if (na < 1e-12 || nb < 1e-12) fail(Err::ZeroVector, "angular_error: zero-norm vector");
  const double c = std::clamp(v_pred.dot(v_gt) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

double translation_error(const Vec3& t_pred, const Vec3& t_gt) {
  const double na = t_pred.norm(), nb = t_gt.norm();
  if (na < 1e-12 || nb < 1e-12) fail(Err::ZeroVector, "translation_error: zero-norm vector");
  return (t_pred / na - t_gt / nb).norm();
}

Mat3 plane_homography(const CameraIntrinsics& k_src, const CameraIntrinsics& k_dst,
                      const RelativeTransform& rel, const Vec3& n, double d) {
  if (std::abs(d) < 1e-9) fail(Err::DegeneratePlane, "plane_homography: |d| < 1e-9");
  const Mat3 core = rel.r - rel.t * n.transpose() / d;
  Mat3 h = k_dst.k_matrix() * core * k_src.k_matrix().inverse();
  if (std::abs(h(2, 2)) < 1e-12) fail(Err::DegeneratePlane, "plane_homography: cannot normalize");
  h /= h(2, 2);
  if (std::abs(h.determinant()) < 1e-12) fail(Err::DegeneratePlane, "plane_homography: singular");
  return h;
}

CameraPlane plane_in_camera(const CameraExtrinsics& src, const Vec3& point, const Vec3& normal_world) {
  // Orient the normal toward the camera so d comes out positive.
  Vec3 n_world = normal_world;
  double d = n_world.dot(src.center - point);
  if (d < 0) {
    n_world = -n_world;
    d = -d;
  }
  return CameraPlane{src.rotation * n_world, d};
}

std::optional<Vec2> project(const CameraIntrinsics& k, const Vec3& p_cam) {
  if (p_cam.z() <= 1e-12) return std::nullopt;
  return Vec2(k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy);
}

Vec3 pixel_direction(const CameraIntrinsics& k, const Vec2& px) {
  return Vec3((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
}

Vec2 apply_homography(const Mat3& h, const Vec2& px) {
  const Vec3 q = h * Vec3(px.x(), px.y(), 1.0);
  if (std::abs(q.z()) < 1e-15) fail(Err::DegeneratePlane, "apply_homography: point at infinity");
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

}  // namespace oc3d
