#pragma once

#include <Eigen/Dense>
#include <optional>

#include "oc3d/error.hpp"

namespace oc3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Proper rotation matrix (world -> camera when used as an extrinsic part).
// Construction validates orthonormality and det = +1 to 1e-9.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& m) : m_(m) { validate(); }

  static Rotation identity() { return Rotation(); }

  const Mat3& matrix() const { return m_; }
  Rotation transposed() const { return Rotation(Mat3(m_.transpose())); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& o) const { return Rotation(Mat3(m_ * o.m_)); }

 private:
  void validate() const {
    if (!m_.allFinite()) fail(Err::InvalidParams, "rotation: non-finite entries");
    const double ortho = (m_.transpose() * m_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9) fail(Err::InvalidParams, "rotation: not orthonormal");
    if (std::abs(m_.determinant() - 1.0) > 1e-9) fail(Err::InvalidParams, "rotation: det != +1");
  }

  Mat3 m_;
};

// Tait-Bryan angles, radians, each in (-pi, pi]. Convention is intrinsic
// Z(roll) - Y(yaw) - X(pitch), applied in that order; pinned once here and
// relied on everywhere else.
struct EulerAngles {
  double roll = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;

  Vec3 vector() const { return Vec3(roll, yaw, pitch); }
};

// 6DOF relative pose label: rotation as Euler angles plus translation in
// meters (the second camera's center expressed in the first camera's frame).
struct Pose6D {
  EulerAngles angles;
  Vec3 translation = Vec3::Zero();
};

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, px
  double cx = 0, cy = 0;  // principal point, px
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) fail(Err::InvalidParams, "intrinsics: focal lengths must be > 0");
    if (width <= 0 || height <= 0) fail(Err::InvalidParams, "intrinsics: size must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      fail(Err::InvalidParams, "intrinsics: principal point outside image");
  }

  Mat3 k_matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  // Square pinhole camera with the principal point at the patch center.
  static CameraIntrinsics from_fov(double fov_x_deg, int width, int height);
};

struct CameraExtrinsics {
  Rotation rotation;          // world -> camera
  Vec3 center = Vec3::Zero(); // camera position, world frame, meters

  Vec3 world_to_camera(const Vec3& p) const { return rotation * (p - center); }
  Vec3 camera_to_world(const Vec3& p) const { return rotation.transposed() * p + center; }
};

// Camera-to-camera rigid transform x_dst = r * x_src + t.
struct RelativeTransform {
  Mat3 r;
  Vec3 t;
};

Rotation euler_to_rotation(const EulerAngles& e);

// Inverse of euler_to_rotation. Throws Err::GimbalLock when |m(2,0)| exceeds
// 1 - 1e-9 (yaw within ~4.5e-5 rad of +-90 degrees); callers choose fallback.
EulerAngles rotation_to_euler(const Rotation& r);

// Pose of cam_b relative to cam_a: angles from R_b * R_a^T, translation
// R_a * (C_b - C_a). Propagates GimbalLock.
Pose6D relative_pose(const CameraExtrinsics& cam_a, const CameraExtrinsics& cam_b);

RelativeTransform relative_transform(const CameraExtrinsics& src, const CameraExtrinsics& dst);

// Angle between two vectors in degrees, [0, 180]. Scale invariant.
// Throws Err::ZeroVector when either norm < 1e-12.
double angular_error_deg(const Vec3& v_pred, const Vec3& v_gt);

// || t_pred/|t_pred| - t_gt/|t_gt| ||_2 in [0, 2]; up-to-scale comparison.
double translation_error(const Vec3& t_pred, const Vec3& t_gt);

// Plane-induced homography mapping source pixels of a world plane into the
// destination view: H = K_dst * (R - t n^T / d) * K_src^{-1}, normalized so
// H(2,2) = 1. The plane is given in the source camera frame by the unit
// normal n pointing toward the source camera and its distance d > 0, i.e.
// n . x + d = 0 for camera-frame plane points x.
Mat3 plane_homography(const CameraIntrinsics& k_src, const CameraIntrinsics& k_dst,
                      const RelativeTransform& rel, const Vec3& n, double d);

// Convenience for rectification: plane through `point` with world-space unit
// normal `normal_world`, expressed in the source camera frame with the sign
// convention plane_homography expects.
struct CameraPlane {
  Vec3 n;
  double d;
};
CameraPlane plane_in_camera(const CameraExtrinsics& src, const Vec3& point, const Vec3& normal_world);

// Pinhole projection of a camera-frame point; nullopt when at or behind the
// camera (z <= 1e-12).
std::optional<Vec2> project(const CameraIntrinsics& k, const Vec3& p_cam);

// Camera-frame direction through an image location (not normalized).
Vec3 pixel_direction(const CameraIntrinsics& k, const Vec2& px);

Vec2 apply_homography(const Mat3& h, const Vec2& px);

}  // namespace oc3d
