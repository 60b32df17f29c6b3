#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "oc3d/geometry.hpp"

namespace oc3d {

enum class TextureKind { Checker, Stripes, ValueNoise, Glyphs };

const char* texture_kind_name(TextureKind k);
TextureKind texture_kind_from_name(const std::string& name);

// Procedural facade texture; evaluated on demand from surface coordinates so
// patches are exact at any resolution.
struct Texture {
  TextureKind kind = TextureKind::Checker;
  double scale = 1.0;  // meters per cell
  std::array<std::uint8_t, 3> color_a{{255, 255, 255}};
  std::array<std::uint8_t, 3> color_b{{0, 0, 0}};
  std::uint64_t seed = 0;
};

// Rectangular wall: origin + alpha * u_axis + beta * v_axis, alpha/beta in
// [0,1]. normal = normalize(u x v).
struct Facade {
  int id = 0;
  Vec3 origin = Vec3::Zero();
  Vec3 u_axis = Vec3::Zero();
  Vec3 v_axis = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Texture texture;

  Vec3 point_at(double u, double v) const { return origin + u * u_axis + v * v_axis; }
};

struct Triangle {
  Vec3 a, b, c;
  int facade_id = 0;
};

struct SceneParams {
  int n_blocks = 2;               // blocks per side (n x n buildings)
  double street_width_m = 14.0;
  double building_width_m = 22.0;
  double building_height_m = 14.0;
  std::array<double, 4> texture_mix{{0.25, 0.25, 0.3, 0.2}};  // checker/stripes/noise/glyphs
  Vec3 world_offset = Vec3::Zero();

  double cell_m() const { return street_width_m + building_width_m; }
  double extent_m() const { return n_blocks * cell_m() + street_width_m; }
};

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
};

// Immutable triangle soup standing in for a 3D city model.
struct Scene {
  std::uint64_t seed = 0;
  SceneParams params;
  std::vector<Facade> facades;
  std::vector<Triangle> triangles;  // two per facade, derived
  Aabb bounds;
};

struct Target {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  int facade_id = 0;
  Vec2 uv = Vec2::Zero();
};

struct Hit {
  double t = 0.0;  // ray parameter, meters
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  int facade_id = 0;
  Vec2 uv = Vec2::Zero();
};

// Deterministic street-canyon grid: n_blocks^2 buildings, 4 outward wall
// facades each, textures and heights drawn from the seed.
Scene generate_scene(std::uint64_t seed, const SceneParams& params);

// Scene from explicit facades (ids reassigned to positions); normals and
// triangles are derived.
Scene scene_from_facades(std::vector<Facade> facades, std::uint64_t seed = 0);

// Nearest intersection with t > 1e-6; dir must be unit norm.
std::optional<Hit> ray_cast(const Scene& scene, const Vec3& origin, const Vec3& dir);

// n targets over facade area (area-weighted facade choice, uniform uv inside
// the margin box), deterministic per seed.
std::vector<Target> sample_targets(const Scene& scene, int n, std::uint64_t seed, double margin);

// Indices of candidates whose first hit toward the target lands on it
// (within 1e-4 m) from the front side (dir . normal < 0).
std::vector<std::size_t> visible_viewpoints(const Scene& scene, const Target& target,
                                            const std::vector<Vec3>& candidates);

// Texture color at facade surface coordinates (uv in [0,1]^2).
std::array<std::uint8_t, 3> texture_color(const Facade& facade, double u, double v);

// Versioned JSON with deterministic field order; round-trips exactly.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

}  // namespace oc3d
