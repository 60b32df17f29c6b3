#include "oc3d/scene.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "oc3d/rng.hpp"

namespace oc3d {

namespace {

using ordered_json = nlohmann::ordered_json;

// Two triangles per rectangle, consistent winding so both share the facade
// normal direction.
void append_triangles(const Facade& f, std::vector<Triangle>& out) {
  const Vec3 p00 = f.origin;
  const Vec3 p10 = f.origin + f.u_axis;
  const Vec3 p11 = f.origin + f.u_axis + f.v_axis;
  const Vec3 p01 = f.origin + f.v_axis;
  out.push_back(Triangle{p00, p10, p11, f.id});
  out.push_back(Triangle{p00, p11, p01, f.id});
}

TextureKind pick_kind(const std::array<double, 4>& mix, double u) {
  double total = 0;
  for (double m : mix) total += m;
  if (total <= 0) return TextureKind::Checker;
  double acc = 0;
  const TextureKind kinds[4] = {TextureKind::Checker, TextureKind::Stripes, TextureKind::ValueNoise,
                                TextureKind::Glyphs};
  for (int i = 0; i < 4; ++i) {
    acc += mix[i] / total;
    if (u < acc) return kinds[i];
  }
  return TextureKind::Glyphs;
}

std::array<std::uint8_t, 3> random_color(std::mt19937_64& g) {
  return {static_cast<std::uint8_t>(uniform_index(g, 256)),
          static_cast<std::uint8_t>(uniform_index(g, 256)),
          static_cast<std::uint8_t>(uniform_index(g, 256))};
}

double luma_of(const std::array<std::uint8_t, 3>& c) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

// Möller-Trumbore with epsilon 1e-9 on the barycentric bounds.
bool intersect_triangle(const Triangle& tri, const Vec3& origin, const Vec3& dir, double* t_out) {
  constexpr double kEps = 1e-9;
  const Vec3 e1 = tri.b - tri.a;
  const Vec3 e2 = tri.c - tri.a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-12) return false;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - tri.a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < -kEps || u > 1.0 + kEps) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < -kEps || u + v > 1.0 + kEps) return false;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= 1e-6) return false;
  *t_out = t;
  return true;
}

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const ordered_json& j) { return Vec3(j.at(0), j.at(1), j.at(2)); }

}  // namespace

const char* texture_kind_name(TextureKind k) {
  switch (k) {
    case TextureKind::Checker: return "checker";
    case TextureKind::Stripes: return "stripes";
    case TextureKind::ValueNoise: return "valuenoise";
    case TextureKind::Glyphs: return "glyphs";
  }
  return "checker";
}

TextureKind texture_kind_from_name(const std::string& name) {
  if (name == "checker") return TextureKind::Checker;
  if (name == "stripes") return TextureKind::Stripes;
  if (name == "valuenoise") return TextureKind::ValueNoise;
  if (name == "glyphs") return TextureKind::Glyphs;
  fail(Err::Parse, "unknown texture kind: " + name);
}

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.n_blocks < 1) fail(Err::InvalidParams, "n_blocks must be >= 1");
  if (!(params.street_width_m > 0) || !(params.building_width_m > 0) || !(params.building_height_m > 0))
    fail(Err::InvalidParams, "scene dimensions must be positive");

  Scene scene;
  scene.seed = seed;
  scene.params = params;
  std::mt19937_64 g(hash_combine(seed, 0x5ce9e));

  const double sw = params.street_width_m;
  const double bw = params.building_width_m;
  const double cell = params.cell_m();
  const Vec3 off = params.world_offset;

  int next_id = 0;
  for (int bi = 0; bi < params.n_blocks; ++bi) {
    for (int bj = 0; bj < params.n_blocks; ++bj) {
      const double x0 = off.x() + bi * cell + sw;
      const double z0 = off.z() + bj * cell + sw;
      const double x1 = x0 + bw;
      const double z1 = z0 + bw;
      const double h = params.building_height_m * (0.75 + 0.5 * unit_real(g));

      // Per-building texture family keeps adjacent walls distinguishable.
      auto make_texture = [&](double span) {
        Texture t;
        t.kind = pick_kind(params.texture_mix, unit_real(g));
        t.seed = g();
        t.color_a = random_color(g);
        do {
          t.color_b = random_color(g);
        } while (std::abs(luma_of(t.color_a) - luma_of(t.color_b)) < 60.0);
        const double base = t.kind == TextureKind::ValueNoise ? span / 6.0 : span / 10.0;
        t.scale = base * (0.7 + 0.6 * unit_real(g));
        return t;
      };

      const Vec3 vy(0, h, 0);
      // Outward-facing walls; u horizontal, v vertical, normal = u x v.
      const Facade walls[4] = {
          {next_id + 0, Vec3(x0, off.y(), z0), Vec3(0, 0, bw), vy, Vec3(-1, 0, 0), make_texture(bw)},
          {next_id + 1, Vec3(x1, off.y(), z1), Vec3(0, 0, -bw), vy, Vec3(1, 0, 0), make_texture(bw)},
          {next_id + 2, Vec3(x1, off.y(), z0), Vec3(-bw, 0, 0), vy, Vec3(0, 0, -1), make_texture(bw)},
          {next_id + 3, Vec3(x0, off.y(), z1), Vec3(bw, 0, 0), vy, Vec3(0, 0, 1), make_texture(bw)},
      };
      for (const Facade& w : walls) scene.facades.push_back(w);
      next_id += 4;
    }
  }

  for (const Facade& f : scene.facades) append_triangles(f, scene.triangles);

  scene.bounds.lo = off;
  scene.bounds.hi = off + Vec3(params.extent_m(), params.building_height_m * 1.25, params.extent_m());
  return scene;
}

Scene scene_from_facades(std::vector<Facade> facades, std::uint64_t seed) {
  Scene s;
  s.seed = seed;
  for (std::size_t i = 0; i < facades.size(); ++i) {
    facades[i].id = static_cast<int>(i);
    facades[i].normal = facades[i].u_axis.cross(facades[i].v_axis).normalized();
  }
  s.facades = std::move(facades);
  for (const Facade& f : s.facades) append_triangles(f, s.triangles);
  Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
  for (const Facade& f : s.facades) {
    const Vec3 corners[4] = {f.origin, f.origin + f.u_axis, f.origin + f.v_axis,
                             f.origin + f.u_axis + f.v_axis};
    for (const Vec3& p : corners) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  s.bounds = {lo, hi};
  return s;
}

std::optional<Hit> ray_cast(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<Hit> best;
  for (const Triangle& tri : scene.triangles) {
    double t;
    if (!intersect_triangle(tri, origin, dir, &t)) continue;
    if (best && t >= best->t) continue;
    Hit h;
    h.t = t;
    h.point = origin + t * dir;
    const Facade& f = scene.facades[tri.facade_id];
    h.normal = f.normal;
    h.facade_id = tri.facade_id;
    const Vec3 rel = h.point - f.origin;
    h.uv = Vec2(rel.dot(f.u_axis) / f.u_axis.squaredNorm(), rel.dot(f.v_axis) / f.v_axis.squaredNorm());
    best = h;
  }
  return best;
}

std::vector<Target> sample_targets(const Scene& scene, int n, std::uint64_t seed, double margin) {
  if (n < 1) fail(Err::InvalidParams, "sample_targets: n must be >= 1");
  if (margin < 0 || margin >= 0.5) fail(Err::InvalidParams, "sample_targets: margin must be in [0, 0.5)");
  if (scene.facades.empty()) fail(Err::InvalidParams, "sample_targets: empty scene");

  std::vector<double> cumulative;
  cumulative.reserve(scene.facades.size());
  double total = 0;
  for (const Facade& f : scene.facades) {
    total += f.u_axis.cross(f.v_axis).norm();
    cumulative.push_back(total);
  }

  std::mt19937_64 g(hash_combine(seed, 0x7a69e75));
  std::vector<Target> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double pick = unit_real(g) * total;
    std::size_t fi = std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    if (fi >= scene.facades.size()) fi = scene.facades.size() - 1;
    const Facade& f = scene.facades[fi];
    Target t;
    t.facade_id = f.id;
    t.uv = Vec2(margin + (1 - 2 * margin) * unit_real(g), margin + (1 - 2 * margin) * unit_real(g));
    t.point = f.point_at(t.uv.x(), t.uv.y());
    t.normal = f.normal;
    out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> visible_viewpoints(const Scene& scene, const Target& target,
                                            const std::vector<Vec3>& candidates) {
  if (candidates.empty()) fail(Err::InvalidParams, "visible_viewpoints: no candidates");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Vec3 delta = target.point - candidates[i];
    const double dist = delta.norm();
    if (dist < 1e-9) continue;
    const Vec3 dir = delta / dist;
    if (dir.dot(target.normal) >= 0) continue;  // back side or grazing
    const auto hit = ray_cast(scene, candidates[i], dir);
    if (!hit) continue;
    if ((hit->point - target.point).norm() <= 1e-4) out.push_back(i);
  }
  return out;
}

std::array<std::uint8_t, 3> texture_color(const Facade& facade, double u, double v) {
  const Texture& t = facade.texture;
  const double um = u * facade.u_axis.norm();
  const double vm = v * facade.v_axis.norm();
  auto blend = [&](double w) {
    std::array<std::uint8_t, 3> c;
    for (int i = 0; i < 3; ++i) {
      const double x = t.color_a[i] + w * (t.color_b[i] - t.color_a[i]);
      c[i] = static_cast<std::uint8_t>(std::clamp(std::floor(x + 0.5), 0.0, 255.0));
    }
    return c;
  };
  const auto cell_x = static_cast<std::int64_t>(std::floor(um / t.scale));
  const auto cell_y = static_cast<std::int64_t>(std::floor(vm / t.scale));
  switch (t.kind) {
    case TextureKind::Checker:
      return ((cell_x + cell_y) & 1) ? t.color_b : t.color_a;
    case TextureKind::Stripes:
      return (cell_x & 1) ? t.color_b : t.color_a;
    case TextureKind::ValueNoise: {
      const double gx = um / t.scale, gy = vm / t.scale;
      const auto ix = static_cast<std::int64_t>(std::floor(gx));
      const auto iy = static_cast<std::int64_t>(std::floor(gy));
      const double fx = gx - ix, fy = gy - iy;
      auto corner = [&](std::int64_t dx, std::int64_t dy) {
        return hash_unit(hash_combine(t.seed, static_cast<std::uint64_t>(ix + dx),
                                      static_cast<std::uint64_t>(iy + dy)));
      };
      const double w = (1 - fy) * ((1 - fx) * corner(0, 0) + fx * corner(1, 0)) +
                       fy * ((1 - fx) * corner(0, 1) + fx * corner(1, 1));
      return blend(w);
    }
    case TextureKind::Glyphs: {
      // 5x7 dot-matrix glyph per cell, one-dot border, bits from the cell hash.
      const double fx = um / t.scale - cell_x;
      const double fy = vm / t.scale - cell_y;
      const int gx = static_cast<int>(std::floor(fx * 7.0));
      const int gy = static_cast<int>(std::floor(fy * 9.0));
      if (gx < 1 || gx > 5 || gy < 1 || gy > 7) return t.color_a;
      const std::uint64_t bits =
          hash_combine(t.seed, static_cast<std::uint64_t>(cell_x), static_cast<std::uint64_t>(cell_y));
      const int bit = (gy - 1) * 5 + (gx - 1);
      return ((bits >> bit) & 1) ? t.color_b : t.color_a;
    }
  }
  return t.color_a;
}

std::string scene_to_json(const Scene& scene) {
  ordered_json j;
  j["format"] = "oc3d-scene";
  j["version"] = 1;
  j["seed"] = scene.seed;
  ordered_json p;
  p["n_blocks"] = scene.params.n_blocks;
  p["street_width_m"] = scene.params.street_width_m;
  p["building_width_m"] = scene.params.building_width_m;
  p["building_height_m"] = scene.params.building_height_m;
  p["texture_mix"] = scene.params.texture_mix;
  p["world_offset"] = vec3_json(scene.params.world_offset);
  j["params"] = p;
  j["bounds"] = {{"lo", vec3_json(scene.bounds.lo)}, {"hi", vec3_json(scene.bounds.hi)}};
  ordered_json facades = ordered_json::array();
  for (const Facade& f : scene.facades) {
    ordered_json fj;
    fj["id"] = f.id;
    fj["origin"] = vec3_json(f.origin);
    fj["u_axis"] = vec3_json(f.u_axis);
    fj["v_axis"] = vec3_json(f.v_axis);
    ordered_json tj;
    tj["kind"] = texture_kind_name(f.texture.kind);
    tj["scale"] = f.texture.scale;
    tj["color_a"] = f.texture.color_a;
    tj["color_b"] = f.texture.color_b;
    tj["seed"] = f.texture.seed;
    fj["texture"] = tj;
    facades.push_back(fj);
  }
  j["facades"] = facades;
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::CorruptFile, std::string("scene json: ") + e.what());
  }
  try {
    if (j.at("format") != "oc3d-scene" || j.at("version") != 1)
      fail(Err::CorruptFile, "scene json: bad format/version");
    Scene s;
    s.seed = j.at("seed");
    const auto& p = j.at("params");
    s.params.n_blocks = p.at("n_blocks");
    s.params.street_width_m = p.at("street_width_m");
    s.params.building_width_m = p.at("building_width_m");
    s.params.building_height_m = p.at("building_height_m");
    s.params.texture_mix = p.at("texture_mix");
    s.params.world_offset = vec3_from(p.at("world_offset"));
    s.bounds.lo = vec3_from(j.at("bounds").at("lo"));
    s.bounds.hi = vec3_from(j.at("bounds").at("hi"));
    for (const auto& fj : j.at("facades")) {
      Facade f;
      f.id = fj.at("id");
      f.origin = vec3_from(fj.at("origin"));
      f.u_axis = vec3_from(fj.at("u_axis"));
      f.v_axis = vec3_from(fj.at("v_axis"));
      f.normal = f.u_axis.cross(f.v_axis).normalized();
      const auto& tj = fj.at("texture");
      f.texture.kind = texture_kind_from_name(tj.at("kind"));
      f.texture.scale = tj.at("scale");
      f.texture.color_a = tj.at("color_a");
      f.texture.color_b = tj.at("color_b");
      f.texture.seed = tj.at("seed");
      s.facades.push_back(f);
    }
    for (const Facade& f : s.facades) append_triangles(f, s.triangles);
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(Err::CorruptFile, std::string("scene json: ") + e.what());
  }
}

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::Io, "cannot open for write: " + path);
  f << scene_to_json(scene);
  if (!f) fail(Err::Io, "write failed: " + path);
}

Scene load_scene(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::MissingArtifact, "cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return scene_from_json(text);
}

}  // namespace oc3d
