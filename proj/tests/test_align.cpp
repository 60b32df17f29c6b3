#include <doctest.h>

#include <random>

#include "oc3d/align.hpp"
#include "oc3d/rng.hpp"

using namespace oc3d;

namespace {

Scene noise_wall(double scale = 1.2) {
  Facade wall;
  wall.origin = Vec3(0, -10, -30);
  wall.u_axis = Vec3(0, 0, 60);
  wall.v_axis = Vec3(0, 40, 0);  // normal (-1, 0, 0)
  wall.texture.kind = TextureKind::ValueNoise;
  wall.texture.scale = scale;
  wall.texture.color_a = {20, 30, 40};
  wall.texture.color_b = {240, 220, 200};
  wall.texture.seed = 99;
  return scene_from_facades({wall});
}

Target wall_target(const Scene& s) {
  Target t;
  t.facade_id = 0;
  t.uv = Vec2(0.5, 0.5);
  t.point = s.facades[0].point_at(0.5, 0.5);
  t.normal = s.facades[0].normal;
  return t;
}

ImagePatch noise_image(int w, int h, std::uint64_t seed) {
  ImagePatch p = ImagePatch::create(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p.at(x, y) = static_cast<std::uint8_t>(hash_combine(seed, x, y) & 0xFF);
  return p;
}

double masked_mae(const MaskedPatch& got, const ImagePatch& want, std::size_t* count = nullptr) {
  double acc = 0;
  std::size_t n = 0;
  for (int y = 0; y < want.height; ++y)
    for (int x = 0; x < want.width; ++x) {
      if (!got.is_valid(x, y)) continue;
      for (int c = 0; c < want.channels; ++c)
        acc += std::abs(static_cast<double>(got.image.at(x, y, c)) - want.at(x, y, c));
      n += want.channels;
    }
  if (count) *count = n;
  return n ? acc / n : 0.0;
}

}  // namespace

TEST_CASE("select_frontal picks the most anti-parallel view, lowest index on ties") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  Bundle b;
  b.target = t;
  auto add_view = [&](const Vec3& pos) {
    View v;
    v.extrinsics = fixate(pos, t, Vec3(0, 1, 0));
    v.actual = v.extrinsics;
    v.intrinsics = CameraIntrinsics::from_fov(60, 32, 32);
    v.patch = ImagePatch::create(32, 32, 3);
    b.views.push_back(v);
  };
  add_view(t.point + 10.0 * Vec3(-0.5, 0, 0.866));   // oblique
  add_view(t.point + 10.0 * Vec3(-1, 0, 0));         // frontal
  add_view(t.point + 10.0 * Vec3(-0.5, 0, -0.866));  // oblique
  CHECK(select_frontal(b) == 1);

  // exact tie between two mirrored views resolves to the lower index
  Bundle tie;
  tie.target = t;
  b.views.clear();
  View v1, v2;
  v1.extrinsics = fixate(t.point + 10.0 * Vec3(-0.6, 0, 0.8), t, Vec3(0, 1, 0));
  v2.extrinsics = fixate(t.point + 10.0 * Vec3(-0.6, 0, -0.8), t, Vec3(0, 1, 0));
  tie.views = {v1, v2};
  CHECK(select_frontal(tie) == 0);

  Bundle too_small;
  too_small.target = t;
  too_small.views = {v1};
  CHECK_THROWS_AS((void)select_frontal(too_small), Error);
}

TEST_CASE("rectify: src == ref is the identity warp on the valid region") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const CameraExtrinsics e = fixate(t.point + 9.0 * t.normal, t, Vec3(0, 1, 0));
  const CameraIntrinsics k = CameraIntrinsics::from_fov(60, 96, 96);
  const ImagePatch patch = render(s, e, k, 96);
  const MaskedPatch warped = rectify(patch, e, k, e, k, t);
  std::size_t valid = 0;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      if (!warped.is_valid(x, y)) continue;
      ++valid;
      for (int c = 0; c < 3; ++c) CHECK(warped.image.at(x, y, c) == patch.at(x, y, c));
    }
  CHECK(valid >= 95u * 95u);
}

TEST_CASE("rectify: noiseless pairs up to 60 degrees warp to the reference within 2/255") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const CameraIntrinsics k = CameraIntrinsics::from_fov(60, 128, 128);
  const double dist = 10.0;
  const CameraExtrinsics frontal = fixate(t.point + dist * t.normal, t, Vec3(0, 1, 0));
  const ImagePatch ref = render(s, frontal, k, 128);

  for (double deg : {20.0, 40.0, 60.0}) {
    const double a = deg * M_PI / 180.0;
    const Vec3 pos = t.point + dist * Vec3(-std::cos(a), 0, std::sin(a));
    const CameraExtrinsics oblique = fixate(pos, t, Vec3(0, 1, 0));
    const ImagePatch src = render(s, oblique, k, 128);
    const MaskedPatch warped = rectify(src, oblique, k, frontal, k, t);
    std::size_t n = 0;
    const double mae = masked_mae(warped, ref, &n);
    CHECK(n > 128u * 128u);  // at least a third of the patch is usable
    CHECK(mae < 2.0);        // u8 scale: 2/255
  }
}

TEST_CASE("rectify: grazing view yields a large invalid region without crashing") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const CameraIntrinsics k = CameraIntrinsics::from_fov(60, 64, 64);
  const CameraExtrinsics frontal = fixate(t.point + 10.0 * t.normal, t, Vec3(0, 1, 0));
  const double a = 93.0 * M_PI / 180.0;  // slightly behind the facade plane, close in
  const CameraExtrinsics grazing =
      fixate(t.point + 3.0 * Vec3(-std::cos(a), 0, std::sin(a)), t, Vec3(0, 1, 0));
  const ImagePatch src = render(s, grazing, k, 64);
  const MaskedPatch warped = rectify(src, grazing, k, frontal, k, t);
  std::size_t valid = 0;
  for (std::uint8_t v : warped.valid) valid += v;
  CHECK(valid < warped.valid.size() / 2);
}

TEST_CASE("rectify round trip returns to the source within bilinear loss") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const CameraIntrinsics k = CameraIntrinsics::from_fov(60, 96, 96);
  const double dist = 10.0;
  const CameraExtrinsics cam_a = fixate(t.point + dist * t.normal, t, Vec3(0, 1, 0));
  const double a = 35.0 * M_PI / 180.0;
  const CameraExtrinsics cam_b =
      fixate(t.point + dist * Vec3(-std::cos(a), 0, std::sin(a)), t, Vec3(0, 1, 0));

  const ImagePatch patch = render(s, cam_a, k, 96);
  const MaskedPatch ab = rectify(patch, cam_a, k, cam_b, k, t);
  const MaskedPatch back = rectify(ab.image, cam_b, k, cam_a, k, t);

  // forward map of the second warp, used to reject samples near the first
  // warp's invalid border
  const CameraPlane plane = plane_in_camera(cam_a, t.point, t.normal);
  const Mat3 h_ab = plane_homography(k, k, relative_transform(cam_a, cam_b), plane.n, plane.d);

  double acc = 0;
  std::size_t n = 0;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      if (!back.is_valid(x, y)) continue;
      const Vec2 mid = apply_homography(h_ab, Vec2(x + 0.5, y + 0.5));
      const int mx = static_cast<int>(std::floor(mid.x() - 0.5));
      const int my = static_cast<int>(std::floor(mid.y() - 0.5));
      bool clean = mx >= 0 && my >= 0 && mx + 1 < 96 && my + 1 < 96;
      for (int dy = 0; clean && dy <= 1; ++dy)
        for (int dx = 0; clean && dx <= 1; ++dx) clean = ab.is_valid(mx + dx, my + dy);
      if (!clean) continue;
      for (int c = 0; c < 3; ++c)
        acc += std::abs(static_cast<double>(back.image.at(x, y, c)) - patch.at(x, y, c));
      n += 3;
    }
  REQUIRE(n > 1000u);
  CHECK(acc / n < 2.0);
}

TEST_CASE("block_flow: identical images give zero flow with confidence 1") {
  const ImagePatch a = noise_image(64, 64, 5);
  const FlowField f = block_flow(a, a, 16, 4);
  for (int cy = 0; cy < f.height; ++cy)
    for (int cx = 0; cx < f.width; ++cx) {
      const auto i = f.index(cx, cy);
      CHECK(f.du[i] == 0.0);
      CHECK(f.dv[i] == 0.0);
      CHECK(f.confidence[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("block_flow recovers a constructed integer shift") {
  const ImagePatch a = noise_image(96, 96, 6);
  ImagePatch b = noise_image(96, 96, 7);  // background differs
  // b(x, y) = a(x - 3, y + 2) where defined
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      const int sx = x - 3, sy = y + 2;
      if (sx >= 0 && sx < 96 && sy >= 0 && sy < 96) b.at(x, y) = a.at(sx, sy);
    }
  const FlowField f = block_flow(a, b, 16, 6);
  int modal = 0, total = 0;
  for (std::size_t i = 0; i < f.du.size(); ++i) {
    if (f.confidence[i] <= 0.3) continue;
    ++total;
    if (f.du[i] == 3.0 && f.dv[i] == -2.0) ++modal;
  }
  CHECK(total >= 20);
  CHECK(modal * 2 > total);
}

TEST_CASE("block_flow: constant blocks get confidence 0") {
  ImagePatch a = ImagePatch::create(32, 32, 1);
  std::fill(a.pixels.begin(), a.pixels.end(), 90);
  const ImagePatch b = noise_image(32, 32, 8);
  const FlowField f = block_flow(a, b, 16, 3);
  for (double c : f.confidence) CHECK(c == 0.0);
}

TEST_CASE("fit_similarity: pure translation flow") {
  FlowField f;
  f.width = 6;
  f.height = 6;
  f.block_px = 16;
  f.du.assign(36, 5.0);
  f.dv.assign(36, -1.0);
  f.confidence.assign(36, 0.9);
  const auto [sim, mask] = fit_similarity(f, 100, 2.0, 3);
  CHECK(sim.scale == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sim.angle == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sim.tx == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(sim.ty == doctest::Approx(-1.0).epsilon(1e-9));
  for (std::uint8_t m : mask) CHECK(m == 1);

  // determinism
  const auto [sim2, mask2] = fit_similarity(f, 100, 2.0, 3);
  CHECK(sim2.tx == sim.tx);
  CHECK(mask2 == mask);
}

TEST_CASE("fit_similarity rejects 30% uniform outliers") {
  FlowField f;
  f.width = 8;
  f.height = 8;
  f.block_px = 16;
  f.du.assign(64, 5.0);
  f.dv.assign(64, -1.0);
  f.confidence.assign(64, 0.9);
  std::mt19937_64 g(17);
  for (int i = 0; i < 19; ++i) {  // ~30% of 64
    const std::size_t j = uniform_index(g, 64);
    f.du[j] = uniform_real(g, -12, 12);
    f.dv[j] = uniform_real(g, -12, 12);
  }
  const auto [sim, mask] = fit_similarity(f, 300, 1.5, 4);
  CHECK(std::abs(sim.tx - 5.0) < 0.5);
  CHECK(std::abs(sim.ty + 1.0) < 0.5);
  CHECK(sim.scale == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("fit_similarity needs two confident cells") {
  FlowField f;
  f.width = 4;
  f.height = 4;
  f.block_px = 16;
  f.du.assign(16, 0.0);
  f.dv.assign(16, 0.0);
  f.confidence.assign(16, 0.0);
  f.confidence[5] = 0.9;
  try {
    (void)fit_similarity(f, 50, 2.0, 1);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::InsufficientCorrespondences);
  }
}

TEST_CASE("ssim basics and sign under structure inversion") {
  const ImagePatch a = noise_image(64, 64, 9);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  ImagePatch inv = a;
  for (auto& p : inv.pixels) p = static_cast<std::uint8_t>(255 - p);
  CHECK(ssim(a, inv) < 0.0);
}

TEST_CASE("ssim matches an independent windowed-formula oracle on a 16x16 pair") {
  const ImagePatch a = noise_image(16, 16, 10);
  const ImagePatch b = noise_image(16, 16, 11);
  const double got = ssim(a, b);

  // direct oracle: four 8x8 windows, population moments
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  double acc = 0;
  for (int wy = 0; wy < 2; ++wy)
    for (int wx = 0; wx < 2; ++wx) {
      double ma = 0, mb = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          ma += a.at(wx * 8 + x, wy * 8 + y);
          mb += b.at(wx * 8 + x, wy * 8 + y);
        }
      ma /= 64;
      mb /= 64;
      double va = 0, vb = 0, cov = 0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const double da = a.at(wx * 8 + x, wy * 8 + y) - ma;
          const double db = b.at(wx * 8 + x, wy * 8 + y) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= 64;
      vb /= 64;
      cov /= 64;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  CHECK(got == doctest::Approx(acc / 4).epsilon(1e-9));
}

namespace {

Bundle arc_bundle(const Scene& s, const Target& t, double arc_deg, int count, int size) {
  return build_bundle(s, t, arc_candidates(t, 10.0, arc_deg, count, t.point.y()), 60, size);
}

AlignThresholds test_thresholds() {
  AlignThresholds th;
  th.seed = 1234;
  return th;
}

}  // namespace

TEST_CASE("align_bundle: noiseless bundle needs no adjustment and keeps all views") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const Bundle b = arc_bundle(s, t, 60, 5, 128);
  REQUIRE(b.views.size() == 5);
  const AlignmentReport r = align_bundle(b, test_thresholds());
  for (const ViewAlignment& v : r.views) {
    CHECK(!v.pruned);
    CHECK(v.adjustment_px.norm() < 0.5);
  }
}

TEST_CASE("align_bundle recovers a 12 px injected offset within 1 px") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  Bundle b = arc_bundle(s, t, 50, 3, 144);
  REQUIRE(b.views.size() == 3);
  const std::size_t frontal = select_frontal(b);
  // magnitude exactly 12 px at width 144, random direction, frontal clean
  const Bundle noisy = inject_noise(s, b, NoiseStats{12.0, 0.0, 12.0}, 77,
                                    static_cast<int>(frontal));
  const AlignmentReport r = align_bundle(noisy, test_thresholds());
  for (std::size_t i = 0; i < noisy.views.size(); ++i) {
    if (i == frontal) continue;
    CHECK(!r.views[i].pruned);
    CHECK((r.views[i].adjustment_px - noisy.views[i].center_offset_px).norm() < 1.0);
  }
}

TEST_CASE("align_bundle prunes a mostly occluded view with reason ssim") {
  Scene s = noise_wall();
  const Target t = wall_target(s);
  Bundle clean = arc_bundle(s, t, 60, 4, 128);
  REQUIRE(clean.views.size() == 4);
  const std::size_t frontal = select_frontal(clean);
  // pick a non-frontal victim and plant screens 2 m in front of it that
  // cover most of its frustum but keep the center ray clear
  std::size_t victim = frontal == 0 ? 1 : 0;
  const CameraExtrinsics cam = clean.views[victim].extrinsics;
  const Mat3 rt = cam.rotation.matrix().transpose();
  auto ctw = [&](double x, double y, double z) -> Vec3 {
    return Vec3(rt * Vec3(x, y, z)) + cam.center;
  };
  Facade left;  // covers x in [-1.4, -0.05] at depth 2
  left.origin = ctw(-1.4, -1.4, 2.0);
  left.u_axis = ctw(-0.05, -1.4, 2.0) - left.origin;
  left.v_axis = ctw(-1.4, 1.4, 2.0) - left.origin;
  left.texture.kind = TextureKind::Checker;
  left.texture.scale = 0.2;
  left.texture.color_a = {250, 40, 40};
  left.texture.color_b = {40, 250, 40};
  Facade upper;  // covers y in [0.08, 1.4] on the right side
  upper.origin = ctw(-0.05, 0.08, 2.0);
  upper.u_axis = ctw(1.4, 0.08, 2.0) - upper.origin;
  upper.v_axis = ctw(-0.05, 1.4, 2.0) - upper.origin;
  upper.texture = left.texture;
  Facade corner;  // covers x in [0.5, 1.4] below the axis
  corner.origin = ctw(0.5, -1.4, 2.0);
  corner.u_axis = ctw(1.4, -1.4, 2.0) - corner.origin;
  corner.v_axis = ctw(0.5, 0.08, 2.0) - corner.origin;
  corner.texture = left.texture;

  std::vector<Facade> facades = s.facades;
  facades.push_back(left);
  facades.push_back(upper);
  facades.push_back(corner);
  const Scene occluded = scene_from_facades(facades);
  Target t2 = t;  // same wall, same target

  const Bundle b = build_bundle(
      occluded, t2,
      arc_candidates(t2, 10.0, 60, 4, t2.point.y()), 60, 128);
  REQUIRE(b.views.size() == 4);
  const AlignmentReport r = align_bundle(b, test_thresholds());
  CHECK(r.views[victim].pruned);
  CHECK(r.views[victim].reason == "ssim");
  int unpruned = 0;
  for (const auto& v : r.views) unpruned += !v.pruned;
  CHECK(unpruned >= 3);
}

TEST_CASE("alignment reduces center error on noise-injected bundles") {
  const Scene s = noise_wall();
  const auto targets = sample_targets(s, 4, 21, 0.3);
  int total = 0, improved = 0, recovered = 0;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const Bundle clean = arc_bundle(s, targets[ti], 70, 5, 128);
    if (!clean.usable()) continue;
    const std::size_t frontal = select_frontal(clean);
    const Bundle noisy =
        inject_noise(s, clean, NoiseStats{8, 4, 15}, 555 + ti, static_cast<int>(frontal));
    const AlignmentReport r = align_bundle(noisy, test_thresholds());
    const Bundle fixed = apply_alignment(s, noisy, r);
    for (std::size_t i = 0; i < fixed.views.size(); ++i) {
      if (i == frontal || r.views[i].pruned) continue;
      ++total;
      const double before = noisy.views[i].center_offset_px.norm();
      const double after = fixed.views[i].center_offset_px.norm();
      if (after <= before + 1e-9) ++improved;
      if ((r.views[i].adjustment_px - noisy.views[i].center_offset_px).norm() < 1.0) ++recovered;
    }
  }
  REQUIRE(total >= 12);
  CHECK(improved * 10 >= total * 9);   // >= 90%
  CHECK(recovered * 10 >= total * 9);  // >= 90%
}

TEST_CASE("alignment report serializes one JSON line per view") {
  const Scene s = noise_wall();
  const Target t = wall_target(s);
  const Bundle b = arc_bundle(s, t, 40, 3, 96);
  const AlignmentReport r = align_bundle(b, test_thresholds());
  const std::string jsonl = alignment_report_jsonl(r);
  std::size_t lines = 0;
  for (char c : jsonl) lines += c == '\n';
  CHECK(lines == b.views.size());
  CHECK(jsonl.find("\"pruned\":false") != std::string::npos);
}
