#include "oc3d/align.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <json.hpp>
#include <limits>

#include "oc3d/parallel.hpp"
#include "oc3d/rng.hpp"

namespace oc3d {

namespace {

struct LumaPlane {
  int w = 0, h = 0;
  std::vector<double> luma;
  std::vector<std::uint8_t> valid;
};

LumaPlane luma_plane(const ImagePatch& img, const std::vector<std::uint8_t>* mask) {
  LumaPlane p;
  p.w = img.width;
  p.h = img.height;
  p.luma = to_luma(img);
  if (mask)
    p.valid = *mask;
  else
    p.valid.assign(p.luma.size(), 1);
  return p;
}

// Half-resolution level: 2x2 box average; valid only where all four source
// pixels are valid.
LumaPlane downsample(const LumaPlane& src) {
  LumaPlane dst;
  dst.w = src.w / 2;
  dst.h = src.h / 2;
  dst.luma.resize(static_cast<std::size_t>(dst.w) * dst.h);
  dst.valid.resize(dst.luma.size());
  for (int y = 0; y < dst.h; ++y)
    for (int x = 0; x < dst.w; ++x) {
      const std::size_t i00 = static_cast<std::size_t>(2 * y) * src.w + 2 * x;
      const std::size_t i10 = i00 + 1, i01 = i00 + src.w, i11 = i01 + 1;
      dst.luma[static_cast<std::size_t>(y) * dst.w + x] =
          0.25 * (src.luma[i00] + src.luma[i10] + src.luma[i01] + src.luma[i11]);
      dst.valid[static_cast<std::size_t>(y) * dst.w + x] =
          src.valid[i00] && src.valid[i10] && src.valid[i01] && src.valid[i11];
    }
  return dst;
}

struct Prefix {
  int w = 0, h = 0;
  std::vector<double> sum, sum2;
  std::vector<std::int32_t> count;

  void build(const LumaPlane& p) {
    w = p.w;
    h = p.h;
    const int sw = w + 1;
    sum.assign(static_cast<std::size_t>(sw) * (h + 1), 0.0);
    sum2.assign(sum.size(), 0.0);
    count.assign(sum.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const std::size_t o = static_cast<std::size_t>(y + 1) * sw + (x + 1);
        const double v = p.valid[i] ? p.luma[i] : 0.0;
        sum[o] = v + sum[o - 1] + sum[o - sw] - sum[o - sw - 1];
        sum2[o] = v * v + sum2[o - 1] + sum2[o - sw] - sum2[o - sw - 1];
        count[o] = (p.valid[i] ? 1 : 0) + count[o - 1] + count[o - sw] - count[o - sw - 1];
      }
  }
  // Window [x0, x0+n) x [y0, y0+n)
  void window(int x0, int y0, int n, double* s, double* s2, int* c) const {
    const int sw = w + 1;
    const std::size_t a = static_cast<std::size_t>(y0) * sw + x0;
    const std::size_t b = static_cast<std::size_t>(y0 + n) * sw + (x0 + n);
    const std::size_t r = static_cast<std::size_t>(y0) * sw + (x0 + n);
    const std::size_t l = static_cast<std::size_t>(y0 + n) * sw + x0;
    *s = sum[b] - sum[r] - sum[l] + sum[a];
    *s2 = sum2[b] - sum2[r] - sum2[l] + sum2[a];
    *c = count[b] - count[r] - count[l] + count[a];
  }
};

// Core integer block matcher. init gives a per-cell starting displacement
// (nullptr = zero). Ties on the ZNCC score break toward the smaller
// displacement from init, then raster order.
FlowField block_flow_impl(const LumaPlane& a, const LumaPlane& b, int block_px, int search_px,
                          const FlowField* init) {
  FlowField f;
  f.block_px = block_px;
  f.width = a.w / block_px;
  f.height = a.h / block_px;
  const std::size_t cells = static_cast<std::size_t>(f.width) * f.height;
  f.du.assign(cells, 0.0);
  f.dv.assign(cells, 0.0);
  f.confidence.assign(cells, 0.0);

  Prefix pb;
  pb.build(b);
  const int n = block_px;
  const int npx = n * n;

  for (int cy = 0; cy < f.height; ++cy) {
    for (int cx = 0; cx < f.width; ++cx) {
      const std::size_t ci = f.index(cx, cy);
      int init_du = 0, init_dv = 0;
      if (init) {
        const std::size_t pi = init->index(std::min(cx, init->width - 1), std::min(cy, init->height - 1));
        init_du = static_cast<int>(std::lround(init->du[pi]));
        init_dv = static_cast<int>(std::lround(init->dv[pi]));
      }
      f.du[ci] = init_du;
      f.dv[ci] = init_dv;

      const int x0 = cx * n, y0 = cy * n;
      // Block statistics for a; any invalid pixel disables the cell.
      double sa = 0, sa2 = 0;
      bool ok = true;
      for (int y = y0; y < y0 + n && ok; ++y)
        for (int x = x0; x < x0 + n; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * a.w + x;
          if (!a.valid[i]) {
            ok = false;
            break;
          }
          sa += a.luma[i];
          sa2 += a.luma[i] * a.luma[i];
        }
      if (!ok) continue;
      const double var_a = sa2 - sa * sa / npx;
      if (var_a < 1e-12) continue;  // constant block: ZNCC undefined -> 0

      double best = -2.0;
      int best_du = init_du, best_dv = init_dv;
      long best_r2 = std::numeric_limits<long>::max();
      bool found = false;
      for (int dy = -search_px; dy <= search_px; ++dy) {
        const int by0 = y0 + init_dv + dy;
        if (by0 < 0 || by0 + n > b.h) continue;
        for (int dx = -search_px; dx <= search_px; ++dx) {
          const int bx0 = x0 + init_du + dx;
          if (bx0 < 0 || bx0 + n > b.w) continue;
          double sb, sb2;
          int cnt;
          pb.window(bx0, by0, n, &sb, &sb2, &cnt);
          if (cnt != npx) continue;  // window touches invalid pixels
          const double var_b = sb2 - sb * sb / npx;
          if (var_b < 1e-12) continue;
          double sab = 0;
          for (int y = 0; y < n; ++y) {
            const double* ra = &a.luma[static_cast<std::size_t>(y0 + y) * a.w + x0];
            const double* rb = &b.luma[static_cast<std::size_t>(by0 + y) * b.w + bx0];
            for (int x = 0; x < n; ++x) sab += ra[x] * rb[x];
          }
          const double cov = sab - sa * sb / npx;
          const double score = cov / std::sqrt(var_a * var_b);
          const long r2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
          // ties on the score break toward the smaller displacement
          if (score > best + 1e-12 || (score > best - 1e-12 && r2 < best_r2)) {
            best = score;
            best_du = init_du + dx;
            best_dv = init_dv + dy;
            best_r2 = r2;
            found = true;
          }
        }
      }
      if (found) {
        f.du[ci] = best_du;
        f.dv[ci] = best_dv;
        f.confidence[ci] = best;
      }
    }
  }
  return f;
}

std::complex<double> to_c(const Vec2& v) { return {v.x(), v.y()}; }

struct Correspondence {
  Vec2 p, q;
  std::size_t cell;
};

Similarity2D from_complex(const std::complex<double>& a, const std::complex<double>& t) {
  Similarity2D s;
  s.scale = std::abs(a);
  s.angle = std::arg(a);
  s.tx = t.real();
  s.ty = t.imag();
  return s;
}

Mat3 similarity_matrix(const Similarity2D& s) {
  const double c = s.scale * std::cos(s.angle), sn = s.scale * std::sin(s.angle);
  Mat3 m;
  m << c, -sn, s.tx, sn, c, s.ty, 0, 0, 1;
  return m;
}

MaskedPatch warp_masked(const MaskedPatch& src, const Mat3& h_dst_to_src, int out_w, int out_h) {
  MaskedPatch out;
  out.image = ImagePatch::create(out_w, out_h, src.image.channels);
  out.valid.assign(static_cast<std::size_t>(out_w) * out_h, 0);
  const ImagePatch& im = src.image;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Vec3 q = h_dst_to_src * Vec3(x + 0.5, y + 0.5, 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const double sx = q.x() / q.z() - 0.5, sy = q.y() / q.z() - 0.5;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      if (x0 < 0 || y0 < 0 || x0 + 1 >= im.width || y0 + 1 >= im.height) continue;
      const std::size_t r0 = static_cast<std::size_t>(y0) * im.width;
      if (!src.valid[r0 + x0] || !src.valid[r0 + x0 + 1] || !src.valid[r0 + im.width + x0] ||
          !src.valid[r0 + im.width + x0 + 1])
        continue;
      const double ax = sx - x0, ay = sy - y0;
      for (int c = 0; c < im.channels; ++c) {
        const double v = (1 - ay) * ((1 - ax) * im.at(x0, y0, c) + ax * im.at(x0 + 1, y0, c)) +
                         ay * ((1 - ax) * im.at(x0, y0 + 1, c) + ax * im.at(x0 + 1, y0 + 1, c));
        out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
      out.valid[static_cast<std::size_t>(y) * out_w + x] = 1;
    }
  return out;
}

double ssim_windows(const LumaPlane& a, const LumaPlane& b, bool masked) {
  constexpr int kWin = 8;
  constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
  constexpr double kC2 = (0.03 * 255) * (0.03 * 255);
  double acc = 0;
  int windows = 0;
  for (int y0 = 0; y0 + kWin <= a.h; y0 += kWin)
    for (int x0 = 0; x0 + kWin <= a.w; x0 += kWin) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      bool ok = true;
      for (int y = y0; y < y0 + kWin && ok; ++y)
        for (int x = x0; x < x0 + kWin; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * a.w + x;
          if (masked && (!a.valid[i] || !b.valid[i])) {
            ok = false;
            break;
          }
          const double va = a.luma[i], vb = b.luma[i];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      if (!ok) continue;
      constexpr double n = kWin * kWin;
      const double mu_a = sa / n, mu_b = sb / n;
      const double var_a = saa / n - mu_a * mu_a;
      const double var_b = sbb / n - mu_b * mu_b;
      const double cov = sab / n - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
             ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++windows;
    }
  if (windows == 0) return masked ? -1.0 : 0.0;
  return acc / windows;
}

}  // namespace

std::size_t select_frontal(const Bundle& bundle) {
  if (!bundle.usable()) fail(Err::UnusableBundle, "select_frontal: bundle has < 2 views");
  std::size_t best = 0;
  double best_score = -2.0;
  for (std::size_t i = 0; i < bundle.views.size(); ++i) {
    const Vec3 dir = (bundle.target.point - bundle.views[i].extrinsics.center).normalized();
    const double score = -dir.dot(bundle.target.normal);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

MaskedPatch rectify(const ImagePatch& patch, const CameraExtrinsics& cam_src,
                    const CameraIntrinsics& k_src, const CameraExtrinsics& cam_ref,
                    const CameraIntrinsics& k_ref, const Target& target) {
  const CameraPlane plane = plane_in_camera(cam_src, target.point, target.normal);
  const Mat3 h = plane_homography(k_src, k_ref, relative_transform(cam_src, cam_ref), plane.n, plane.d);
  MaskedPatch out = warp_perspective(patch, h.inverse(), k_ref.width, k_ref.height);
  // The projective map is blind to depth signs: invalidate pixels whose plane
  // point lies behind either camera (grazing/behind-plane views).
  const Mat3 ref_to_world = cam_ref.rotation.matrix().transpose();
  for (int y = 0; y < k_ref.height; ++y)
    for (int x = 0; x < k_ref.width; ++x) {
      auto& flag = out.valid[static_cast<std::size_t>(y) * k_ref.width + x];
      if (!flag) continue;
      const Vec3 dir = ref_to_world * pixel_direction(k_ref, Vec2(x + 0.5, y + 0.5));
      const double denom = target.normal.dot(dir);
      if (std::abs(denom) < 1e-12) {
        flag = 0;
        continue;
      }
      const double t = target.normal.dot(target.point - cam_ref.center) / denom;
      if (t <= 1e-6) {
        flag = 0;
        continue;
      }
      const Vec3 world = cam_ref.center + t * dir;
      if (cam_src.world_to_camera(world).z() <= 1e-6) flag = 0;
    }
  return out;
}

FlowField block_flow(const ImagePatch& a, const ImagePatch& b, int block_px, int search_px) {
  if (!a.same_shape(b)) fail(Err::InvalidParams, "block_flow: size mismatch");
  if (block_px < 4) fail(Err::InvalidParams, "block_flow: block_px must be >= 4");
  if (search_px < 1) fail(Err::InvalidParams, "block_flow: search_px must be >= 1");
  return block_flow_impl(luma_plane(a, nullptr), luma_plane(b, nullptr), block_px, search_px, nullptr);
}

FlowField pyramid_flow(const MaskedPatch& a, const MaskedPatch& b, int levels, int block_px,
                       int search_px) {
  std::vector<LumaPlane> pa{luma_plane(a.image, &a.valid)};
  std::vector<LumaPlane> pb{luma_plane(b.image, &b.valid)};
  for (int l = 1; l < levels; ++l) {
    if (pa.back().w / 2 < block_px || pa.back().h / 2 < block_px) break;
    pa.push_back(downsample(pa.back()));
    pb.push_back(downsample(pb.back()));
  }
  FlowField flow;
  for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
    FlowField init;
    const bool has_init = l + 1 < static_cast<int>(pa.size());
    if (has_init) {
      // Upsample the coarser field: same cell grid geometry, doubled motion.
      init = flow;
      for (auto& v : init.du) v *= 2;
      for (auto& v : init.dv) v *= 2;
      // Map fine cells onto coarse cells by halving the cell coordinate.
      FlowField mapped;
      mapped.block_px = block_px;
      mapped.width = pa[l].w / block_px;
      mapped.height = pa[l].h / block_px;
      const std::size_t cells = static_cast<std::size_t>(mapped.width) * mapped.height;
      mapped.du.assign(cells, 0);
      mapped.dv.assign(cells, 0);
      mapped.confidence.assign(cells, 0);
      for (int cy = 0; cy < mapped.height; ++cy)
        for (int cx = 0; cx < mapped.width; ++cx) {
          const int px = std::min(cx / 2, init.width - 1);
          const int py = std::min(cy / 2, init.height - 1);
          mapped.du[mapped.index(cx, cy)] = init.du[init.index(px, py)];
          mapped.dv[mapped.index(cx, cy)] = init.dv[init.index(px, py)];
        }
      flow = block_flow_impl(pa[l], pb[l], block_px, search_px, &mapped);
    } else {
      flow = block_flow_impl(pa[l], pb[l], block_px, search_px, nullptr);
    }
  }
  return flow;
}

std::pair<Similarity2D, std::vector<std::uint8_t>> fit_similarity(const FlowField& flow, int iters,
                                                                  double inlier_px,
                                                                  std::uint64_t seed) {
  std::vector<Correspondence> corr;
  for (int cy = 0; cy < flow.height; ++cy)
    for (int cx = 0; cx < flow.width; ++cx) {
      const std::size_t ci = flow.index(cx, cy);
      if (flow.confidence[ci] <= 0.3) continue;
      const Vec2 p = flow.cell_center(cx, cy);
      corr.push_back({p, p + Vec2(flow.du[ci], flow.dv[ci]), ci});
    }
  if (corr.size() < 2)
    fail(Err::InsufficientCorrespondences, "fit_similarity: need >= 2 confident cells");

  std::mt19937_64 g(hash_combine(seed, 0x51517ull, corr.size()));
  auto count_inliers = [&](const Similarity2D& s, std::vector<std::uint8_t>* mask) {
    int n = 0;
    for (std::size_t i = 0; i < corr.size(); ++i) {
      const bool in = (s.apply(corr[i].p) - corr[i].q).norm() < inlier_px;
      if (mask) (*mask)[i] = in;
      n += in;
    }
    return n;
  };

  Similarity2D best;
  int best_inliers = -1;
  for (int it = 0; it < iters; ++it) {
    const std::size_t i = uniform_index(g, corr.size());
    std::size_t j = uniform_index(g, corr.size() - 1);
    if (j >= i) ++j;
    const std::complex<double> dp = to_c(corr[j].p) - to_c(corr[i].p);
    if (std::abs(dp) < 1e-6) continue;
    const std::complex<double> a = (to_c(corr[j].q) - to_c(corr[i].q)) / dp;
    if (std::abs(a) < 1e-12) continue;
    const Similarity2D s = from_complex(a, to_c(corr[i].q) - a * to_c(corr[i].p));
    const int n = count_inliers(s, nullptr);
    if (n > best_inliers) {
      best_inliers = n;
      best = s;
    }
  }
  if (best_inliers < 2) fail(Err::InsufficientCorrespondences, "fit_similarity: no model found");

  // Least-squares refit over the inliers of the best hypothesis. corr is in
  // canonical grid order, so the accumulation order does not depend on how
  // the caller discovered the cells.
  std::vector<std::uint8_t> mask(corr.size(), 0);
  count_inliers(best, &mask);
  std::complex<double> sp = 0, sq = 0, spq = 0;
  double spp = 0;
  int n = 0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!mask[i]) continue;
    const auto p = to_c(corr[i].p), q = to_c(corr[i].q);
    sp += p;
    sq += q;
    spq += std::conj(p) * q;
    spp += std::norm(p);
    ++n;
  }
  const std::complex<double> denom = double(n) * spp - std::conj(sp) * sp;
  Similarity2D refit = best;
  if (std::abs(denom) > 1e-9) {
    const std::complex<double> a = (double(n) * spq - std::conj(sp) * sq) / denom;
    if (std::abs(a) > 1e-12) refit = from_complex(a, (sq - a * sp) / double(n));
  }
  count_inliers(refit, &mask);

  std::vector<std::uint8_t> cell_mask(flow.du.size(), 0);
  for (std::size_t i = 0; i < corr.size(); ++i)
    if (mask[i]) cell_mask[corr[i].cell] = 1;
  return {refit, cell_mask};
}

double ssim(const ImagePatch& a, const ImagePatch& b) {
  if (!a.same_shape(b)) fail(Err::InvalidParams, "ssim: size mismatch");
  return ssim_windows(luma_plane(a, nullptr), luma_plane(b, nullptr), false);
}

double ssim_masked(const MaskedPatch& a, const MaskedPatch& b) {
  if (!a.image.same_shape(b.image)) fail(Err::InvalidParams, "ssim: size mismatch");
  return ssim_windows(luma_plane(a.image, &a.valid), luma_plane(b.image, &b.valid), true);
}

AlignmentReport align_bundle(const Bundle& bundle, const AlignThresholds& th) {
  const std::size_t frontal = select_frontal(bundle);
  const View& ref = bundle.views[frontal];
  const MaskedPatch ref_full = MaskedPatch::full(ref.patch);

  AlignmentReport report;
  report.views.resize(bundle.views.size());
  parallel_for(bundle.views.size(), [&](std::size_t i) {
    ViewAlignment& va = report.views[i];
    va.view = static_cast<int>(i);
    if (i == frontal) {
      va.frontal = true;
      va.ssim = 1.0;
      return;
    }
    const View& v = bundle.views[i];
    try {
      const CameraPlane plane = plane_in_camera(v.extrinsics, bundle.target.point, bundle.target.normal);
      const Mat3 h = plane_homography(v.intrinsics, ref.intrinsics,
                                      relative_transform(v.extrinsics, ref.extrinsics), plane.n, plane.d);
      const Mat3 h_inv = h.inverse();
      const MaskedPatch warped = warp_masked(MaskedPatch::full(v.patch), h_inv, ref.intrinsics.width,
                                             ref.intrinsics.height);
      const FlowField flow = pyramid_flow(warped, ref_full, th.pyramid_levels, th.block_px, th.search_px);
      const auto [sim, mask] = fit_similarity(flow, th.ransac_iters, th.ransac_inlier_px,
                                              hash_combine(th.seed, i));
      va.sim = sim;

      // Source pixel showing the frontal center's content, via the inverse
      // similarity then the inverse rectification.
      const Vec2 center_ref(ref.intrinsics.cx, ref.intrinsics.cy);
      const Vec2 in_warped = sim.apply_inverse(center_ref);
      const Vec2 in_src = apply_homography(h_inv, in_warped);
      va.adjustment_px = in_src - Vec2(v.intrinsics.cx, v.intrinsics.cy);

      const MaskedPatch aligned = warp_masked(warped, similarity_matrix(sim).inverse(),
                                              ref.intrinsics.width, ref.intrinsics.height);
      va.ssim = ssim_masked(aligned, ref_full);

      if (va.ssim < th.min_ssim) {
        va.pruned = true;
        va.reason = "ssim";
      } else if (Vec2(sim.tx, sim.ty).norm() > th.max_translation_px) {
        va.pruned = true;
        va.reason = "translation";
      } else if (std::abs(std::log(sim.scale)) > th.max_log_scale) {
        va.pruned = true;
        va.reason = "scale";
      }
    } catch (const Error& e) {
      va.pruned = true;
      va.reason = err_name(e.code());
    }
  });
  return report;
}

Bundle apply_alignment(const Scene& scene, const Bundle& bundle, const AlignmentReport& report) {
  Bundle out = bundle;
  parallel_for(out.views.size(), [&](std::size_t i) {
    View& v = out.views[i];
    const ViewAlignment& va = report.views[i];
    if (va.pruned) {
      v.pruned = true;
      return;
    }
    if (va.frontal || va.adjustment_px.norm() < 1e-12) return;
    // Rotate the actual camera so the estimated target pixel moves back to
    // the center; metadata extrinsics stay untouched.
    const Vec3 dir = Vec3(va.adjustment_px.x() / v.intrinsics.fx, va.adjustment_px.y() / v.intrinsics.fy, 1.0)
                         .normalized();
    Mat3 ax;
    // rotation_z_to(dir)^T applied on the left of the actual rotation
    const Vec3 z(0, 0, 1);
    const Vec3 a = z.cross(dir);
    const double c = z.dot(dir);
    ax << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
    const Mat3 r_delta = Mat3::Identity() + ax + ax * ax / (1.0 + c);
    v.actual.rotation = Rotation(Mat3(r_delta.transpose() * v.actual.rotation.matrix()));
    v.patch = render(scene, v.actual, v.intrinsics, v.intrinsics.width);
    const auto proj = project(v.intrinsics, v.actual.world_to_camera(out.target.point));
    v.center_offset_px =
        proj ? (*proj - Vec2(v.intrinsics.cx, v.intrinsics.cy)) : Vec2(0, 0);
  });
  return out;
}

std::string alignment_report_jsonl(const AlignmentReport& report) {
  std::string out;
  for (const ViewAlignment& v : report.views) {
    nlohmann::ordered_json j;
    j["view"] = v.view;
    j["frontal"] = v.frontal;
    j["ssim"] = v.ssim;
    j["sim"] = {{"scale", v.sim.scale}, {"angle", v.sim.angle}, {"tx", v.sim.tx}, {"ty", v.sim.ty}};
    j["adjustment_px"] = {v.adjustment_px.x(), v.adjustment_px.y()};
    j["pruned"] = v.pruned;
    j["reason"] = v.reason;
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace oc3d
