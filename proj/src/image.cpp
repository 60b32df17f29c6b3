#include "oc3d/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace oc3d {

std::vector<double> to_luma(const ImagePatch& p) {
  std::vector<double> out(static_cast<std::size_t>(p.width) * p.height);
  if (p.channels == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.pixels[i];
    return out;
  }
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const std::size_t i = p.index(x, y);
      out[static_cast<std::size_t>(y) * p.width + x] =
          0.299 * p.pixels[i] + 0.587 * p.pixels[i + 1] + 0.114 * p.pixels[i + 2];
    }
  return out;
}

ImagePatch resample_area(const ImagePatch& src, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) fail(Err::InvalidParams, "resample: bad output size");
  if (out_w == src.width && out_h == src.height) return src;
  ImagePatch dst = ImagePatch::create(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  std::vector<double> acc(src.channels);
  for (int oy = 0; oy < out_h; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      std::fill(acc.begin(), acc.end(), 0.0);
      double area = 0.0;
      for (int iy = static_cast<int>(std::floor(y0)); iy < static_cast<int>(std::ceil(y1)); ++iy) {
        const double hy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
        if (hy <= 0 || iy < 0 || iy >= src.height) continue;
        for (int ix = static_cast<int>(std::floor(x0)); ix < static_cast<int>(std::ceil(x1)); ++ix) {
          const double hx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
          if (hx <= 0 || ix < 0 || ix >= src.width) continue;
          const double w = hx * hy;
          area += w;
          for (int c = 0; c < src.channels; ++c) acc[c] += w * src.at(ix, iy, c);
        }
      }
      for (int c = 0; c < src.channels; ++c) {
        const double v = area > 0 ? acc[c] / area : 0.0;
        dst.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return dst;
}

void write_pnm(const std::string& path, const ImagePatch& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::Io, "cannot open for write: " + path);
  f << (p.channels == 3 ? "P6" : "P5") << "\n" << p.width << " " << p.height << "\n255\n";
  // flip rows so +y (image up) renders upright in viewers
  for (int y = p.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(&p.pixels[p.index(0, y)]),
            static_cast<std::streamsize>(p.width) * p.channels);
  if (!f) fail(Err::Io, "write failed: " + path);
}

ImagePatch read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Err::MissingArtifact, "cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6" && magic != "P5") fail(Err::CorruptFile, "not a binary PNM: " + path);
  int w = 0, h = 0, maxv = 0;
  f >> w >> h >> maxv;
  if (!f || w <= 0 || h <= 0 || maxv != 255) fail(Err::CorruptFile, "bad PNM header: " + path);
  f.get();  // single whitespace after maxval
  ImagePatch p = ImagePatch::create(w, h, magic == "P6" ? 3 : 1);
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(&p.pixels[p.index(0, y)]), static_cast<std::streamsize>(w) * p.channels);
    if (!f) fail(Err::CorruptFile, "truncated PNM: " + path);
  }
  return p;
}

bool bilinear_luma(const std::vector<double>& luma, const std::vector<std::uint8_t>* valid,
                   int w, int h, double x, double y, double* out) {
  const double fx = x - 0.5, fy = y - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const int x1 = x0 + 1, y1 = y0 + 1;
  if (x0 < 0 || y0 < 0 || x1 >= w || y1 >= h) return false;
  if (valid) {
    const auto& v = *valid;
    const std::size_t r0 = static_cast<std::size_t>(y0) * w, r1 = static_cast<std::size_t>(y1) * w;
    if (!v[r0 + x0] || !v[r0 + x1] || !v[r1 + x0] || !v[r1 + x1]) return false;
  }
  const double ax = fx - x0, ay = fy - y0;
  const std::size_t r0 = static_cast<std::size_t>(y0) * w, r1 = static_cast<std::size_t>(y1) * w;
  *out = (1 - ay) * ((1 - ax) * luma[r0 + x0] + ax * luma[r0 + x1]) +
         ay * ((1 - ax) * luma[r1 + x0] + ax * luma[r1 + x1]);
  return true;
}

MaskedPatch warp_perspective(const ImagePatch& src, const Mat3& h_dst_to_src, int out_w, int out_h) {
  MaskedPatch out;
  out.image = ImagePatch::create(out_w, out_h, src.channels);
  out.valid.assign(static_cast<std::size_t>(out_w) * out_h, 0);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Vec3 q = h_dst_to_src * Vec3(x + 0.5, y + 0.5, 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const double sx = q.x() / q.z() - 0.5, sy = q.y() / q.z() - 0.5;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      if (x0 < 0 || y0 < 0 || x0 + 1 >= src.width || y0 + 1 >= src.height) continue;
      const double ax = sx - x0, ay = sy - y0;
      for (int c = 0; c < src.channels; ++c) {
        const double v = (1 - ay) * ((1 - ax) * src.at(x0, y0, c) + ax * src.at(x0 + 1, y0, c)) +
                         ay * ((1 - ax) * src.at(x0, y0 + 1, c) + ax * src.at(x0 + 1, y0 + 1, c));
        out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
      out.valid[static_cast<std::size_t>(y) * out_w + x] = 1;
    }
  }
  return out;
}

}  // namespace oc3d
