#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oc3d/error.hpp"
#include "oc3d/geometry.hpp"

namespace oc3d {

// Row-major, channel-interleaved 8-bit image. Row 0 corresponds to the
// smallest image-plane y coordinate; PPM/PGM dumps flip vertically so files
// show the scene upright.
struct ImagePatch {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  static ImagePatch create(int w, int h, int c) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) fail(Err::InvalidParams, "image: bad dimensions");
    ImagePatch p;
    p.width = w;
    p.height = h;
    p.channels = c;
    p.pixels.assign(static_cast<std::size_t>(w) * h * c, 0);
    return p;
  }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  bool same_shape(const ImagePatch& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Image plus per-pixel validity (used by warps whose source may fall outside
// the input).
struct MaskedPatch {
  ImagePatch image;
  std::vector<std::uint8_t> valid;  // 1 = defined

  static MaskedPatch full(const ImagePatch& p) {
    MaskedPatch m;
    m.image = p;
    m.valid.assign(static_cast<std::size_t>(p.width) * p.height, 1);
    return m;
  }
  bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * image.width + x] != 0; }
};

// ITU-R 601 luma in [0, 255] as doubles; grayscale images pass through.
std::vector<double> to_luma(const ImagePatch& p);

// Box-filter area resampling to an arbitrary size (exact coverage weights).
ImagePatch resample_area(const ImagePatch& src, int out_w, int out_h);

// Binary PPM (P6) / PGM (P5) with maxval 255, chosen by channel count.
void write_pnm(const std::string& path, const ImagePatch& p);
ImagePatch read_pnm(const std::string& path);

// Bilinear sample of the luma plane with validity; x/y are pixel-center
// coordinates (pixel (i,j) has center (i+0.5, j+0.5)).
bool bilinear_luma(const std::vector<double>& luma, const std::vector<std::uint8_t>* valid,
                   int w, int h, double x, double y, double* out);

// Warp `src` by the pixel map dst -> src given as a homography on
// pixel-center coordinates: out(p) = src(h_dst_to_src * p), bilinear,
// out-of-bounds marked invalid.
MaskedPatch warp_perspective(const ImagePatch& src, const Mat3& h_dst_to_src, int out_w, int out_h);

}  // namespace oc3d
