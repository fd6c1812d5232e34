#pragma once

// 8-bit grayscale PNG output plus a small canvas for montages and heatmaps.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "auedit/core/error.hpp"
#include "auedit/core/types.hpp"

namespace auedit {

struct GrayCanvas {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;

  GrayCanvas(std::size_t r, std::size_t c, std::uint8_t fill = 0) : rows(r), cols(c), pixels(r * c, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }

  // Copies a [lo, hi]-ranged image scaled by an integer zoom factor.
  void blit(const ImageTensor& im, std::size_t top, std::size_t left, double lo = 0.0, double hi = 1.0,
            std::size_t zoom = 1) {
    for (std::size_t r = 0; r < im.rows * zoom; ++r)
      for (std::size_t c = 0; c < im.cols * zoom; ++c) {
        if (top + r >= rows || left + c >= cols) continue;
        const double v = (im.at(r / zoom, c / zoom) - lo) / (hi - lo);
        at(top + r, left + c) = to_byte(v);
      }
  }

  static std::uint8_t to_byte(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
};

inline void write_png(const std::filesystem::path& path, const GrayCanvas& canvas) {
  require(canvas.rows > 0 && canvas.cols > 0, ErrorKind::dimension, "cannot write empty PNG");
  auto tmp = path;
  tmp += ".tmp";
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) fail(ErrorKind::io, "cannot open for writing: " + tmp.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorKind::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    std::filesystem::remove(tmp);
    fail(ErrorKind::io, "libpng write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.cols), static_cast<png_uint_32>(canvas.rows), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < canvas.rows; ++r)
    png_write_row(png, const_cast<png_bytep>(canvas.pixels.data() + r * canvas.cols));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) fail(ErrorKind::io, "close failed: " + tmp.string());
  std::filesystem::rename(tmp, path);
}

inline void write_png(const std::filesystem::path& path, const ImageTensor& im, std::size_t zoom = 1) {
  GrayCanvas canvas(im.rows * zoom, im.cols * zoom);
  canvas.blit(im, 0, 0, 0.0, 1.0, zoom);
  write_png(path, canvas);
}

// Lays images out left to right with a white gutter.
inline GrayCanvas montage_row(const std::vector<ImageTensor>& images, std::size_t gutter = 4, std::size_t zoom = 1) {
  require(!images.empty(), ErrorKind::invalid_argument, "montage needs at least one image");
  std::size_t rows = 0, cols = gutter;
  for (const auto& im : images) {
    rows = std::max(rows, im.rows * zoom);
    cols += im.cols * zoom + gutter;
  }
  GrayCanvas canvas(rows + 2 * gutter, cols, 255);
  std::size_t left = gutter;
  for (const auto& im : images) {
    canvas.blit(im, gutter, left, 0.0, 1.0, zoom);
    left += im.cols * zoom + gutter;
  }
  return canvas;
}

}  // namespace auedit
