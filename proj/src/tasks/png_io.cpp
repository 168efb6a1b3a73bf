/*
 * Copyright 2026 The metastress authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tasks/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "common/error.hpp"

namespace metastress::tasks {

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

GrayImage read_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorKind::Io, "cannot open image file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::Io, "libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorKind::Io, "libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "unreadable PNG file: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGBA ||
      color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  GrayImage img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.pixels.resize(img.width * img.height);

  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + y * img.width;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_gray(const std::string& path, const GrayImage& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorKind::Io, "cannot write image file: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorKind::Io, "libpng init failed for " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorKind::Io, "libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "PNG write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

GrayImage resample_bilinear(const GrayImage& src, std::size_t width,
                            std::size_t height) {
  if (src.width == width && src.height == height) return src;
  GrayImage dst;
  dst.width = width;
  dst.height = height;
  dst.pixels.resize(width * height);
  double sx = static_cast<double>(src.width) / static_cast<double>(width);
  double sy = static_cast<double>(src.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    double y0 = std::floor(fy);
    double wy = fy - y0;
    std::size_t yl = static_cast<std::size_t>(std::max(0.0, y0));
    std::size_t yh = std::min(src.height - 1,
                              static_cast<std::size_t>(std::max(0.0, y0 + 1)));
    for (std::size_t x = 0; x < width; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      double x0 = std::floor(fx);
      double wx = fx - x0;
      std::size_t xl = static_cast<std::size_t>(std::max(0.0, x0));
      std::size_t xh = std::min(
          src.width - 1, static_cast<std::size_t>(std::max(0.0, x0 + 1)));
      double tl = src.pixels[yl * src.width + xl];
      double tr = src.pixels[yl * src.width + xh];
      double bl = src.pixels[yh * src.width + xl];
      double br = src.pixels[yh * src.width + xh];
      double v = (1 - wy) * ((1 - wx) * tl + wx * tr) +
                 wy * ((1 - wx) * bl + wx * br);
      dst.pixels[y * width + x] =
          static_cast<std::uint8_t>(std::lround(std::min(255.0, std::max(0.0, v))));
    }
  }
  return dst;
}

}  // namespace metastress::tasks
