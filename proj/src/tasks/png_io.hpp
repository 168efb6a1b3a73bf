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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metastress::tasks {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

// Any PNG is converted to 8-bit grayscale on read.
GrayImage read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const GrayImage& img);

// Bilinear resample with edge clamping. Identity when sizes match.
GrayImage resample_bilinear(const GrayImage& src, std::size_t width,
                            std::size_t height);

}  // namespace metastress::tasks
