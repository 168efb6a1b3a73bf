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

#include "common/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "common/error.hpp"

namespace metastress {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index) {
  return mix64(mix64(base ^ mix64(stream)) ^ index);
}

double Rng::log_uniform(double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) {
    fail(ErrorKind::Value, "log_uniform requires 0 < lo < hi");
  }
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) fail(ErrorKind::Value, "uniform_int: hi < lo");
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(eng_() % span);
}

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
  if (k > n) fail(ErrorKind::Value, "sample_indices: k > n");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(
                            uniform_int(0, static_cast<int>(n - i) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
  if (!is) fail(ErrorKind::Value, "Rng::load_state: malformed state string");
}

}  // namespace metastress
