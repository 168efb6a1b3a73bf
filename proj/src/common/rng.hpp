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
#include <random>
#include <string>
#include <vector>

namespace metastress {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for (base run seed, stream tag, element index). Pure function, so
// concurrent samplers never share mutable RNG state.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index);

// Named stream tags for derive_seed.
namespace rng_stream {
inline constexpr std::uint64_t kTrainTask = 0x7261696e01;
inline constexpr std::uint64_t kValTask = 0x76616c0002;
inline constexpr std::uint64_t kTestTask = 0x7465737403;
inline constexpr std::uint64_t kInit = 0x696e697404;
inline constexpr std::uint64_t kGrid = 0x6772696405;
}  // namespace rng_stream

// mt19937_64 wrapper with hand-rolled distributions. std:: distributions are
// implementation-defined, this keeps byte-level reproducibility in our hands.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi);

  // standard normal, Box-Muller (cosine branch only, keeps state trivial)
  double normal();

  // inclusive bounds
  int uniform_int(int lo, int hi);

  // k distinct indices out of {0..n-1}, partial Fisher-Yates
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save_state() const;
  void load_state(const std::string& s);

private:
  std::mt19937_64 eng_;
};

}  // namespace metastress
