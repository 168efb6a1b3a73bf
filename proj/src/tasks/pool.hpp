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
#include <optional>
#include <string>
#include <vector>

#include "diff/tensor.hpp"

namespace metastress::tasks {

// A pool is either synthetic Gaussian clusters or a directory of image
// classes. Immutable after construction.
struct ClassPool {
  enum class Source { Synthetic, ImageDir };

  Source source = Source::Synthetic;
  std::size_t dim = 0;  // feature dimension (784 for 28x28 images)
  double sigma = 0.0;   // synthetic cluster scale

  std::vector<std::vector<double>> means;               // synthetic
  std::vector<std::vector<std::string>> image_files;    // image_dir
  std::vector<std::string> class_names;

  std::size_t num_classes() const {
    return source == Source::Synthetic ? means.size() : image_files.size();
  }
};

ClassPool make_synthetic_pool(std::size_t num_classes, std::size_t dim,
                              double sigma, double mean_lo, double mean_hi,
                              std::uint64_t seed);

// Expects root/<class_name>/<image>.png; images are downsampled to 28x28,
// scaled to [0,1] and flattened to dim 784.
ClassPool load_image_pool(const std::string& root_dir);

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

struct MetaSplit {
  std::vector<std::size_t> train, val, test;
};

enum class SplitPart { Train, Val, Test };
const char* split_part_name(SplitPart p);

// Deterministic in the seed. Without explicit counts an Omniglot-sized pool
// (1623 classes) gets the standard 980/220/423 split, anything else is
// split 60/20/20.
MetaSplit split_classes(const ClassPool& pool,
                        const std::optional<SplitCounts>& counts,
                        std::uint64_t seed);

// One N-way K-shot task with disjoint support and query sets and labels
// remapped to 0..N-1.
struct Episode {
  std::size_t n_way = 0, k_shot = 0, q_query = 0;
  std::uint64_t index = 0;  // caller-assigned task index; fixes reduction order
  diff::Tensor support_x;   // [N*K, dim]
  std::vector<int> support_y;
  diff::Tensor query_x;     // [N*Q, dim]
  std::vector<int> query_y;
  std::vector<std::size_t> class_ids;  // episode label -> pool class index
};

Episode sample_episode(const ClassPool& pool, const MetaSplit& split,
                       SplitPart part, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_query, std::uint64_t seed,
                       std::uint64_t index = 0);

// Debug dump: one JSON object with base64-encoded tensors.
std::string episode_to_json(const Episode& ep);

}  // namespace metastress::tasks
