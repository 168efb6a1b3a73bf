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

#include "tasks/pool.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "common/base64.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"
#include "tasks/png_io.hpp"

namespace fs = std::filesystem;

namespace metastress::tasks {

const char* split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::Train: return "train";
    case SplitPart::Val: return "val";
    case SplitPart::Test: return "test";
  }
  return "?";
}

ClassPool make_synthetic_pool(std::size_t num_classes, std::size_t dim,
                              double sigma, double mean_lo, double mean_hi,
                              std::uint64_t seed) {
  if (num_classes < 2) fail(ErrorKind::Config, "synthetic pool needs >= 2 classes");
  if (dim < 2) fail(ErrorKind::Config, "synthetic pool needs dim >= 2");
  if (!(sigma > 0.0)) fail(ErrorKind::Config, "synthetic pool needs sigma > 0");

  ClassPool pool;
  pool.source = ClassPool::Source::Synthetic;
  pool.dim = dim;
  pool.sigma = sigma;
  pool.means.resize(num_classes);
  pool.class_names.resize(num_classes);
  Rng rng(mix64(seed));
  for (std::size_t c = 0; c < num_classes; ++c) {
    pool.means[c].resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      pool.means[c][j] = rng.uniform(mean_lo, mean_hi);
    }
    pool.class_names[c] = "synthetic_" + std::to_string(c);
  }
  return pool;
}

ClassPool load_image_pool(const std::string& root_dir) {
  if (!fs::is_directory(root_dir)) {
    fail(ErrorKind::Io, "image pool root is not a directory: " + root_dir);
  }
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root_dir)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    fail(ErrorKind::Io, "image pool has no class directories: " + root_dir);
  }

  ClassPool pool;
  pool.source = ClassPool::Source::ImageDir;
  pool.dim = 28 * 28;
  for (const std::string& dir : class_dirs) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      fail(ErrorKind::Io, "image class directory is empty: " + dir);
    }
    pool.image_files.push_back(std::move(files));
    pool.class_names.push_back(fs::path(dir).filename().string());
  }
  return pool;
}

MetaSplit split_classes(const ClassPool& pool,
                        const std::optional<SplitCounts>& counts,
                        std::uint64_t seed) {
  std::size_t n = pool.num_classes();
  SplitCounts c;
  if (counts) {
    c = *counts;
  } else if (n == 1623) {
    c = {980, 220, 423};  // standard Omniglot meta-split
  } else {
    c.train = (n * 3) / 5;
    c.val = n / 5;
    c.test = n - c.train - c.val;
  }
  if (c.train + c.val + c.test > n) {
    fail(ErrorKind::Config,
         "split needs " + std::to_string(c.train + c.val + c.test) +
             " classes but the pool has " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix64(seed ^ 0x53504c4954ULL));
  rng.shuffle(idx);

  MetaSplit split;
  split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(c.train));
  split.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(c.train),
                   idx.begin() + static_cast<std::ptrdiff_t>(c.train + c.val));
  split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(c.train + c.val),
                    idx.begin() + static_cast<std::ptrdiff_t>(c.train + c.val + c.test));
  return split;
}

namespace {

const std::vector<std::size_t>& part_of(const MetaSplit& split, SplitPart part) {
  switch (part) {
    case SplitPart::Train: return split.train;
    case SplitPart::Val: return split.val;
    case SplitPart::Test: return split.test;
  }
  return split.train;
}

// feature rows for `count` fresh instances of one class
std::vector<std::vector<double>> class_instances(const ClassPool& pool,
                                                 std::size_t class_id,
                                                 std::size_t count, Rng& rng) {
  std::vector<std::vector<double>> rows;
  rows.reserve(count);
  if (pool.source == ClassPool::Source::Synthetic) {
    const std::vector<double>& mu = pool.means[class_id];
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<double> row(pool.dim);
      for (std::size_t j = 0; j < pool.dim; ++j) {
        row[j] = mu[j] + pool.sigma * rng.normal();
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }
  const std::vector<std::string>& files = pool.image_files[class_id];
  if (files.size() < count) {
    fail(ErrorKind::Value, "class '" + pool.class_names[class_id] + "' has " +
                               std::to_string(files.size()) +
                               " images, episode needs " +
                               std::to_string(count));
  }
  std::vector<std::size_t> picks = rng.sample_indices(files.size(), count);
  for (std::size_t idx : picks) {
    GrayImage img = resample_bilinear(read_png_gray(files[idx]), 28, 28);
    std::vector<double> row(pool.dim);
    for (std::size_t j = 0; j < pool.dim; ++j) {
      row[j] = static_cast<double>(img.pixels[j]) / 255.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Episode sample_episode(const ClassPool& pool, const MetaSplit& split,
                       SplitPart part, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_query, std::uint64_t seed,
                       std::uint64_t index) {
  const std::vector<std::size_t>& classes = part_of(split, part);
  if (classes.size() < n_way) {
    fail(ErrorKind::Value, std::string("split part '") + split_part_name(part) +
                               "' has " + std::to_string(classes.size()) +
                               " classes, episode needs " +
                               std::to_string(n_way));
  }
  Rng rng(mix64(seed));

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_query = q_query;
  ep.index = index;
  // the sampled order is already a uniform random permutation, so label c of
  // this episode maps to a random class
  std::vector<std::size_t> picks = rng.sample_indices(classes.size(), n_way);
  ep.class_ids.reserve(n_way);
  for (std::size_t p : picks) ep.class_ids.push_back(classes[p]);

  ep.support_x = diff::Tensor::zeros({n_way * k_shot, pool.dim});
  ep.query_x = diff::Tensor::zeros({n_way * q_query, pool.dim});
  ep.support_y.resize(n_way * k_shot);
  ep.query_y.resize(n_way * q_query);

  for (std::size_t c = 0; c < n_way; ++c) {
    // one draw of K+Q distinct instances; first K to support, rest to query
    std::vector<std::vector<double>> rows =
        class_instances(pool, ep.class_ids[c], k_shot + q_query, rng);
    for (std::size_t k = 0; k < k_shot; ++k) {
      std::size_t r = c * k_shot + k;
      std::copy(rows[k].begin(), rows[k].end(),
                ep.support_x.data.begin() + static_cast<std::ptrdiff_t>(r * pool.dim));
      ep.support_y[r] = static_cast<int>(c);
    }
    for (std::size_t q = 0; q < q_query; ++q) {
      std::size_t r = c * q_query + q;
      std::copy(rows[k_shot + q].begin(), rows[k_shot + q].end(),
                ep.query_x.data.begin() + static_cast<std::ptrdiff_t>(r * pool.dim));
      ep.query_y[r] = static_cast<int>(c);
    }
  }
  return ep;
}

std::string episode_to_json(const Episode& ep) {
  nlohmann::json j;
  j["n_way"] = ep.n_way;
  j["k_shot"] = ep.k_shot;
  j["q_query"] = ep.q_query;
  j["index"] = ep.index;
  j["class_ids"] = ep.class_ids;
  j["support"]["shape"] = ep.support_x.shape;
  j["support"]["x"] = doubles_to_base64(ep.support_x.data);
  j["support"]["y"] = ep.support_y;
  j["query"]["shape"] = ep.query_x.shape;
  j["query"]["x"] = doubles_to_base64(ep.query_x.data);
  j["query"]["y"] = ep.query_y;
  return j.dump();
}

}  // namespace metastress::tasks
