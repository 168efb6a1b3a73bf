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

#include "meta/checkpoint.hpp"

#include <fstream>

#include "common/base64.hpp"
#include "common/error.hpp"

namespace metastress::meta {

nlohmann::json param_vector_to_json(const learner::ParamVector& pv) {
  nlohmann::json j;
  nlohmann::json layout = nlohmann::json::array();
  for (const learner::ParamEntry& e : pv.layout->entries()) {
    layout.push_back({{"name", e.name}, {"shape", e.shape}});
  }
  j["layout"] = std::move(layout);
  j["data"] = doubles_to_base64(pv.data);
  return j;
}

learner::ParamVector param_vector_from_json(const nlohmann::json& j) {
  std::vector<std::pair<std::string, diff::Shape>> entries;
  for (const nlohmann::json& e : j.at("layout")) {
    entries.push_back({e.at("name").get<std::string>(),
                       e.at("shape").get<diff::Shape>()});
  }
  learner::LayoutPtr layout = learner::ParamLayout::build(std::move(entries));
  return learner::ParamVector(layout,
                              base64_to_doubles(j.at("data").get<std::string>()));
}

void write_checkpoint(const std::string& path, const nlohmann::json& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint: " + path);
  out << state.dump(2) << "\n";
  if (!out) fail(ErrorKind::Io, "checkpoint write failed: " + path);
}

nlohmann::json read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::Io, "malformed checkpoint " + path + ": " + e.what());
  }
  return j;
}

}  // namespace metastress::meta
