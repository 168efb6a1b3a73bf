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

#include <string>

#include <json.hpp>

#include "learner/params.hpp"

namespace metastress::meta {

// Parameter blobs are base64 of raw little-endian doubles, so the round trip
// is bitwise.
nlohmann::json param_vector_to_json(const learner::ParamVector& pv);
learner::ParamVector param_vector_from_json(const nlohmann::json& j);

void write_checkpoint(const std::string& path, const nlohmann::json& state);
nlohmann::json read_checkpoint(const std::string& path);

}  // namespace metastress::meta
