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

#include <stdexcept>
#include <string>

namespace metastress {

enum class ErrorKind {
  Shape,      // incompatible tensor shapes
  Domain,     // math domain violation (log of non-positive, ...)
  NonFinite,  // NaN/Inf produced by an op
  Value,      // bad argument value (labels out of range, ...)
  Config,     // invalid run configuration
  Io,         // file system / decode failures
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace metastress
