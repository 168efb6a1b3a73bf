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
#include <vector>

#include <json.hpp>

namespace metastress::meta {

enum class MetaOptKind { Adam, Sgd };

MetaOptKind meta_opt_from_string(const std::string& s);
const char* meta_opt_name(MetaOptKind k);

// Descent rule for the outer loop's own update of theta*, alpha or phi.
class MetaOptimizer {
public:
  MetaOptimizer() = default;
  MetaOptimizer(MetaOptKind kind, double lr, std::size_t dim);

  void step(std::vector<double>& params, const std::vector<double>& grad);

  MetaOptKind kind() const { return kind_; }
  double lr() const { return lr_; }

  nlohmann::json to_json() const;
  static MetaOptimizer from_json(const nlohmann::json& j);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

private:
  MetaOptKind kind_ = MetaOptKind::Sgd;
  double lr_ = 0.0;
  long t_ = 0;
  std::vector<double> m_, v_;  // Adam moments
};

// Plain Adam over a free-standing vector; also used as the ablation's
// task-adaptation optimizer.
class AdamRule {
public:
  AdamRule(double lr, std::size_t dim)
      : lr_(lr), m_(dim, 0.0), v_(dim, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grad);

private:
  double lr_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace metastress::meta
