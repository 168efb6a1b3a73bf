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

#include "meta/optim.hpp"

#include <cmath>

#include "common/base64.hpp"
#include "common/error.hpp"

namespace metastress::meta {

MetaOptKind meta_opt_from_string(const std::string& s) {
  if (s == "adam") return MetaOptKind::Adam;
  if (s == "sgd") return MetaOptKind::Sgd;
  fail(ErrorKind::Config, "unknown meta optimizer '" + s + "'");
}

const char* meta_opt_name(MetaOptKind k) {
  return k == MetaOptKind::Adam ? "adam" : "sgd";
}

MetaOptimizer::MetaOptimizer(MetaOptKind kind, double lr, std::size_t dim)
    : kind_(kind), lr_(lr) {
  if (kind_ == MetaOptKind::Adam) {
    m_.assign(dim, 0.0);
    v_.assign(dim, 0.0);
  }
}

void MetaOptimizer::step(std::vector<double>& params,
                         const std::vector<double>& grad) {
  if (params.size() != grad.size()) {
    fail(ErrorKind::Shape, "meta optimizer: gradient size mismatch");
  }
  if (kind_ == MetaOptKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= lr_ * grad[i];
    }
    return;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    double mhat = m_[i] / bc1;
    double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
  }
}

nlohmann::json MetaOptimizer::to_json() const {
  nlohmann::json j;
  j["kind"] = meta_opt_name(kind_);
  j["lr"] = lr_;
  j["t"] = t_;
  j["m"] = doubles_to_base64(m_);
  j["v"] = doubles_to_base64(v_);
  return j;
}

MetaOptimizer MetaOptimizer::from_json(const nlohmann::json& j) {
  MetaOptimizer opt;
  opt.kind_ = meta_opt_from_string(j.at("kind").get<std::string>());
  opt.lr_ = j.at("lr").get<double>();
  opt.t_ = j.at("t").get<long>();
  opt.m_ = base64_to_doubles(j.at("m").get<std::string>());
  opt.v_ = base64_to_doubles(j.at("v").get<std::string>());
  return opt;
}

void AdamRule::step(std::vector<double>& params,
                    const std::vector<double>& grad) {
  ++t_;
  double bc1 = 1.0 - std::pow(MetaOptimizer::kBeta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(MetaOptimizer::kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = MetaOptimizer::kBeta1 * m_[i] +
            (1.0 - MetaOptimizer::kBeta1) * grad[i];
    v_[i] = MetaOptimizer::kBeta2 * v_[i] +
            (1.0 - MetaOptimizer::kBeta2) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) +
                                        MetaOptimizer::kEps);
  }
}

}  // namespace metastress::meta
