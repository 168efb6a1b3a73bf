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

#include "meta/strategies.hpp"

namespace metastress::meta {

inline constexpr double kZ95 = 1.96;
inline constexpr double kZ999 = 3.2905;

// z * sample-stddev / sqrt(n); zero when n < 2
double ci_halfwidth(const std::vector<double>& xs, double z);

struct EvalResult {
  double mean = 0.0;
  double ci95 = 0.0;
  double ci999 = 0.0;
  std::vector<double> per_task;
};

EvalResult summarize_accuracies(std::vector<double> per_task);

// adapt one task at the value level, return the adapted parameters
using AdaptFn = std::function<learner::ParamVector(const TaskLoss&)>;

struct EvalSetup {
  const tasks::ClassPool* pool = nullptr;
  const tasks::MetaSplit* split = nullptr;
  tasks::SplitPart part = tasks::SplitPart::Test;
  learner::MlpSpec spec;
  std::size_t num_tasks = 0;
  std::size_t n_way = 0, k_shot = 0, q_query = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Samples num_tasks episodes (seeds derived per task index), adapts each and
// scores query accuracy.
EvalResult evaluate_adapter(const AdaptFn& adapt, const EvalSetup& setup);

// strategy-default adaptation; adapt_steps < 0 means the strategy default
EvalResult evaluate_strategy(const Strategy& strategy, const EvalSetup& setup,
                             int adapt_steps = -1);

}  // namespace metastress::meta
