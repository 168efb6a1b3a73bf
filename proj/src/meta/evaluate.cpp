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

#include "meta/evaluate.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace metastress::meta {

double ci_halfwidth(const std::vector<double>& xs, double z) {
  std::size_t n = xs.size();
  if (n < 2) return 0.0;
  bool all_equal = true;
  for (double x : xs) all_equal &= x == xs[0];
  if (all_equal) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  double stddev = std::sqrt(ss / static_cast<double>(n - 1));
  return z * stddev / std::sqrt(static_cast<double>(n));
}

EvalResult summarize_accuracies(std::vector<double> per_task) {
  EvalResult r;
  r.per_task = std::move(per_task);
  if (r.per_task.empty()) return r;
  for (double a : r.per_task) r.mean += a;
  r.mean /= static_cast<double>(r.per_task.size());
  r.ci95 = ci_halfwidth(r.per_task, kZ95);
  r.ci999 = ci_halfwidth(r.per_task, kZ999);
  return r;
}

EvalResult evaluate_adapter(const AdaptFn& adapt, const EvalSetup& setup) {
  if (!setup.pool || !setup.split) {
    fail(ErrorKind::Value, "evaluate: missing pool or split");
  }
  std::vector<double> accs(setup.num_tasks, 0.0);
  parallel_for(setup.num_tasks, setup.workers, [&](std::size_t i) {
    tasks::Episode ep = tasks::sample_episode(
        *setup.pool, *setup.split, setup.part, setup.n_way, setup.k_shot,
        setup.q_query, derive_seed(setup.seed, rng_stream::kTestTask, i), i);
    TaskLoss task = episode_task(setup.spec, ep);
    learner::ParamVector theta = adapt(task);
    accs[i] = task.query_accuracy(theta);
  });
  return summarize_accuracies(std::move(accs));
}

EvalResult evaluate_strategy(const Strategy& strategy, const EvalSetup& setup,
                             int adapt_steps) {
  return evaluate_adapter(
      [&](const TaskLoss& task) { return strategy.adapt(task, adapt_steps); },
      setup);
}

}  // namespace metastress::meta
