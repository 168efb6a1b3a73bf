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

#include <cstddef>
#include <functional>

namespace metastress {

// Worker cap: METASTRESS_THREADS when set, otherwise hardware concurrency.
int thread_budget();

// Runs fn(0..n-1) on up to `workers` threads. Each index is processed exactly
// once; callers write results into index-addressed slots so the outcome does
// not depend on scheduling. The first exception is rethrown after all workers
// join.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace metastress
