// Copyright 2026 The Condenser Forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFORGE_PARALLEL_H_
#define CFORGE_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace cforge {

// Worker cap from CONDENSER_FORGE_THREADS; 0 or unset means serial.
int ConfiguredThreads();

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// executed exactly once; callers write results into per-index slots so the
// outcome is independent of scheduling. The first exception is rethrown.
void ParallelFor(std::size_t count, int threads,
                 const std::function<void(std::size_t)>& fn);

}  // namespace cforge

#endif  // CFORGE_PARALLEL_H_
