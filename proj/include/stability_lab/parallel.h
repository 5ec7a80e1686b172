// Copyright 2026 The Stability Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Chunked parallel loops whose results do not depend on the thread count:
// work is split into fixed-size chunks, each chunk writes its own partial
// result, and callers reduce the partials in chunk order.

#ifndef STABILITY_LAB_PARALLEL_H_
#define STABILITY_LAB_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace stability_lab {

inline constexpr std::size_t kDefaultChunkSize = 4096;

// Hardware concurrency, capped by STABILITY_LAB_THREADS when set.
std::size_t ConfiguredThreadCount();

inline std::size_t ChunkCount(std::size_t count, std::size_t chunk_size) {
  return (count + chunk_size - 1) / chunk_size;
}

// Calls fn(chunk_index, begin, end) once per chunk of [0, count).
void ParallelForChunks(
    std::size_t count, std::size_t chunk_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace stability_lab

#endif  // STABILITY_LAB_PARALLEL_H_
