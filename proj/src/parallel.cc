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

#include "stability_lab/parallel.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace stability_lab {

std::size_t ConfiguredThreadCount() {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STABILITY_LAB_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) threads = std::min<std::size_t>(threads, cap);
    } catch (const std::exception&) {
      // Unparseable values leave the default in place.
    }
  }
  return threads;
}

void ParallelForChunks(
    std::size_t count, std::size_t chunk_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = ChunkCount(count, chunk_size);
  const std::size_t threads = std::min(ConfiguredThreadCount(), chunks);
  auto run_chunk = [&](std::size_t c) {
    fn(c, c * chunk_size, std::min(count, (c + 1) * chunk_size));
  };
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) {
        try {
          run_chunk(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace stability_lab
