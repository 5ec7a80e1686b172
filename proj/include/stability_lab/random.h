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

// Seeded random streams. Sampling is implemented here rather than through
// <random> distributions so that draws are identical across standard
// library implementations.

#ifndef STABILITY_LAB_RANDOM_H_
#define STABILITY_LAB_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace stability_lab {

// SplitMix64 finaliser applied to (seed, stream); used to give every
// replicate and copy an independent generator.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  // Uniform on {0, ..., n-1}; n must be positive.
  std::size_t UniformIndex(std::size_t n);
  // Index drawn from non-negative weights summing to ~1 by inverse CDF.
  std::size_t Categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace stability_lab

#endif  // STABILITY_LAB_RANDOM_H_
