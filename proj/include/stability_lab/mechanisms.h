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

// Mechanism kernels: discretised noise addition, randomized response,
// parity and element release, compression schemes, and exact answers.

#ifndef STABILITY_LAB_MECHANISMS_H_
#define STABILITY_LAB_MECHANISMS_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "stability_lab/linear_query.h"
#include "stability_lab/probability.h"
#include "stability_lab/world.h"

namespace stability_lab {

// Response label for a real value: shortest form with 12 significant digits.
std::string FormatNumber(double value);

enum class NoiseFamily { kLaplace, kGaussian, kRandomizedResponse };

struct NoiseSpec {
  NoiseFamily family = NoiseFamily::kLaplace;
  // Laplace b, Gaussian sigma, or the flip probability.
  double scale = 0.0;
  // Grid spacing; must not exceed `scale`.
  double grid_step = 0.0;
  // The grid covers [-(delta + halfwidth), delta + halfwidth] for a query
  // bounded by delta, and halfwidth must be at least delta + 5 * scale.
  double grid_halfwidth = 0.0;
};

absl::Status ValidateNoiseSpec(const NoiseSpec& spec, double delta_bound);

// Grid points k * step covering the configured range.
absl::StatusOr<std::vector<double>> NoiseGrid(const NoiseSpec& spec,
                                              double delta_bound);

// Noise mass of each cell [g - step/2, g + step/2] around `center`,
// truncated to the grid and renormalised.
std::vector<double> DiscretizedNoiseRow(const NoiseSpec& spec,
                                        std::span<const double> grid,
                                        double center);

// Laplace or Gaussian noise added to the query's empirical value, or
// randomized response on the bits [q(x_i) > 0].
absl::StatusOr<MechanismKernel> BuildNoiseMechanism(const LinearQuery& query,
                                                    const NoiseSpec& spec,
                                                    const SampleSpace& space);

// A single response, optionally carrying a real value.
MechanismKernel BuildConstantMechanism(const SampleSpace& space,
                                       double value = 0.0);

// Releases the whole tuple.
absl::StatusOr<MechanismKernel> BuildIdentityMechanism(
    const SampleSpace& space);

// Parity of the labels of the sample elements; `labels` maps each element
// to 0 or 1.
absl::StatusOr<MechanismKernel> BuildParityMechanism(
    const SampleSpace& space, const std::vector<int>& labels);

// Parity of the elements of a binary domain.
absl::StatusOr<MechanismKernel> BuildXorMechanism(const SampleSpace& space);

// Releases one uniformly chosen sample element.
MechanismKernel BuildElementRelease(const SampleSpace& space);

// Releases the exact empirical value of the query.
absl::StatusOr<MechanismKernel> BuildEmpiricalMeanMechanism(
    const LinearQuery& query, const SampleSpace& space);

// Answers the query with its value at one uniformly chosen sample element.
absl::StatusOr<MechanismKernel> BuildElementAnswerMechanism(
    const LinearQuery& query, const SampleSpace& space);

struct CompressionSpec {
  using WeightedSelection = std::pair<std::vector<std::size_t>, double>;

  int m = 1;
  // Distribution over ordered position subsets of size m for a tuple; a
  // deterministic selector returns one subset with weight 1.
  std::function<std::vector<WeightedSelection>(std::span<const std::size_t>)>
      selector;
  OutcomeSetPtr responses;
  // Writes the response distribution for the selected elements.
  std::function<void(std::span<const std::size_t>, std::span<double>)> encoder;
};

// Selector output is validated on every tuple when the space is within the
// default enumeration budget.
absl::StatusOr<MechanismKernel> BuildCompressionMechanism(
    const CompressionSpec& spec, const SampleSpace& space);

}  // namespace stability_lab

#endif  // STABILITY_LAB_MECHANISMS_H_
