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

// Linear queries: the empirical mean of a bounded per-element function.

#ifndef STABILITY_LAB_LINEAR_QUERY_H_
#define STABILITY_LAB_LINEAR_QUERY_H_

#include <cstddef>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "stability_lab/probability.h"

namespace stability_lab {

class LinearQuery {
 public:
  // Every value must lie in [-delta_bound, delta_bound], delta_bound > 0.
  static absl::StatusOr<LinearQuery> Create(std::vector<double> per_element,
                                            double delta_bound);
  // delta_bound at x, zero elsewhere.
  static LinearQuery Indicator(std::size_t domain_size, std::size_t x,
                               double delta_bound);

  double delta_bound() const { return delta_bound_; }
  std::size_t domain_size() const { return values_.size(); }
  double operator()(std::size_t x) const { return values_[x]; }
  std::span<const double> values() const { return values_; }

  // Mean of the per-element values over the tuple.
  double Empirical(std::span<const std::size_t> tuple) const;
  // Expectation under an element distribution; equals E_S[Empirical(S)]
  // when the distribution is the element marginal of S.
  absl::StatusOr<double> Population(const FiniteDist& element_marginal) const;
  LinearQuery Negated() const;

 private:
  LinearQuery(std::vector<double> values, double delta_bound)
      : values_(std::move(values)), delta_bound_(delta_bound) {}

  std::vector<double> values_;
  double delta_bound_ = 1.0;
};

}  // namespace stability_lab

#endif  // STABILITY_LAB_LINEAR_QUERY_H_
