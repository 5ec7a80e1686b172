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

#include "stability_lab/linear_query.h"

#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace stability_lab {

absl::StatusOr<LinearQuery> LinearQuery::Create(std::vector<double> per_element,
                                                double delta_bound) {
  if (!(delta_bound > 0.0) || !std::isfinite(delta_bound)) {
    return absl::InvalidArgumentError(
        absl::StrCat("query bound must be positive, got ", delta_bound));
  }
  if (per_element.empty()) {
    return absl::InvalidArgumentError("query must cover a non-empty domain");
  }
  for (std::size_t x = 0; x < per_element.size(); ++x) {
    if (!(std::abs(per_element[x]) <= delta_bound)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "query value ", per_element[x], " at element ", x,
          " exceeds the bound ", delta_bound));
    }
  }
  return LinearQuery(std::move(per_element), delta_bound);
}

LinearQuery LinearQuery::Indicator(std::size_t domain_size, std::size_t x,
                                   double delta_bound) {
  std::vector<double> values(domain_size, 0.0);
  values[x] = delta_bound;
  return LinearQuery(std::move(values), delta_bound);
}

double LinearQuery::Empirical(std::span<const std::size_t> tuple) const {
  double sum = 0.0;
  for (std::size_t x : tuple) sum += values_[x];
  return sum / static_cast<double>(tuple.size());
}

absl::StatusOr<double> LinearQuery::Population(
    const FiniteDist& element_marginal) const {
  if (element_marginal.size() != values_.size()) {
    return absl::InvalidArgumentError(
        "domain mismatch: query and distribution cover different domains");
  }
  double sum = 0.0;
  for (std::size_t x = 0; x < values_.size(); ++x) {
    sum += element_marginal[x] * values_[x];
  }
  return sum;
}

LinearQuery LinearQuery::Negated() const {
  std::vector<double> negated(values_.size());
  for (std::size_t x = 0; x < values_.size(); ++x) negated[x] = -values_[x];
  return LinearQuery(std::move(negated), delta_bound_);
}

}  // namespace stability_lab
