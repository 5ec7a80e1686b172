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

// Stability loss of responses and certification of local statistical
// stability: for every response subset R', D(R') (loss(R') - eps) <= delta.

#ifndef STABILITY_LAB_STABILITY_H_
#define STABILITY_LAB_STABILITY_H_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "stability_lab/probability.h"
#include "stability_lab/world.h"

namespace stability_lab {

struct LossProfile {
  // Statistical distance between the element posterior given r and the
  // element marginal; absent for zero-mass responses.
  std::vector<std::optional<double>> per_response;
  // Elements whose posterior strictly exceeds their prior.
  std::vector<std::vector<std::size_t>> positive_sets;
};

absl::StatusOr<LossProfile> ComputeLossProfile(
    const InducedDistributions& induced);

// Probability-weighted mean loss over a response subset of positive mass.
absl::StatusOr<double> SetLoss(const LossProfile& profile,
                               const FiniteDist& marginal_r,
                               std::span<const std::size_t> subset);

struct LssCertificate {
  double eps = 0.0;
  // Minimal delta for which the mechanism is (eps, delta)-stable.
  double delta_star = 0.0;
  // Positive-mass responses with loss strictly above eps.
  std::vector<std::size_t> witness;
  double witness_mass = 0.0;
  double witness_loss = 0.0;
};

// eps must be a non-negative number; for eps >= 1 the result is zero.
absl::StatusOr<LssCertificate> CertifyLss(const LossProfile& profile,
                                          const FiniteDist& marginal_r,
                                          double eps);
absl::StatusOr<LssCertificate> CertifyLss(const InducedDistributions& induced,
                                          double eps);

struct UnstableMassCheck {
  double eps = 0.0;
  double delta = 0.0;
  // D({r : loss(r) > 2 eps}).
  double measured_mass = 0.0;
  double bound = 0.0;
  bool premise_holds = false;
  bool pass = false;
};

// Requires delta <= eps. When the mechanism is (eps, delta)-stable the mass
// of responses with loss above 2 eps is below delta / eps.
absl::StatusOr<UnstableMassCheck> CheckUnstableMass(
    const InducedDistributions& induced, double eps, double delta);

}  // namespace stability_lab

#endif  // STABILITY_LAB_STABILITY_H_
