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

#include "stability_lab/stability.h"

#include <algorithm>
#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace stability_lab {

absl::StatusOr<LossProfile> ComputeLossProfile(
    const InducedDistributions& induced) {
  const FiniteDist& prior = induced.element_marginal;
  LossProfile profile;
  const std::size_t width = induced.marginal_r.size();
  profile.per_response.resize(width);
  profile.positive_sets.resize(width);
  for (std::size_t r = 0; r < width; ++r) {
    const auto& posterior = induced.posterior_elems[r];
    if (!posterior.has_value() || !(induced.marginal_r[r] > 0.0)) continue;
    double loss = 0.0;
    for (std::size_t x = 0; x < prior.size(); ++x) {
      if ((*posterior)[x] > prior[x]) {
        loss += (*posterior)[x] - prior[x];
        profile.positive_sets[r].push_back(x);
      }
    }
    profile.per_response[r] = std::clamp(loss, 0.0, 1.0);
  }
  return profile;
}

absl::StatusOr<double> SetLoss(const LossProfile& profile,
                               const FiniteDist& marginal_r,
                               std::span<const std::size_t> subset) {
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t r : subset) {
    if (r >= marginal_r.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("response index ", r, " is out of range"));
    }
    if (!(marginal_r[r] > 0.0)) continue;
    mass += marginal_r[r];
    weighted += marginal_r[r] * *profile.per_response[r];
  }
  if (!(mass > 0.0)) {
    return absl::InvalidArgumentError(
        "average loss is undefined on a zero-mass response subset");
  }
  return weighted / mass;
}

absl::StatusOr<LssCertificate> CertifyLss(const LossProfile& profile,
                                          const FiniteDist& marginal_r,
                                          double eps) {
  if (!(eps >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be non-negative, got ", eps));
  }
  if (profile.per_response.size() != marginal_r.size()) {
    return absl::InvalidArgumentError(
        "loss profile does not match the response distribution");
  }
  LssCertificate certificate;
  certificate.eps = eps;
  double weighted = 0.0;
  for (std::size_t r = 0; r < marginal_r.size(); ++r) {
    if (!(marginal_r[r] > 0.0) || !profile.per_response[r].has_value()) {
      continue;
    }
    const double loss = *profile.per_response[r];
    if (loss <= eps) continue;
    certificate.witness.push_back(r);
    certificate.witness_mass += marginal_r[r];
    weighted += marginal_r[r] * loss;
    certificate.delta_star += marginal_r[r] * (loss - eps);
  }
  if (certificate.witness_mass > 0.0) {
    certificate.witness_loss = weighted / certificate.witness_mass;
  }
  certificate.delta_star = std::clamp(certificate.delta_star, 0.0, 1.0);
  return certificate;
}

absl::StatusOr<LssCertificate> CertifyLss(const InducedDistributions& induced,
                                          double eps) {
  auto profile = ComputeLossProfile(induced);
  if (!profile.ok()) return profile.status();
  return CertifyLss(*profile, induced.marginal_r, eps);
}

absl::StatusOr<UnstableMassCheck> CheckUnstableMass(
    const InducedDistributions& induced, double eps, double delta) {
  if (!(eps > 0.0) || !(delta >= 0.0) || delta > eps) {
    return absl::InvalidArgumentError(absl::StrCat(
        "unstable-mass bound needs 0 <= delta <= eps and eps > 0, got eps=",
        eps, " delta=", delta));
  }
  auto profile = ComputeLossProfile(induced);
  if (!profile.ok()) return profile.status();
  auto at_eps = CertifyLss(*profile, induced.marginal_r, eps);
  if (!at_eps.ok()) return at_eps.status();
  auto at_double = CertifyLss(*profile, induced.marginal_r, 2.0 * eps);
  if (!at_double.ok()) return at_double.status();
  UnstableMassCheck check;
  check.eps = eps;
  check.delta = delta;
  check.measured_mass = at_double->witness_mass;
  check.bound = delta / eps;
  check.premise_holds = at_eps->delta_star <= delta + 1e-12;
  check.pass = !check.premise_holds || check.measured_mass < check.bound + 1e-9;
  return check;
}

}  // namespace stability_lab
