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

#include "stability_lab/probability.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"

namespace stability_lab {
namespace {

absl::Status CheckWeights(std::span<const double> weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      return absl::InvalidArgumentError(
          absl::StrCat("weight ", i, " is negative or not finite: ",
                       weights[i]));
    }
    total += weights[i];
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    return absl::InvalidArgumentError(
        absl::StrCat("weights sum to ", total, ", expected 1"));
  }
  return absl::OkStatus();
}

absl::Status CheckSameOutcomes(const OutcomeSetPtr& a, const OutcomeSetPtr& b) {
  if (!SameOutcomes(a, b)) {
    return absl::InvalidArgumentError(
        absl::StrCat("domain mismatch: outcome sets of size ", a->size(),
                     " and ", b->size(), " differ"));
  }
  return absl::OkStatus();
}

absl::Status CheckEps(double eps) {
  if (!(eps >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be non-negative, got ", eps));
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<OutcomeSetPtr> OutcomeSet::FromLabels(
    std::vector<std::string> labels) {
  std::shared_ptr<OutcomeSet> set(new OutcomeSet());
  set->size_ = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!set->index_.emplace(labels[i], i).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("duplicate outcome label '", labels[i], "'"));
    }
  }
  set->labels_ = std::move(labels);
  return OutcomeSetPtr(std::move(set));
}

OutcomeSetPtr OutcomeSet::Range(std::size_t size) {
  std::vector<std::string> labels;
  labels.reserve(size);
  for (std::size_t i = 0; i < size; ++i) labels.push_back(std::to_string(i));
  return *FromLabels(std::move(labels));
}

OutcomeSetPtr OutcomeSet::Indexed(
    std::size_t size, std::string tag,
    std::function<std::string(std::size_t)> labeler) {
  std::shared_ptr<OutcomeSet> set(new OutcomeSet());
  set->size_ = size;
  set->tag_ = std::move(tag);
  set->labeler_ = std::move(labeler);
  return set;
}

std::string OutcomeSet::label(std::size_t index) const {
  if (labeler_) return labeler_(index);
  return labels_[index];
}

std::optional<std::size_t> OutcomeSet::IndexOf(std::string_view label) const {
  if (!labeler_) {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  for (std::size_t i = 0; i < size_; ++i) {
    if (labeler_(i) == label) return i;
  }
  return std::nullopt;
}

bool OutcomeSet::Equals(const OutcomeSet& other) const {
  if (size_ != other.size_) return false;
  if (static_cast<bool>(labeler_) != static_cast<bool>(other.labeler_)) {
    return false;
  }
  if (labeler_) return tag_ == other.tag_;
  return labels_ == other.labels_;
}

bool SameOutcomes(const OutcomeSetPtr& a, const OutcomeSetPtr& b) {
  return a == b || (a && b && a->Equals(*b));
}

absl::StatusOr<FiniteDist> FiniteDist::Create(OutcomeSetPtr outcomes,
                                              std::vector<double> weights) {
  if (outcomes == nullptr || outcomes->size() != weights.size()) {
    return absl::InvalidArgumentError(
        "weight vector length does not match the outcome set");
  }
  if (auto status = CheckWeights(weights); !status.ok()) return status;
  return FiniteDist(std::move(outcomes), std::move(weights));
}

absl::StatusOr<FiniteDist> FiniteDist::Normalize(OutcomeSetPtr outcomes,
                                                 std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      return absl::InvalidArgumentError("weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    return absl::InvalidArgumentError("cannot normalize zero total mass");
  }
  for (double& w : weights) w /= total;
  return Create(std::move(outcomes), std::move(weights));
}

FiniteDist FiniteDist::PointMass(OutcomeSetPtr outcomes, std::size_t index) {
  std::vector<double> weights(outcomes->size(), 0.0);
  weights[index] = 1.0;
  return FiniteDist(std::move(outcomes), std::move(weights));
}

FiniteDist FiniteDist::Uniform(OutcomeSetPtr outcomes) {
  const std::size_t size = outcomes->size();
  return FiniteDist(std::move(outcomes),
                    std::vector<double>(size, 1.0 / size));
}

absl::StatusOr<FiniteDist> FiniteDist::Bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("Bernoulli parameter must lie in [0, 1], got ", p));
  }
  static const OutcomeSetPtr* const kBinary =
      new OutcomeSetPtr(OutcomeSet::Range(2));
  return FiniteDist(*kBinary, {1.0 - p, p});
}

double FiniteDist::Mass(std::span<const std::size_t> subset) const {
  double mass = 0.0;
  for (std::size_t i : subset) mass += weights_[i];
  return mass;
}

std::vector<std::size_t> FiniteDist::Support() const {
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] > 0.0) support.push_back(i);
  }
  return support;
}

absl::StatusOr<JointDist> JointDist::Create(OutcomeSetPtr left,
                                            OutcomeSetPtr right,
                                            std::vector<double> weights) {
  if (left == nullptr || right == nullptr ||
      left->size() * right->size() != weights.size()) {
    return absl::InvalidArgumentError(
        "joint weight matrix does not match left x right");
  }
  if (auto status = CheckWeights(weights); !status.ok()) return status;
  return JointDist(std::move(left), std::move(right), std::move(weights));
}

JointDist JointDist::Product(const FiniteDist& left, const FiniteDist& right) {
  std::vector<double> weights(left.size() * right.size());
  for (std::size_t l = 0; l < left.size(); ++l) {
    for (std::size_t r = 0; r < right.size(); ++r) {
      weights[l * right.size() + r] = left[l] * right[r];
    }
  }
  return JointDist(left.outcomes(), right.outcomes(), std::move(weights));
}

FiniteDist JointDist::LeftMarginal() const {
  std::vector<double> marginal(rows(), 0.0);
  for (std::size_t l = 0; l < rows(); ++l) {
    for (double w : row(l)) marginal[l] += w;
  }
  return *FiniteDist::Normalize(left_, std::move(marginal));
}

FiniteDist JointDist::RightMarginal() const {
  std::vector<double> marginal(cols(), 0.0);
  for (std::size_t l = 0; l < rows(); ++l) {
    auto r = row(l);
    for (std::size_t c = 0; c < cols(); ++c) marginal[c] += r[c];
  }
  return *FiniteDist::Normalize(right_, std::move(marginal));
}

absl::StatusOr<Channel> Channel::Create(OutcomeSetPtr inputs,
                                        OutcomeSetPtr outputs,
                                        std::vector<double> rows) {
  if (inputs == nullptr || outputs == nullptr ||
      inputs->size() * outputs->size() != rows.size()) {
    return absl::InvalidArgumentError(
        "channel matrix does not match inputs x outputs");
  }
  const std::size_t width = outputs->size();
  for (std::size_t i = 0; i < inputs->size(); ++i) {
    auto status = CheckWeights(std::span<const double>(rows).subspan(
        i * width, width));
    if (!status.ok()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "channel row '", inputs->label(i), "': ", status.message()));
    }
  }
  return Channel(std::move(inputs), std::move(outputs), std::move(rows));
}

namespace internal {

double StatisticalDistance(std::span<const double> p,
                           std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return std::min(1.0, 0.5 * sum);
}

double MinDeltaForEps(std::span<const double> p, std::span<const double> q,
                      double eps) {
  const double scale = std::exp(eps);
  double delta = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Cells with q = 0 stay unbounded even at eps = +infinity.
    const double excess = q[i] > 0.0 ? p[i] - scale * q[i] : p[i];
    if (excess > 0.0) delta += excess;
  }
  return std::min(1.0, delta);
}

// The excess function f(t) = sum_i max(0, p_i - t q_i) is convex, piecewise
// linear and non-increasing in t, with breakpoints at p_i / q_i. Walk the
// breakpoints from the largest ratio down; f(ratios[0]) is the unbounded mass,
// already known to be <= delta, so the first segment whose lower end exceeds
// delta contains the crossing.
double MinEpsForDelta(std::span<const double> p, std::span<const double> q,
                      double delta) {
  if (MinDeltaForEps(p, q, 0.0) <= delta) return 0.0;
  double p_unbounded = 0.0;
  std::vector<std::pair<double, std::size_t>> ratios;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      p_unbounded += p[i];
    } else if (p[i] > q[i]) {
      ratios.emplace_back(p[i] / q[i], i);
    }
  }
  if (p_unbounded > delta) return std::numeric_limits<double>::infinity();
  std::sort(ratios.begin(), ratios.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  // On [ratios[j+1], ratios[j]], f(t) = a - t b with sums over the top j+1.
  double a = p_unbounded;
  double b = 0.0;
  for (std::size_t j = 0; j < ratios.size(); ++j) {
    a += p[ratios[j].second];
    b += q[ratios[j].second];
    const double lower = j + 1 < ratios.size() ? ratios[j + 1].first : 1.0;
    const double f_lower = a - lower * b;
    if (f_lower <= delta) continue;
    const double t = (a - delta) / b;
    return std::max(0.0, std::log(std::clamp(t, lower, ratios[j].first)));
  }
  return 0.0;
}

}  // namespace internal

absl::StatusOr<double> StatisticalDistance(const FiniteDist& p,
                                           const FiniteDist& q) {
  if (auto s = CheckSameOutcomes(p.outcomes(), q.outcomes()); !s.ok()) return s;
  return internal::StatisticalDistance(p.weights(), q.weights());
}

absl::StatusOr<double> MinDeltaForEps(const FiniteDist& p, const FiniteDist& q,
                                      double eps) {
  if (auto s = CheckSameOutcomes(p.outcomes(), q.outcomes()); !s.ok()) return s;
  if (auto s = CheckEps(eps); !s.ok()) return s;
  return internal::MinDeltaForEps(p.weights(), q.weights(), eps);
}

absl::StatusOr<double> MinDeltaForEps(const JointDist& p, const JointDist& q,
                                      double eps) {
  if (auto s = CheckSameOutcomes(p.left(), q.left()); !s.ok()) return s;
  if (auto s = CheckSameOutcomes(p.right(), q.right()); !s.ok()) return s;
  if (auto s = CheckEps(eps); !s.ok()) return s;
  return internal::MinDeltaForEps(p.weights(), q.weights(), eps);
}

absl::StatusOr<double> IndistinguishabilityDelta(const FiniteDist& p,
                                                 const FiniteDist& q,
                                                 double eps) {
  auto forward = MinDeltaForEps(p, q, eps);
  if (!forward.ok()) return forward.status();
  return std::max(*forward,
                  internal::MinDeltaForEps(q.weights(), p.weights(), eps));
}

absl::StatusOr<double> IndistinguishabilityDelta(const JointDist& p,
                                                 const JointDist& q,
                                                 double eps) {
  auto forward = MinDeltaForEps(p, q, eps);
  if (!forward.ok()) return forward.status();
  return std::max(*forward,
                  internal::MinDeltaForEps(q.weights(), p.weights(), eps));
}

absl::StatusOr<double> MinEpsForDelta(const FiniteDist& p, const FiniteDist& q,
                                      double delta) {
  if (auto s = CheckSameOutcomes(p.outcomes(), q.outcomes()); !s.ok()) return s;
  if (!(delta >= 0.0 && delta <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta must lie in [0, 1], got ", delta));
  }
  return internal::MinEpsForDelta(p.weights(), q.weights(), delta);
}

absl::StatusOr<double> MaximalLeakage(const JointDist& joint) {
  double sum = 0.0;
  std::vector<double> column_max(joint.cols(), 0.0);
  bool any_positive = false;
  for (std::size_t l = 0; l < joint.rows(); ++l) {
    auto row = joint.row(l);
    const double mass = std::accumulate(row.begin(), row.end(), 0.0);
    if (!(mass > 0.0)) continue;
    any_positive = true;
    for (std::size_t c = 0; c < joint.cols(); ++c) {
      column_max[c] = std::max(column_max[c], row[c] / mass);
    }
  }
  if (!any_positive) {
    return absl::InvalidArgumentError(
        "invalid distribution: joint has no positive-mass row");
  }
  for (double m : column_max) sum += m;
  return std::max(0.0, std::log(sum));
}

absl::StatusOr<FiniteDist> Pushforward(const FiniteDist& p,
                                       const Channel& channel) {
  if (auto s = CheckSameOutcomes(p.outcomes(), channel.inputs()); !s.ok()) {
    return s;
  }
  std::vector<double> out(channel.outputs()->size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    auto row = channel.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += p[i] * row[j];
  }
  return FiniteDist::Create(channel.outputs(), std::move(out));
}

}  // namespace stability_lab
