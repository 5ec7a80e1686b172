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

// Finite distributions over labelled outcome sets, and the distances and
// divergences computed on them.

#ifndef STABILITY_LAB_PROBABILITY_H_
#define STABILITY_LAB_PROBABILITY_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace stability_lab {

// Weights must sum to one within this tolerance.
inline constexpr double kProbabilityTolerance = 1e-9;

class OutcomeSet;
using OutcomeSetPtr = std::shared_ptr<const OutcomeSet>;

// An ordered, immutable set of outcome labels. Large index spaces (tuples of
// a sample space) are represented without materialising their labels.
class OutcomeSet {
 public:
  // Labels must be distinct.
  static absl::StatusOr<OutcomeSetPtr> FromLabels(
      std::vector<std::string> labels);
  // Labels "0", "1", ..., "size-1".
  static OutcomeSetPtr Range(std::size_t size);
  // Two indexed sets are equal iff they share `tag` and size.
  static OutcomeSetPtr Indexed(std::size_t size, std::string tag,
                               std::function<std::string(std::size_t)> labeler);

  std::size_t size() const { return size_; }
  std::string label(std::size_t index) const;
  std::optional<std::size_t> IndexOf(std::string_view label) const;
  bool Equals(const OutcomeSet& other) const;

 private:
  OutcomeSet() = default;

  std::size_t size_ = 0;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string tag_;
  std::function<std::string(std::size_t)> labeler_;
};

bool SameOutcomes(const OutcomeSetPtr& a, const OutcomeSetPtr& b);

// A normalised probability vector indexed by an outcome set.
class FiniteDist {
 public:
  // Rejects negative or non-finite weights and totals outside 1 +- tolerance.
  static absl::StatusOr<FiniteDist> Create(OutcomeSetPtr outcomes,
                                           std::vector<double> weights);
  // Scales non-negative weights to sum to one; the total must be positive.
  static absl::StatusOr<FiniteDist> Normalize(OutcomeSetPtr outcomes,
                                              std::vector<double> weights);
  static FiniteDist PointMass(OutcomeSetPtr outcomes, std::size_t index);
  static FiniteDist Uniform(OutcomeSetPtr outcomes);
  // Outcomes {"0", "1"} with weight p on "1".
  static absl::StatusOr<FiniteDist> Bernoulli(double p);

  const OutcomeSetPtr& outcomes() const { return outcomes_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  double Mass(std::span<const std::size_t> subset) const;
  std::vector<std::size_t> Support() const;

 private:
  FiniteDist(OutcomeSetPtr outcomes, std::vector<double> weights)
      : outcomes_(std::move(outcomes)), weights_(std::move(weights)) {}

  OutcomeSetPtr outcomes_;
  std::vector<double> weights_;
};

// A distribution over left x right, stored row-major.
class JointDist {
 public:
  static absl::StatusOr<JointDist> Create(OutcomeSetPtr left,
                                          OutcomeSetPtr right,
                                          std::vector<double> weights);
  static JointDist Product(const FiniteDist& left, const FiniteDist& right);

  const OutcomeSetPtr& left() const { return left_; }
  const OutcomeSetPtr& right() const { return right_; }
  std::size_t rows() const { return left_->size(); }
  std::size_t cols() const { return right_->size(); }
  double at(std::size_t l, std::size_t r) const {
    return weights_[l * cols() + r];
  }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> row(std::size_t l) const {
    return std::span<const double>(weights_).subspan(l * cols(), cols());
  }
  FiniteDist LeftMarginal() const;
  FiniteDist RightMarginal() const;

 private:
  JointDist(OutcomeSetPtr left, OutcomeSetPtr right,
            std::vector<double> weights)
      : left_(std::move(left)),
        right_(std::move(right)),
        weights_(std::move(weights)) {}

  OutcomeSetPtr left_;
  OutcomeSetPtr right_;
  std::vector<double> weights_;
};

// A row-stochastic matrix from inputs to outputs.
class Channel {
 public:
  static absl::StatusOr<Channel> Create(OutcomeSetPtr inputs,
                                        OutcomeSetPtr outputs,
                                        std::vector<double> rows);
  const OutcomeSetPtr& inputs() const { return inputs_; }
  const OutcomeSetPtr& outputs() const { return outputs_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(rows_).subspan(i * outputs_->size(),
                                                  outputs_->size());
  }

 private:
  Channel(OutcomeSetPtr inputs, OutcomeSetPtr outputs, std::vector<double> rows)
      : inputs_(std::move(inputs)),
        outputs_(std::move(outputs)),
        rows_(std::move(rows)) {}

  OutcomeSetPtr inputs_;
  OutcomeSetPtr outputs_;
  std::vector<double> rows_;
};

// Half the L1 distance.
absl::StatusOr<double> StatisticalDistance(const FiniteDist& p,
                                           const FiniteDist& q);

// Smallest delta with p(B) <= e^eps q(B) + delta for every event B, i.e.
// sum_r max(0, p_r - e^eps q_r).
absl::StatusOr<double> MinDeltaForEps(const FiniteDist& p, const FiniteDist& q,
                                      double eps);
absl::StatusOr<double> MinDeltaForEps(const JointDist& p, const JointDist& q,
                                      double eps);

// Max of MinDeltaForEps in both directions.
absl::StatusOr<double> IndistinguishabilityDelta(const FiniteDist& p,
                                                 const FiniteDist& q,
                                                 double eps);
absl::StatusOr<double> IndistinguishabilityDelta(const JointDist& p,
                                                 const JointDist& q,
                                                 double eps);

// Smallest eps >= 0 with MinDeltaForEps(p, q, eps) <= delta; +infinity when
// no finite eps suffices. This is the approximate max divergence clamped at
// zero.
absl::StatusOr<double> MinEpsForDelta(const FiniteDist& p, const FiniteDist& q,
                                      double delta);

// ln sum_y max_{x : P(x) > 0} P(y | x).
absl::StatusOr<double> MaximalLeakage(const JointDist& joint);

absl::StatusOr<FiniteDist> Pushforward(const FiniteDist& p,
                                       const Channel& channel);

// Raw-vector kernels shared by the typed entry points above and by callers
// that hold rows they do not want to copy. Inputs are assumed validated.
namespace internal {
double StatisticalDistance(std::span<const double> p,
                           std::span<const double> q);
double MinDeltaForEps(std::span<const double> p, std::span<const double> q,
                      double eps);
double MinEpsForDelta(std::span<const double> p, std::span<const double> q,
                      double delta);
}  // namespace internal

}  // namespace stability_lab

#endif  // STABILITY_LAB_PROBABILITY_H_
