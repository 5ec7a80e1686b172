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

// Certifiers for the stability notions that sit next to local statistical
// stability, and instance checks of the parameter transfers between them.

#ifndef STABILITY_LAB_NOTIONS_H_
#define STABILITY_LAB_NOTIONS_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "stability_lab/world.h"

namespace stability_lab {

enum class Notion { kDp, kMi, kLmi, kTs, kMl, kLml, kLss };

std::string_view NotionName(Notion notion);

inline constexpr std::size_t kMaxWitnessItems = 32;

struct NotionCertificate {
  Notion notion = Notion::kDp;
  double eps = 0.0;
  // Minimal delta at eps. For TS this is the fixed delta of the query.
  double delta = 0.0;
  // TS: probability that an independent pair of samples is distinguishable.
  std::optional<double> eta;
  // ML and LML.
  std::optional<double> leakage;
  // MI and LMI: delta for joint <= e^eps product and for the reverse check;
  // `delta` is their maximum.
  std::optional<double> joint_over_product;
  std::optional<double> product_over_joint;
  // A neighbouring or sampled pair of tuples, or the cells (or responses) of
  // the worst event, listing at most kMaxWitnessItems of witness_size.
  std::vector<std::string> witness;
  std::size_t witness_size = 0;
};

enum class Direction { kBoth, kJointOverProduct };

// Certifies one world and caches what it induces. Not thread-safe.
class NotionCertifier {
 public:
  explicit NotionCertifier(World world) : world_(std::move(world)) {}

  const World& world() const { return world_; }
  absl::StatusOr<const InducedDistributions*> Induced();

  // Worst case over ordered pairs of tuples differing in one position.
  absl::StatusOr<NotionCertificate> Dp(double eps);
  absl::StatusOr<NotionCertificate> Mi(double eps);
  absl::StatusOr<NotionCertificate> Lmi(double eps);
  absl::StatusOr<NotionCertificate> Ts(double eps, double delta);
  absl::StatusOr<NotionCertificate> Ml();
  absl::StatusOr<NotionCertificate> Lml();
  absl::StatusOr<NotionCertificate> Lss(double eps);

  // Smallest eps at which DP, MI or LMI holds with the given delta; +infinity
  // when none does.
  absl::StatusOr<double> EpsilonAtDelta(Notion notion, double delta,
                                        Direction direction = Direction::kBoth);

 private:
  absl::Status MaterializeRows();
  absl::StatusOr<const JointDist*> ProductSets();

  World world_;
  std::optional<InducedDistributions> induced_;
  std::optional<JointDist> product_sets_;
  // Every kernel row, tuple-major, for the neighbour and pair loops.
  std::vector<double> rows_;
  bool rows_ready_ = false;
};

enum class Implication {
  kDpToLmi,
  kMiToLmi,
  kTsToLmi,
  kLmlToLmi,
  kLmiToLss,
  kCompressionToLss,
};

std::string_view ImplicationName(Implication implication);

struct ImplicationParams {
  double eps = 0.0;
  // TS: the indistinguishability delta. LML and compression: the target
  // delta. Unused otherwise; those premises are taken at their certified
  // minimum.
  double delta = 0.0;
};

struct ImplicationReport {
  Implication implication = Implication::kDpToLmi;
  // Absent for the compression transfer, whose premise is structural.
  std::optional<NotionCertificate> premise;
  double transferred_eps = 0.0;
  double transferred_delta = 0.0;
  NotionCertificate conclusion;
  // The conclusion delta held against transferred_delta. The leakage
  // transfer only bounds the joint-over-product direction.
  double conclusion_delta = 0.0;
  bool pass = false;
};

// Fails with FailedPrecondition naming the side condition when the world or
// parameters fall outside the transfer's hypotheses.
absl::StatusOr<ImplicationReport> VerifyImplication(
    Implication implication, NotionCertifier& certifier,
    const ImplicationParams& params);

struct ParitySeparationParams {
  double eps = 0.7;
  // Label 1 has probability 1/2 + alpha.
  double alpha = 0.1;
  int n = 3;
};

struct ParitySeparationReport {
  ParitySeparationParams params;
  double lmi_delta = 0.0;
  double mi_delta_at_one = 0.0;
  std::vector<double> losses;
  bool lmi_holds = false;
  bool mi_fails = false;
  bool pass = false;
};

// Parity of n labelled draws: LMI at eps with delta ~ 0, yet not (1, 1/5)-MI.
absl::StatusOr<ParitySeparationReport> RunParitySeparation(
    const ParitySeparationParams& params);

struct ElementReleaseSeparationParams {
  int domain_size = 50;
  int n = 7;
  double delta = 0.1;
  // Element weights; uniform when empty.
  std::vector<double> weights;
};

struct ElementReleaseSeparationReport {
  ElementReleaseSeparationParams params;
  double lmi_delta_at_one = 0.0;
  double lmi_threshold = 0.0;
  double lmi_margin = 0.0;
  double lss_eps = 0.0;
  double lss_delta = 0.0;
  // lss_eps >= 1, where every mechanism is stable.
  bool lss_vacuous = false;
  bool lmi_fails = false;
  bool lss_holds = false;
  bool pass = false;
};

// Releasing one uniformly chosen element: stable, yet not (1, 1/(2n))-LMI.
absl::StatusOr<ElementReleaseSeparationReport> RunElementReleaseSeparation(
    const ElementReleaseSeparationParams& params);

}  // namespace stability_lab

#endif  // STABILITY_LAB_NOTIONS_H_
