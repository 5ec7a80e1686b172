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

// The adaptive mechanism: an analyst picks each round's query from the view
// so far, and the run is enumerated exactly over views.

#ifndef STABILITY_LAB_ADAPTIVITY_H_
#define STABILITY_LAB_ADAPTIVITY_H_

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "stability_lab/probability.h"
#include "stability_lab/stability.h"
#include "stability_lab/world.h"

namespace stability_lab {

// Chooses the next query from the coin record and the responses so far.
class Analyst {
 public:
  using Strategy = std::function<absl::StatusOr<std::string>(
      std::size_t coin, std::span<const std::size_t> responses)>;
  // Keyed by (coin label, response labels).
  using DecisionTable =
      std::map<std::pair<std::string, std::vector<std::string>>, std::string>;

  // A single coin record labelled "-".
  static Analyst Deterministic(Strategy strategy);
  static Analyst Randomized(FiniteDist coins, Strategy strategy);
  // Round i looks up (coin, r_1..r_{i-1}) in `table`, using the labels of
  // the rounds' response sets.
  static Analyst FromTable(FiniteDist coins, DecisionTable table,
                           std::vector<OutcomeSetPtr> round_responses);

  const FiniteDist& coins() const { return coins_; }
  absl::StatusOr<std::string> Choose(
      std::size_t coin, std::span<const std::size_t> responses) const {
    return strategy_(coin, responses);
  }

 private:
  Analyst(FiniteDist coins, Strategy strategy)
      : coins_(std::move(coins)), strategy_(std::move(strategy)) {}

  FiniteDist coins_;
  Strategy strategy_;
};

// The mechanisms available in one round, by query id. All of them share one
// response set.
using RoundMechanisms = std::map<std::string, MechanismKernel>;

struct ViewNode {
  static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  std::size_t parent = kNoParent;
  // Number of responses; depth-0 nodes hold only the coin record.
  int depth = 0;
  std::size_t coin = 0;
  std::vector<std::size_t> responses;
  // The query that produced the last response, and the one asked next.
  std::string query;
  std::string next_query;
  double mass = 0.0;
  // P^{parent}(last response), from the parent's posterior.
  double conditional = 0.0;
  std::vector<double> posterior;
  std::vector<double> element_posterior;
  // Against the prior's element marginal.
  double loss = 0.0;
  // Against the parent's element posterior; zero at depth 0.
  double step_loss = 0.0;
};

struct AdaptiveRun {
  SampleSpace space;
  SamplePrior prior;
  FiniteDist coins;
  std::vector<RoundMechanisms> rounds;
  EnumerationBudget budget;
  FiniteDist element_marginal;
  // Positive-mass prefixes in depth order; children follow their parent's
  // order and response order.
  std::vector<ViewNode> nodes;
  std::vector<std::size_t> leaves;
  // Over the depth-k views, in `leaves` order.
  FiniteDist view_dist;

  int k() const { return static_cast<int>(rounds.size()); }
  std::string ViewLabel(const ViewNode& node) const;
};

absl::StatusOr<AdaptiveRun> RunAdaptive(const SampleSpace& space,
                                        const SamplePrior& prior,
                                        const Analyst& analyst,
                                        std::vector<RoundMechanisms> rounds,
                                        EnumerationBudget budget = {});

// The whole run as one mechanism whose responses are full views.
absl::StatusOr<World> AsWorld(const AdaptiveRun& run);
// Losses of the depth-k views against the element marginal, in `leaves`
// order; pairs with `view_dist` for CertifyLss.
LossProfile ViewLossProfile(const AdaptiveRun& run);
absl::StatusOr<InducedDistributions> AsInduced(const AdaptiveRun& run);

struct DecompositionCheck {
  // max |D(v, r) - D(v) P^v(r)|.
  double product_residual = 0.0;
  // max(0, loss(v, r) - loss(v) - step loss).
  double loss_excess = 0.0;
  double mass_residual = 0.0;
  double max_violation = 0.0;
  bool pass = false;
};

absl::StatusOr<DecompositionCheck> CheckViewLossDecomposition(
    const AdaptiveRun& run);

struct RoundParams {
  double eps = 0.0;
  double delta = 0.0;
  // Bound on the expected loss; only used by the sub-linear bound.
  double alpha = 0.0;
};

struct CompositionBound {
  double eps = 0.0;
  double delta = 0.0;
};

absl::StatusOr<CompositionBound> LinearCompositionBound(
    std::span<const RoundParams> rounds);
absl::StatusOr<CompositionBound> AdvancedCompositionBound(
    std::span<const RoundParams> rounds, double delta_prime);

// The worst reachable posterior for one round.
struct RoundPremise {
  int round = 0;
  double worst_delta = 0.0;
  double worst_expected_loss = 0.0;
  std::size_t worst_node = 0;
  std::string worst_query;
  std::size_t posteriors_checked = 0;
  bool holds = false;
};

struct CompositionCheck {
  CompositionBound bound;
  std::vector<RoundPremise> premises;
  bool premises_hold = false;
  double end_to_end_delta = 0.0;
  // Holds when the premises fail (nothing to check) or the run certifies
  // within the bound.
  bool pass = false;
};

// Certifies every query of round i at (eps_i, delta_i) against every
// posterior reachable before it, then the whole run at the summed eps.
absl::StatusOr<CompositionCheck> CheckLinearComposition(
    const AdaptiveRun& run, std::span<const RoundParams> params);
// As above with the expectation premise E[loss] <= alpha_i, certifying the
// run at the sub-linear eps.
absl::StatusOr<CompositionCheck> CheckAdvancedComposition(
    const AdaptiveRun& run, std::span<const RoundParams> params,
    double delta_prime);

}  // namespace stability_lab

#endif  // STABILITY_LAB_ADAPTIVITY_H_
