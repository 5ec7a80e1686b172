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

// Accuracy of query answers, generalization in expectation, loss
// assessment queries and the monitor experiments built on them.

#ifndef STABILITY_LAB_GENERALIZATION_H_
#define STABILITY_LAB_GENERALIZATION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "stability_lab/adaptivity.h"
#include "stability_lab/linear_query.h"
#include "stability_lab/mechanisms.h"
#include "stability_lab/probability.h"
#include "stability_lab/random.h"
#include "stability_lab/world.h"

namespace stability_lab {

// Distribution of a single uniformly chosen position of the sample.
absl::StatusOr<FiniteDist> ElementMarginal(const SampleSpace& space,
                                           const SamplePrior& prior);

// q(D) for the world's prior.
absl::StatusOr<double> PopulationValue(const LinearQuery& query,
                                       const World& world);

// Linear queries addressed by the query ids an analyst emits.
using QueryTable = std::map<std::string, LinearQuery>;

enum class AccuracyMode { kSample, kDistribution };
std::string_view AccuracyModeName(AccuracyMode mode);

// Monte Carlo is enabled when samples > 0.
struct MonteCarloOptions {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

struct AccuracyReport {
  double eps = 0.0;
  // Pr[max_i |R_i - target_i| > eps].
  double delta_star = 0.0;
  AccuracyMode mode = AccuracyMode::kSample;
  int k = 1;
  bool exact = true;
  std::size_t samples = 0;
  double standard_error = 0.0;
};

// Errors within this slack of eps count as accurate, so that responses
// snapped to a grid of representable values are not penalised.
inline constexpr double kAccuracySlack = 1e-9;

// The kernel must carry response values. Falls back to Monte Carlo when the
// world is not enumerable and `monte_carlo.samples` is positive.
absl::StatusOr<AccuracyReport> CertifyAccuracy(
    const World& world, const LinearQuery& query, double eps,
    AccuracyMode mode, const MonteCarloOptions& monte_carlo = {});

// Exact k-round accuracy of an enumerated run; every query id reachable in
// the run must be in `queries`.
absl::StatusOr<AccuracyReport> CertifyAccuracy(const AdaptiveRun& run,
                                               const QueryTable& queries,
                                               double eps, AccuracyMode mode);

struct ExpectationCheck {
  double eps = 0.0;
  double delta = 0.0;
  // Largest |q'(x)| over the response queries.
  double delta_bound = 0.0;
  // D(Q_eps), the mass of responses with loss above eps.
  double unstable_mass = 0.0;
  // Set by the stability form: the certified delta* at eps.
  std::optional<double> certified_delta;
  bool applicable = false;
  // E[Q'(D)] and E[Q'(S)].
  double population_mean = 0.0;
  double sample_mean = 0.0;
  double lhs = 0.0;
  double bound = 0.0;
  // Vacuously true when not applicable.
  bool pass = false;
};

// The world's responses are themselves queries: response r stands for
// `response_queries[r]`. Applicable when D(Q_eps) < delta; the bound is
// 2 Delta (eps + delta).
absl::StatusOr<ExpectationCheck> CheckExpectationGeneralization(
    const World& world, std::span<const LinearQuery> response_queries,
    double eps, double delta);

// Same quantities from an (eps, delta) stability certificate: applicable
// when delta*(eps) <= delta, with bound 2 Delta (2 eps + delta / eps).
absl::StatusOr<ExpectationCheck> CheckStableExpectationGeneralization(
    const World& world, std::span<const LinearQuery> response_queries,
    double eps, double delta);

// +delta_bound where the element prior strictly exceeds the posterior given
// r, -delta_bound elsewhere. Differences below 1e-12 count as ties.
absl::StatusOr<LinearQuery> LossAssessmentQuery(
    const InducedDistributions& induced, std::size_t r, double delta_bound);

struct OverfitCheck {
  double eps = 0.0;
  double delta = 0.0;
  double delta_bound = 0.0;
  // D(R_eps).
  double unstable_mass = 0.0;
  // D(R_eps) > delta.
  bool applicable = false;
  // |E[Q'(D) - Q'(S)]| when every response is replaced by its loss
  // assessment query.
  double lhs = 0.0;
  // 2 eps Delta delta.
  double bound = 0.0;
  bool pass = false;
};

absl::StatusOr<OverfitCheck> CheckLossAssessmentOverfit(const World& world,
                                                        double delta_bound,
                                                        double eps,
                                                        double delta);

// One answered round of a sampled adaptive interaction.
struct AnsweredQuery {
  std::string id;
  LinearQuery query;
  double response = 0.0;
};

// Draws one transcript of the interaction on a fixed sample.
using TranscriptSampler =
    std::function<absl::StatusOr<std::vector<AnsweredQuery>>(
        std::span<const std::size_t> tuple, Rng& rng)>;

// Answers any linear query on a sample.
using QueryMechanism = std::function<double(
    const LinearQuery& query, std::span<const std::size_t> tuple, Rng& rng)>;

// Picks the next query from the answered prefix.
using QueryStrategy = std::function<std::pair<std::string, LinearQuery>(
    std::span<const AnsweredQuery> answered)>;

// Replays an id-based analyst against per-round kernels; response values
// come from the kernels. Every round's kernels must carry response values.
absl::StatusOr<TranscriptSampler> TableSampler(
    const SampleSpace& space, Analyst analyst,
    std::vector<RoundMechanisms> rounds, QueryTable queries);

TranscriptSampler StrategySampler(QueryStrategy strategy,
                                  QueryMechanism mechanism, int k);

// The exact empirical value q(s).
QueryMechanism ExactAnswers();
// q(s) plus discretised Laplace or Gaussian noise on the configured grid.
absl::StatusOr<QueryMechanism> NoisyAnswers(const NoiseSpec& spec,
                                            double delta_bound);
// q(s_J) for a uniformly chosen position J.
QueryMechanism ElementAnswers();

// Probes the indicator of element j in round j + 1 (cycling through the
// domain), marks an element as a member when some probe answered above
// delta_bound / (2n), and spends the last round on the query that is
// +delta_bound on members and -delta_bound elsewhere. Ids are "probe:<x>"
// and "overfit".
QueryStrategy ReconstructThenOverfit(std::size_t domain_size, int n, int k,
                                     double delta_bound);

struct MonitorOptions {
  int t = 1;
  std::size_t replicates = 1;
  std::uint64_t seed = 0;
};

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
  // Normal 95% interval.
  double ci_low = 0.0;
  double ci_high = 0.0;
};

Estimate MakeEstimate(std::span<const double> values);

struct MonitorCopy {
  std::size_t replicate = 0;
  int copy = 0;
  // Largest |q(D) - r| for the first monitor, the view loss for the second.
  double score = 0.0;
  std::string query;
  bool selected = false;
};

struct MonitorReport {
  int t = 1;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  bool exact = false;
  // Expectations over the selected copy I with output (Q, R):
  // Q(D) - R, Q(S_I) - R and Q(D) - Q(S_I).
  std::optional<Estimate> distribution_error;
  std::optional<Estimate> sample_error;
  Estimate expectation_gap;
  std::vector<MonitorCopy> copies;
};

// Runs t independent copies per replicate and exposes the copy whose
// (sign-corrected) answer is furthest below the population value. Ties go
// to the lowest round and the lowest copy.
absl::StatusOr<MonitorReport> RunMonitor(const SampleSpace& space,
                                         const SamplePrior& prior,
                                         const TranscriptSampler& sampler,
                                         const MonitorOptions& options);

// Exact expectations for t <= 2 over an enumerated run.
absl::StatusOr<MonitorReport> ExactMonitor(const AdaptiveRun& run,
                                           const QueryTable& queries, int t);

// Runs t copies, issues each view's loss assessment query as an extra round
// answered by `final_answer`, and exposes the copy with the largest view
// loss.
absl::StatusOr<MonitorReport> RunSecondMonitor(const AdaptiveRun& run,
                                               const QueryMechanism& final_answer,
                                               double delta_bound,
                                               const MonitorOptions& options);

// Exact expectation gap for t <= 2; the response-based errors are absent.
absl::StatusOr<MonitorReport> ExactSecondMonitor(const AdaptiveRun& run,
                                                 double delta_bound, int t);

struct SecondMonitorBound {
  // Mass of views with loss above eps / delta_bound.
  double unstable_mass = 0.0;
  // 2 eps (1 - (1 - unstable_mass)^t).
  double gap_lower_bound = 0.0;
};

absl::StatusOr<SecondMonitorBound> SecondMonitorGapBound(
    const AdaptiveRun& run, double eps, double delta_bound, int t);

// Kernel answering a given query, used for the extra round.
using QueryKernelFactory =
    std::function<absl::StatusOr<MechanismKernel>(const LinearQuery& query)>;

struct NecessityReport {
  double eps = 0.0;
  double delta = 0.0;
  double delta_bound = 0.0;
  // delta* of the run at eps / delta_bound.
  double lss_delta = 0.0;
  bool lss_fails = false;
  // eps / 5 and eps delta / (5 delta_bound).
  double accuracy_eps = 0.0;
  double accuracy_delta = 0.0;
  // Failure probabilities over the k + 1 rounds.
  double sample_failure = 0.0;
  double distribution_failure = 0.0;
  bool sample_accurate = false;
  bool distribution_accurate = false;
  // Holds unless the run is unstable yet accurate both ways.
  bool pass = false;
};

// Appends each view's loss assessment query, answered by `final_round`, and
// certifies accuracy of the k + 1 rounds exactly.
absl::StatusOr<NecessityReport> CheckLssNecessity(
    const AdaptiveRun& run, const QueryTable& queries,
    const QueryKernelFactory& final_round, double eps, double delta,
    double delta_bound);

}  // namespace stability_lab

#endif  // STABILITY_LAB_GENERALIZATION_H_
