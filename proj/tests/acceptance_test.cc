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

// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "generators.h"
#include "oracles.h"
#include "stability_lab/adaptivity.h"
#include "stability_lab/generalization.h"
#include "stability_lab/mechanisms.h"
#include "stability_lab/notions.h"
#include "stability_lab/scenario.h"
#include "stability_lab/stability.h"
#include "stability_lab/world.h"

namespace stability_lab {
namespace {

using testing::BruteForceLssDelta;
using testing::EnumerateLosses;
using testing::RandomChannel;
using testing::RandomDist;
using testing::RandomWeights;
using testing::RandomWorld;
using testing::WorldShape;

// Pinned tolerances and limits.
constexpr double kBayesTolerance = 1e-9;
constexpr double kCertifierTolerance = 1e-12;
constexpr double kPostProcessingTolerance = 1e-9;
constexpr double kUnstableMassTolerance = 1e-9;
constexpr double kDecompositionTolerance = 1e-9;
constexpr double kCompositionTolerance = 1e-9;
constexpr double kParityLmiTolerance = 1e-9;
constexpr double kSeparationTolerance = 1e-6;
constexpr double kAnalyticTolerance = 1e-12;
constexpr double kImplicationFormulaTolerance = 1e-12;

constexpr double kBayesSeconds = 10;
constexpr double kCertifierSeconds = 30;
constexpr double kParitySeconds = 5;
constexpr double kMonitorSeconds = 120;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string Sci(double v) { return absl::StrFormat("%.3g", v); }

std::vector<double> EpsGrid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.05 * i);
  return grid;
}

// A kernel with random rows of the given width.
MechanismKernel RandomKernel(Rng& rng, const SampleSpace& space,
                             std::size_t width) {
  std::vector<double> rows;
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    auto row = RandomWeights(rng, width, 0.3);
    rows.insert(rows.end(), row.begin(), row.end());
  }
  return *MechanismKernel::Dense(space, OutcomeSet::Range(width), rows);
}

SamplePrior RandomPrior(Rng& rng, const SampleSpace& space) {
  return rng.Uniform() < 0.5
             ? *SamplePrior::Product(space, RandomDist(rng, space.elements()))
             : *SamplePrior::Explicit(
                   space, RandomWeights(rng, *space.tuple_count(), 0.3));
}

SampleSpace Space(std::size_t domain, int n) {
  return *SampleSpace::Create(OutcomeSet::Range(domain), n);
}

// Two candidate queries per round and an analyst whose choice depends on
// its coin and every response so far.
AdaptiveRun RandomRun(Rng& rng, int k) {
  SampleSpace space = Space(2 + rng.UniformIndex(2),
                            1 + static_cast<int>(rng.UniformIndex(2)));
  SamplePrior prior = RandomPrior(rng, space);
  std::vector<RoundMechanisms> rounds(k);
  for (auto& round : rounds) {
    const std::size_t width = 2 + rng.UniformIndex(2);
    round.emplace("a", RandomKernel(rng, space, width));
    round.emplace("b", RandomKernel(rng, space, width));
  }
  FiniteDist coins =
      RandomDist(rng, OutcomeSet::Range(1 + rng.UniformIndex(2)), 0.0);
  const std::size_t salt = rng.UniformIndex(7);
  Analyst analyst = Analyst::Randomized(
      coins,
      [salt](std::size_t coin, std::span<const std::size_t> responses)
          -> absl::StatusOr<std::string> {
        std::size_t h = salt + 3 * coin;
        for (std::size_t i = 0; i < responses.size(); ++i) {
          h += (i + 2) * responses[i];
        }
        return h % 2 == 0 ? "a" : "b";
      });
  return *RunAdaptive(space, prior, analyst, std::move(rounds));
}

// 1. Bayes consistency of the induced distributions.
Outcome BayesConsistency() {
  Stopwatch watch;
  Rng rng(1001);
  double worst = 0.0;
  const int worlds = 240;
  for (int i = 0; i < worlds; ++i) {
    World world = RandomWorld(rng, WorldShape{4, 3, 6});
    auto induced = Induce(world);
    if (!induced.ok()) return {false, std::string(induced.status().message())};
    worst = std::max(worst, BayesCheck(*induced).max());
  }
  const double seconds = watch.Seconds();
  return {worst <= kBayesTolerance && seconds < kBayesSeconds,
          absl::StrCat(worlds, " worlds, max residual ", Sci(worst),
                       " (limit ", Sci(kBayesTolerance), "), ",
                       absl::StrFormat("%.2f", seconds), " s (limit ",
                       kBayesSeconds, " s)")};
}

// 2. The witness-set certifier equals the maximum over every response set.
Outcome CertifierMatchesExhaustiveSearch() {
  Stopwatch watch;
  Rng rng(1002);
  double worst = 0.0;
  int instances = 0;
  const std::vector<double> grid = EpsGrid();
  for (int i = 0; i < 120; ++i) {
    WorldShape shape{4, 3, 12};
    shape.min_responses = i % 2 == 0 ? 8 : 2;
    World world = RandomWorld(rng, shape);
    auto induced = Induce(world);
    if (!induced.ok()) return {false, std::string(induced.status().message())};
    auto profile = ComputeLossProfile(*induced);
    if (!profile.ok()) return {false, std::string(profile.status().message())};
    const std::vector<double> marginal(induced->marginal_r.weights().begin(),
                                       induced->marginal_r.weights().end());
    for (double eps : grid) {
      auto cert = CertifyLss(*profile, induced->marginal_r, eps);
      if (!cert.ok()) return {false, std::string(cert.status().message())};
      const double exhaustive =
          BruteForceLssDelta(marginal, profile->per_response, eps);
      worst = std::max(worst, std::abs(cert->delta_star - exhaustive));
      ++instances;
    }
  }
  const double seconds = watch.Seconds();
  return {worst <= kCertifierTolerance && seconds < kCertifierSeconds,
          absl::StrCat(instances, " (world, eps) instances with up to 12 "
                       "responses, max difference ", Sci(worst), " (limit ",
                       Sci(kCertifierTolerance), "), ",
                       absl::StrFormat("%.2f", seconds), " s (limit ",
                       kCertifierSeconds, " s)")};
}

// 3. Post-processing never increases delta*.
Outcome PostProcessing() {
  Rng rng(1003);
  int pairs = 0;
  int violations = 0;
  double worst = -1.0;
  for (int i = 0; i < 150; ++i) {
    World world = RandomWorld(rng, WorldShape{3, 3, 5});
    const std::size_t outputs = 1 + rng.UniformIndex(5);
    Channel channel = RandomChannel(rng, world.kernel().responses(),
                                    OutcomeSet::Range(outputs));
    auto composed = ComposeKernel(world.kernel(), world.space(), channel);
    if (!composed.ok()) return {false, std::string(composed.status().message())};
    auto post = world.WithKernel(*composed);
    if (!post.ok()) return {false, std::string(post.status().message())};
    auto before = Induce(world);
    auto after = Induce(*post);
    if (!before.ok() || !after.ok()) return {false, "induce failed"};
    ++pairs;
    for (double eps : EpsGrid()) {
      const double d0 = CertifyLss(*before, eps)->delta_star;
      const double d1 = CertifyLss(*after, eps)->delta_star;
      worst = std::max(worst, d1 - d0);
      violations += d1 > d0 + kPostProcessingTolerance;
    }
  }
  return {violations == 0 && pairs >= 100,
          absl::StrCat(pairs, " (world, channel) pairs x 21 eps, ", violations,
                       " violations, max increase ", Sci(worst))};
}

// 4. Responses with loss above 2 eps carry less than delta / eps mass.
Outcome UnstableMassBound() {
  Rng rng(1004);
  int instances = 0;
  int violations = 0;
  for (int i = 0; i < 200; ++i) {
    World world = RandomWorld(rng, WorldShape{4, 3, 6});
    auto induced = Induce(world);
    if (!induced.ok()) return {false, std::string(induced.status().message())};
    const auto oracle = EnumerateLosses(world);
    for (double eps : EpsGrid()) {
      if (eps == 0.0) continue;
      const double delta = CertifyLss(*induced, eps)->delta_star;
      if (delta > eps) continue;
      double unstable = 0.0;
      for (std::size_t r = 0; r < oracle.loss.size(); ++r) {
        if (oracle.loss[r].has_value() && *oracle.loss[r] > 2 * eps) {
          unstable += oracle.marginal_r[r];
        }
      }
      ++instances;
      violations += unstable >= delta / eps + kUnstableMassTolerance;
    }
  }
  return {violations == 0 && instances > 0,
          absl::StrCat(instances, " certified instances with delta <= eps, ",
                       violations, " violations")};
}

// 5. View losses of adaptive runs decompose over rounds.
Outcome LossDecomposition() {
  Rng rng(1005);
  int runs = 0;
  double residual = 0.0;
  double excess = 0.0;
  for (int i = 0; i < 150; ++i) {
    AdaptiveRun run = RandomRun(rng, 1 + i % 3);
    auto check = CheckViewLossDecomposition(run);
    if (!check.ok()) return {false, std::string(check.status().message())};
    residual = std::max(residual, check->product_residual);
    excess = std::max(excess, check->loss_excess);
    ++runs;
  }
  return {residual <= kDecompositionTolerance &&
              excess <= kDecompositionTolerance,
          absl::StrCat(runs, " runs with k <= 3, product residual ",
                       Sci(residual), ", loss excess ", Sci(excess),
                       " (limit ", Sci(kDecompositionTolerance), ")")};
}

// 6. Per-round guarantees at every reachable posterior add up end to end.
Outcome LinearComposition() {
  Rng rng(1006);
  int runs = 0;
  int failures = 0;
  double worst_slack = -1.0;
  for (int i = 0; i < 100; ++i) {
    AdaptiveRun run = RandomRun(rng, 2);
    const std::vector<double> eps = {0.02 + 0.3 * rng.Uniform(),
                                     0.02 + 0.3 * rng.Uniform()};
    // The round deltas are the worst certified deltas over every reachable
    // posterior, so the premises hold by construction.
    std::vector<RoundParams> loose = {{eps[0], 1, 1}, {eps[1], 1, 1}};
    auto first = CheckLinearComposition(run, loose);
    if (!first.ok()) return {false, std::string(first.status().message())};
    std::vector<RoundParams> params;
    for (int j = 0; j < 2; ++j) {
      params.push_back({eps[j], first->premises[j].worst_delta, 0});
    }
    auto check = CheckLinearComposition(run, params);
    if (!check.ok()) return {false, std::string(check.status().message())};
    if (!check->premises_hold) return {false, "premise check disagrees"};
    const double budget = params[0].delta + params[1].delta;
    const auto whole = CertifyLss(*AsInduced(run), eps[0] + eps[1]);
    worst_slack = std::max(worst_slack, whole->delta_star - budget);
    failures += whole->delta_star > budget + kCompositionTolerance;
    ++runs;
  }
  return {failures == 0,
          absl::StrCat(runs, " two-round runs, ", failures,
                       " over budget, max delta* - budget ", Sci(worst_slack))};
}

// 7. Parity of biased labels: local information but not mutual information.
Outcome ParitySeparation() {
  Stopwatch watch;
  const double p = 0.6;
  const int n = 3;
  auto report = RunParitySeparation({0.7, p - 0.5, n});
  if (!report.ok()) return {false, std::string(report.status().message())};

  // Event {(S, 1) : parity(S) = 0} by enumeration: the joint never visits
  // it and the product gives it Pr[parity 0] Pr[parity 1].
  SampleSpace space = Space(2, n);
  std::vector<std::size_t> tuple(n);
  double parity_zero = 0.0;
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    space.Decode(i, tuple);
    double w = 1.0;
    int ones = 0;
    for (std::size_t x : tuple) {
      w *= x == 1 ? p : 1 - p;
      ones += static_cast<int>(x);
    }
    if (ones % 2 == 0) parity_zero += w;
  }
  const double joint = 0.0;
  const double product = parity_zero * (1 - parity_zero);
  const double witness = product - std::exp(1.0) * joint;
  const double closed_form = (1 - std::pow(1 - 2 * p, 2 * n)) / 4;
  const double seconds = watch.Seconds();
  const bool pass = report->lmi_delta <= kParityLmiTolerance &&
                    std::abs(witness - 0.249984) <= kSeparationTolerance &&
                    std::abs(witness - closed_form) <= kSeparationTolerance &&
                    witness > 0.2 && report->mi_delta_at_one > 0.2 &&
                    seconds < kParitySeconds;
  return {pass,
          absl::StrCat("LMI delta*(0.7) = ", Sci(report->lmi_delta),
                       ", diagonal witness ", FormatNumber(witness),
                       " > 0.2 (closed form ", FormatNumber(closed_form),
                       "), two-sided MI delta*(1) = ",
                       FormatNumber(report->mi_delta_at_one), ", ",
                       absl::StrFormat("%.2f", seconds), " s")};
}

// Largest entry-wise difference between the closed-form and enumerated
// element-release distributions.
double AnalyticGap(const FiniteDist& element_dist, int n) {
  SampleSpace space = *SampleSpace::Create(element_dist.outcomes(), n);
  World world = *World::Create(space,
                               *SamplePrior::Product(space, element_dist),
                               BuildElementRelease(space));
  auto full = Induce(world);
  auto fast = ElementReleaseAnalytic(element_dist, n);
  if (!full.ok() || !fast.ok()) return 1.0;
  double gap = 0.0;
  auto compare = [&](std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
      gap = 1.0;
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      gap = std::max(gap, std::abs(a[i] - b[i]));
    }
  };
  compare(full->marginal_r.weights(), fast->marginal_r.weights());
  compare(full->element_marginal.weights(), fast->element_marginal.weights());
  compare(full->joint_elems.weights(), fast->joint_elems.weights());
  for (std::size_t r = 0; r < full->posterior_elems.size(); ++r) {
    if (full->posterior_elems[r].has_value() !=
        fast->posterior_elems[r].has_value()) {
      return 1.0;
    }
    if (full->posterior_elems[r].has_value()) {
      compare(full->posterior_elems[r]->weights(),
              fast->posterior_elems[r]->weights());
    }
  }
  return gap;
}

// 8. Releasing a sample element is not local-information private.
Outcome ElementReleaseSeparation() {
  auto report = RunElementReleaseSeparation({50, 7, 0.1, {}});
  if (!report.ok()) return {false, std::string(report.status().message())};
  const double diagonal = 1.0 / 7 + (6.0 / 7) / 50;
  const double threshold = std::exp(1.0) / 50 + 1.0 / 14;
  const double margin = diagonal - threshold;
  Rng rng(1008);
  const double uniform_gap =
      AnalyticGap(FiniteDist::Uniform(OutcomeSet::Range(3)), 2);
  const double skewed_gap =
      AnalyticGap(RandomDist(rng, OutcomeSet::Range(3), 0.0), 2);
  const bool pass = report->lmi_fails &&
                    std::abs(diagonal - 0.16) <= kSeparationTolerance &&
                    std::abs(report->lmi_margin - margin) <=
                        kSeparationTolerance &&
                    report->lmi_margin >= 0.034 - kSeparationTolerance &&
                    uniform_gap <= kAnalyticTolerance &&
                    skewed_gap <= kAnalyticTolerance;
  return {pass,
          absl::StrCat("N=50 n=7: diagonal mass ", FormatNumber(diagonal),
                       " vs e/50 + 1/14 = ", FormatNumber(threshold),
                       ", margin ", FormatNumber(report->lmi_margin),
                       "; closed form vs enumeration at (3, 2): ",
                       Sci(std::max(uniform_gap, skewed_gap)))};
}

// Kernel rows close to one fixed row, so LMI holds with small delta.
World NearlyConstantWorld(Rng& rng, double spread) {
  SampleSpace space = Space(2 + rng.UniformIndex(2),
                            1 + static_cast<int>(rng.UniformIndex(2)));
  const std::size_t width = 2 + rng.UniformIndex(3);
  const std::vector<double> base = RandomWeights(rng, width, 0.0);
  std::vector<double> rows;
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    const auto noise = RandomWeights(rng, width, 0.0);
    for (std::size_t r = 0; r < width; ++r) {
      rows.push_back((1 - spread) * base[r] + spread * noise[r]);
    }
  }
  return *World::Create(
      space, *SamplePrior::Product(space, RandomDist(rng, space.elements(), 0.0)),
      *MechanismKernel::Dense(space, OutcomeSet::Range(width), rows));
}

// 9. Every transfer into local information and stability.
Outcome ImplicationTransfers() {
  Rng rng(1009);
  std::map<Implication, int> evaluated;
  int failures = 0;
  double formula_gap = 0.0;
  auto verify = [&](Implication implication, NotionCertifier& certifier,
                    ImplicationParams params) {
    auto report = VerifyImplication(implication, certifier, params);
    if (!report.ok()) {
      // Side conditions not met; anything else is a failure.
      if (report.status().code() != absl::StatusCode::kFailedPrecondition) {
        ++failures;
      }
      return;
    }
    ++evaluated[implication];
    failures += !report->pass;
    if (implication == Implication::kLmiToLss) {
      formula_gap = std::max(
          formula_gap, std::abs(report->transferred_eps -
                                (std::exp(params.eps) - 1 + params.eps)));
    }
  };
  for (int i = 0; i < 80; ++i) {
    NotionCertifier certifier(RandomWorld(rng, WorldShape{3, 2, 4}));
    const double eps = rng.Uniform();
    const double delta = 0.05 + 0.9 * rng.Uniform();
    for (Implication implication :
         {Implication::kDpToLmi, Implication::kMiToLmi, Implication::kTsToLmi,
          Implication::kLmlToLmi}) {
      verify(implication, certifier, {eps, delta});
    }
  }
  for (int i = 0; i < 150; ++i) {
    NotionCertifier certifier(NearlyConstantWorld(rng, 0.5 * rng.Uniform()));
    for (double eps : {0.02, 0.1, 0.2, 1.0 / 3}) {
      verify(Implication::kLmiToLss, certifier, {eps, 0.0});
    }
  }
  // Compression: element release (m = 1) on samples large enough for the
  // size condition, and the constant mechanism (m = 0).
  for (int n : {60, 80, 120}) {
    SampleSpace space = Space(4, n);
    for (double delta : {0.3, 0.5, 0.9}) {
      NotionCertifier certifier(*World::Create(
          space, *SamplePrior::Product(space, FiniteDist::Uniform(space.elements())),
          BuildElementRelease(space)));
      auto report = VerifyImplication(Implication::kCompressionToLss,
                                      certifier, {0.0, delta});
      if (report.ok()) {
        formula_gap = std::max(
            formula_gap,
            std::abs(report->transferred_eps -
                     11 * std::sqrt(std::log(2.0 * n / delta) / n)));
      }
      verify(Implication::kCompressionToLss, certifier, {0.0, delta});
    }
  }
  {
    SampleSpace space = Space(3, 2);
    NotionCertifier certifier(*World::Create(
        space, *SamplePrior::Product(space, FiniteDist::Uniform(space.elements())),
        BuildConstantMechanism(space)));
    verify(Implication::kCompressionToLss, certifier, {0.0, 0.1});
  }
  std::vector<std::string> counts;
  bool all_seen = true;
  for (Implication implication :
       {Implication::kDpToLmi, Implication::kMiToLmi, Implication::kTsToLmi,
        Implication::kLmlToLmi, Implication::kLmiToLss,
        Implication::kCompressionToLss}) {
    counts.push_back(absl::StrCat(std::string(ImplicationName(implication)),
                                  "=", evaluated[implication]));
    all_seen = all_seen && evaluated[implication] > 0;
  }
  return {failures == 0 && all_seen &&
              formula_gap <= kImplicationFormulaTolerance,
          absl::StrCat("instances ", absl::StrJoin(counts, " "), ", ",
                       failures, " failures, transferred-eps formula gap ",
                       Sci(formula_gap))};
}

World RandomValuedWorld(Rng& rng) {
  SampleSpace space = Space(2 + rng.UniformIndex(3),
                            1 + static_cast<int>(rng.UniformIndex(3)));
  return *World::Create(space, RandomPrior(rng, space),
                        RandomKernel(rng, space, 2 + rng.UniformIndex(4)));
}

LinearQuery RandomQuery(Rng& rng, std::size_t domain, double bound) {
  std::vector<double> values(domain);
  for (auto& v : values) v = bound * (2 * rng.Uniform() - 1);
  return *LinearQuery::Create(values, bound);
}

// 10. Expectation generalization, and overfitting by the loss-assessment
// query when the unstable mass is large.
Outcome ExpectationGeneralization() {
  Rng rng(1010);
  int applicable = 0;
  int failures = 0;
  for (int i = 0; i < 400; ++i) {
    World world = RandomValuedWorld(rng);
    const double bound = 0.5 + rng.Uniform();
    std::vector<LinearQuery> queries;
    for (std::size_t r = 0; r < world.kernel().response_count(); ++r) {
      queries.push_back(RandomQuery(rng, world.space().domain_size(), bound));
    }
    auto check = CheckExpectationGeneralization(world, queries,
                                                0.5 * rng.Uniform(),
                                                rng.Uniform());
    if (!check.ok()) return {false, std::string(check.status().message())};
    if (!check->applicable) continue;
    ++applicable;
    failures += !(check->lhs < check->bound);
  }
  int overfit = 0;
  int overfit_failures = 0;
  for (int i = 0; i < 200; ++i) {
    World world = RandomValuedWorld(rng);
    const double bound = 0.5 + rng.Uniform();
    auto check = CheckLossAssessmentOverfit(world, bound, 0.02 + 0.2 * rng.Uniform(),
                                            0.2 * rng.Uniform());
    if (!check.ok()) return {false, std::string(check.status().message())};
    if (!check->applicable) continue;
    ++overfit;
    overfit_failures += !(check->lhs > check->bound);
  }
  return {failures == 0 && applicable >= 50 && overfit_failures == 0 &&
              overfit >= 20,
          absl::StrCat(applicable, " applicable instances with lhs < bound (",
                       failures, " failures); ", overfit,
                       " unstable instances with lhs > 2 eps bound delta (",
                       overfit_failures, " failures)")};
}

// 11. Monitor: exact answers overfit, Laplace answers do not.
Outcome MonitorDemonstration() {
  Stopwatch watch;
  const int n = 20;
  const int k = 20;
  const std::size_t domain = 19;
  const double bound = 1.0;
  SampleSpace space = Space(domain, n);
  SamplePrior prior =
      *SamplePrior::Product(space, FiniteDist::Uniform(space.elements()));
  MonitorOptions options;
  options.t = 50;
  options.replicates = 200;
  options.seed = 20260101;
  auto strategy = ReconstructThenOverfit(domain, n, k, bound);
  auto exact =
      RunMonitor(space, prior, StrategySampler(strategy, ExactAnswers(), k),
                 options);
  if (!exact.ok()) return {false, std::string(exact.status().message())};
  NoiseSpec laplace{NoiseFamily::kLaplace, 0.2, 0.05, 2.5};
  auto noisy_answers = NoisyAnswers(laplace, bound);
  if (!noisy_answers.ok()) {
    return {false, std::string(noisy_answers.status().message())};
  }
  auto noisy = RunMonitor(space, prior,
                          StrategySampler(strategy, *noisy_answers, k), options);
  if (!noisy.ok()) return {false, std::string(noisy.status().message())};
  const double seconds = watch.Seconds();
  const double difference =
      exact->distribution_error->mean - exact->sample_error->mean;
  const Estimate& gap = exact->expectation_gap;
  const Estimate& noisy_gap = noisy->expectation_gap;
  const bool pass = difference >= 0.3 * bound && gap.ci_low > 0.0 &&
                    noisy_gap.ci_low <= 0.1 * bound &&
                    seconds < kMonitorSeconds;
  return {pass,
          absl::StrCat("exact: distribution - sample error ",
                       FormatNumber(difference), " (CI [", Sci(gap.ci_low),
                       ", ", Sci(gap.ci_high), "]); Laplace b=0.2: gap CI [",
                       Sci(noisy_gap.ci_low), ", ", Sci(noisy_gap.ci_high),
                       "]; ", absl::StrFormat("%.2f", seconds), " s")};
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// 12. Every shipped scenario gives byte-identical reports on a second run.
Outcome Determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "stability_lab_acceptance";
  fs::remove_all(root);
  int scenarios = 0;
  int files = 0;
  std::vector<std::string> mismatched;
  for (const auto& entry : fs::directory_iterator(STABILITY_LAB_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const std::string name = entry.path().stem().string();
    ++scenarios;
    for (const char* copy : {"a", "b"}) {
      for (const char* command : {"certify", "experiment"}) {
        CommandOptions options;
        options.command = command;
        options.scenario_path = entry.path().string();
        options.out_dir = (root / copy / name).string();
        std::ostringstream log;
        RunCommand(options, log);
      }
    }
    if (!fs::exists(root / "a" / name)) {
      mismatched.push_back(name + " (no output)");
      continue;
    }
    for (const auto& file : fs::directory_iterator(root / "a" / name)) {
      ++files;
      const fs::path other = root / "b" / name / file.path().filename();
      if (ReadFile(file.path()) != ReadFile(other)) {
        mismatched.push_back(file.path().filename().string());
      }
    }
  }
  fs::remove_all(root);
  return {mismatched.empty() && scenarios > 0,
          absl::StrCat(scenarios, " scenarios, ", files, " files compared",
                       mismatched.empty()
                           ? std::string()
                           : absl::StrCat(", mismatched: ",
                                          absl::StrJoin(mismatched, ", ")))};
}

}  // namespace
}  // namespace stability_lab

int main() {
  using stability_lab::Outcome;
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"bayes-consistency", stability_lab::BayesConsistency},
      {"certifier-vs-exhaustive", stability_lab::CertifierMatchesExhaustiveSearch},
      {"post-processing", stability_lab::PostProcessing},
      {"unstable-mass-bound", stability_lab::UnstableMassBound},
      {"loss-decomposition", stability_lab::LossDecomposition},
      {"linear-composition", stability_lab::LinearComposition},
      {"parity-separation", stability_lab::ParitySeparation},
      {"element-release-separation", stability_lab::ElementReleaseSeparation},
      {"implication-transfers", stability_lab::ImplicationTransfers},
      {"expectation-generalization", stability_lab::ExpectationGeneralization},
      {"monitor-demonstration", stability_lab::MonitorDemonstration},
      {"determinism", stability_lab::Determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Outcome outcome = criteria[i].run();
    failed += !outcome.pass;
    std::printf("%s %2zu %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
