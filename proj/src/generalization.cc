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

#include "stability_lab/generalization.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <tuple>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "stability_lab/parallel.h"
#include "stability_lab/stability.h"

namespace stability_lab {
namespace {

constexpr double kTieTolerance = 1e-12;
constexpr std::size_t kMonteCarloChunk = 1024;

absl::Status CheckUnit(const char* name, double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat(name, " must lie in [0, 1], got ", value));
  }
  return absl::OkStatus();
}

absl::Status CheckQuery(const LinearQuery& query, const SampleSpace& space) {
  if (query.domain_size() != space.domain_size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("query is defined on ", query.domain_size(),
                     " elements but the domain has ", space.domain_size()));
  }
  return absl::OkStatus();
}

std::size_t TupleIndex(const SampleSpace& space,
                       std::span<const std::size_t> tuple) {
  return space.tuple_count().has_value() ? space.Encode(tuple) : 0;
}

LinearQuery AssessmentQuery(std::span<const double> prior,
                            std::span<const double> posterior,
                            double delta_bound) {
  std::vector<double> values(prior.size());
  for (std::size_t x = 0; x < prior.size(); ++x) {
    values[x] =
        prior[x] > posterior[x] + kTieTolerance ? delta_bound : -delta_bound;
  }
  return *LinearQuery::Create(std::move(values), delta_bound);
}

struct Means {
  double population = 0.0;
  double sample = 0.0;
};

// E[Q'(D)] = sum_r D(r) q_r(D) and E[Q'(S)] = sum_{x,r} D(x, r) q_r(x).
Means ExpectedValues(const InducedDistributions& induced,
                     std::span<const LinearQuery> queries) {
  Means out;
  const JointDist& joint = induced.joint_elems;
  for (std::size_t r = 0; r < queries.size(); ++r) {
    double population = 0.0;
    for (std::size_t x = 0; x < joint.rows(); ++x) {
      population += induced.element_marginal[x] * queries[r](x);
      out.sample += joint.at(x, r) * queries[r](x);
    }
    out.population += induced.marginal_r[r] * population;
  }
  return out;
}

double MassAbove(const LossProfile& profile, const FiniteDist& marginal_r,
                 double eps) {
  double mass = 0.0;
  for (std::size_t r = 0; r < profile.per_response.size(); ++r) {
    if (profile.per_response[r].has_value() && *profile.per_response[r] > eps) {
      mass += marginal_r[r];
    }
  }
  return mass;
}

absl::StatusOr<double> MaxDeltaBound(const SampleSpace& space,
                                     std::span<const LinearQuery> queries) {
  double bound = 0.0;
  for (const LinearQuery& q : queries) {
    if (auto s = CheckQuery(q, space); !s.ok()) return s;
    bound = std::max(bound, q.delta_bound());
  }
  return bound;
}

struct ExpectationInputs {
  InducedDistributions induced;
  LossProfile profile;
  double delta_bound = 0.0;
};

absl::StatusOr<ExpectationInputs> PrepareExpectation(
    const World& world, std::span<const LinearQuery> response_queries,
    double eps, double delta) {
  if (auto s = CheckUnit("eps", eps); !s.ok()) return s;
  if (auto s = CheckUnit("delta", delta); !s.ok()) return s;
  if (response_queries.size() != world.kernel().response_count()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "got ", response_queries.size(), " response queries for ",
        world.kernel().response_count(), " responses"));
  }
  auto bound = MaxDeltaBound(world.space(), response_queries);
  if (!bound.ok()) return bound.status();
  auto induced = Induce(world);
  if (!induced.ok()) return induced.status();
  auto profile = ComputeLossProfile(*induced);
  if (!profile.ok()) return profile.status();
  return ExpectationInputs{*std::move(induced), *std::move(profile), *bound};
}

// A view's round-by-round (query id, response value), from round 1.
struct PathRound {
  const std::string* id;
  double value;
};

absl::StatusOr<std::vector<PathRound>> ViewPath(const AdaptiveRun& run,
                                                const ViewNode& leaf) {
  std::vector<PathRound> path(leaf.depth);
  const ViewNode* node = &leaf;
  while (node->depth > 0) {
    const int round = node->depth - 1;
    const MechanismKernel& kernel = run.rounds[round].at(node->query);
    if (!kernel.response_values().has_value()) {
      return absl::InvalidArgumentError(
          absl::StrCat("mechanism for query '", node->query, "' in round ",
                       round + 1, " has no response values"));
    }
    path[round] = {&node->query,
                   (*kernel.response_values())[leaf.responses[round]]};
    node = &run.nodes[node->parent];
  }
  return path;
}

absl::StatusOr<const LinearQuery*> LookupQuery(const QueryTable& queries,
                                               const std::string& id,
                                               const SampleSpace& space) {
  auto it = queries.find(id);
  if (it == queries.end()) {
    return absl::InvalidArgumentError(
        absl::StrCat("no linear query for query id '", id, "'"));
  }
  if (auto s = CheckQuery(it->second, space); !s.ok()) return s;
  return &it->second;
}

// Per-round queries and their population values along a view.
struct ResolvedPath {
  std::vector<const LinearQuery*> queries;
  std::vector<double> values;
  std::vector<double> population;
  std::vector<std::string> ids;
};

absl::StatusOr<ResolvedPath> ResolvePath(const AdaptiveRun& run,
                                         const ViewNode& leaf,
                                         const QueryTable& queries) {
  auto path = ViewPath(run, leaf);
  if (!path.ok()) return path.status();
  ResolvedPath out;
  for (const PathRound& round : *path) {
    auto query = LookupQuery(queries, *round.id, run.space);
    if (!query.ok()) return query.status();
    out.queries.push_back(*query);
    out.values.push_back(round.value);
    out.population.push_back(*(*query)->Population(run.element_marginal));
    out.ids.push_back(*round.id);
  }
  return out;
}

double MaxSampleError(const ResolvedPath& path,
                      std::span<const std::size_t> tuple) {
  double worst = 0.0;
  for (std::size_t i = 0; i < path.queries.size(); ++i) {
    worst = std::max(worst,
                     std::abs(path.values[i] - path.queries[i]->Empirical(tuple)));
  }
  return worst;
}

double MaxDistributionError(const ResolvedPath& path) {
  double worst = 0.0;
  for (std::size_t i = 0; i < path.values.size(); ++i) {
    worst = std::max(worst, std::abs(path.values[i] - path.population[i]));
  }
  return worst;
}

bool Fails(double error, double eps) { return error > eps + kAccuracySlack; }

// The first monitor's per-copy outcome after the sign correction.
struct CopyOutcome {
  double score = 0.0;
  double population = 0.0;
  double response = 0.0;
  double empirical = 0.0;
  std::string id;
};

CopyOutcome Correct(double population, double response, double empirical,
                    std::string id) {
  CopyOutcome out;
  if (population < response) {
    population = -population;
    response = -response;
    empirical = -empirical;
  }
  out.score = population - response;
  out.population = population;
  out.response = response;
  out.empirical = empirical;
  out.id = std::move(id);
  return out;
}

Estimate ExactEstimate(double mean) {
  return Estimate{mean, 0.0, mean, mean};
}

absl::Status CheckExactCopies(int t) {
  if (t < 1 || t > 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("exact monitor expectations need t in {1, 2}, got ", t));
  }
  return absl::OkStatus();
}

absl::Status CheckMonitorOptions(const MonitorOptions& options) {
  if (options.t < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("monitor needs t >= 1, got ", options.t));
  }
  if (options.replicates < 1) {
    return absl::InvalidArgumentError("monitor needs at least one replicate");
  }
  return absl::OkStatus();
}

// Expectation of f(selected view) over t <= 2 independent views, where the
// selected copy has the larger score and ties go to the first copy.
template <typename Value>
double SelectedExpectation(const FiniteDist& views, int t,
                           std::span<const double> score, Value value) {
  double total = 0.0;
  for (std::size_t a = 0; a < views.size(); ++a) {
    if (t == 1) {
      total += views[a] * value(a);
      continue;
    }
    for (std::size_t b = 0; b < views.size(); ++b) {
      total += views[a] * views[b] * value(score[a] >= score[b] ? a : b);
    }
  }
  return total;
}

struct ReplicateResult {
  absl::Status status;
  std::vector<MonitorCopy> copies;
  double distribution_error = 0.0;
  double sample_error = 0.0;
  double gap = 0.0;
};

MonitorReport Collect(const MonitorOptions& options,
                      std::vector<ReplicateResult>& results) {
  MonitorReport report;
  report.t = options.t;
  report.replicates = options.replicates;
  report.seed = options.seed;
  std::vector<double> distribution, sample, gap;
  for (ReplicateResult& result : results) {
    distribution.push_back(result.distribution_error);
    sample.push_back(result.sample_error);
    gap.push_back(result.gap);
    for (MonitorCopy& copy : result.copies) {
      report.copies.push_back(std::move(copy));
    }
  }
  report.distribution_error = MakeEstimate(distribution);
  report.sample_error = MakeEstimate(sample);
  report.expectation_gap = MakeEstimate(gap);
  return report;
}

}  // namespace

absl::StatusOr<FiniteDist> ElementMarginal(const SampleSpace& space,
                                           const SamplePrior& prior) {
  if (prior.is_product()) return *prior.element_dist();
  std::vector<double> weights(space.domain_size(), 0.0);
  std::vector<std::size_t> tuple(space.n());
  const double share = 1.0 / space.n();
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    const double w = prior.Weight(space, i);
    if (w == 0.0) continue;
    space.Decode(i, tuple);
    for (std::size_t x : tuple) weights[x] += w * share;
  }
  return FiniteDist::Create(space.elements(), std::move(weights));
}

absl::StatusOr<double> PopulationValue(const LinearQuery& query,
                                       const World& world) {
  if (auto s = CheckQuery(query, world.space()); !s.ok()) return s;
  auto marginal = ElementMarginal(world.space(), world.prior());
  if (!marginal.ok()) return marginal.status();
  return query.Population(*marginal);
}

std::string_view AccuracyModeName(AccuracyMode mode) {
  return mode == AccuracyMode::kSample ? "sample" : "distribution";
}

absl::StatusOr<AccuracyReport> CertifyAccuracy(
    const World& world, const LinearQuery& query, double eps,
    AccuracyMode mode, const MonteCarloOptions& monte_carlo) {
  if (!(eps >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be non-negative, got ", eps));
  }
  const SampleSpace& space = world.space();
  const MechanismKernel& kernel = world.kernel();
  if (auto s = CheckQuery(query, space); !s.ok()) return s;
  if (!kernel.response_values().has_value()) {
    return absl::InvalidArgumentError(
        "accuracy needs a mechanism with real-valued responses");
  }
  const std::vector<double>& values = *kernel.response_values();
  auto population = PopulationValue(query, world);
  if (!population.ok()) return population.status();
  AccuracyReport report;
  report.eps = eps;
  report.mode = mode;
  auto target = [&](std::span<const std::size_t> tuple) {
    return mode == AccuracyMode::kSample ? query.Empirical(tuple)
                                         : *population;
  };

  absl::Status enumerable = world.CheckEnumerable();
  if (enumerable.ok()) {
    const std::size_t count = *space.tuple_count();
    std::vector<double> partial(ChunkCount(count, kDefaultChunkSize), 0.0);
    ParallelForChunks(
        count, kDefaultChunkSize,
        [&](std::size_t chunk, std::size_t begin, std::size_t end) {
          std::vector<std::size_t> tuple(space.n());
          std::vector<double> scratch;
          double sum = 0.0;
          for (std::size_t i = begin; i < end; ++i) {
            space.Decode(i, tuple);
            const double w = world.prior().Weight(i, tuple);
            if (w == 0.0) continue;
            const double goal = target(tuple);
            auto row = kernel.Row(i, tuple, scratch);
            for (std::size_t r = 0; r < row.size(); ++r) {
              if (row[r] > 0.0 && Fails(std::abs(values[r] - goal), eps)) {
                sum += w * row[r];
              }
            }
          }
          partial[chunk] = sum;
        });
    for (double p : partial) report.delta_star += p;
    report.delta_star = std::min(1.0, report.delta_star);
    return report;
  }
  if (monte_carlo.samples == 0) return enumerable;

  const std::size_t samples = monte_carlo.samples;
  std::vector<std::size_t> failures(ChunkCount(samples, kMonteCarloChunk), 0);
  ParallelForChunks(
      samples, kMonteCarloChunk,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        Rng rng(DeriveSeed(monte_carlo.seed, chunk));
        std::vector<std::size_t> tuple(space.n());
        std::vector<double> scratch;
        for (std::size_t i = begin; i < end; ++i) {
          world.prior().Sample(space, rng, tuple);
          auto row = kernel.Row(TupleIndex(space, tuple), tuple, scratch);
          const std::size_t r = rng.Categorical(row);
          failures[chunk] += Fails(std::abs(values[r] - target(tuple)), eps);
        }
      });
  std::size_t total = 0;
  for (std::size_t f : failures) total += f;
  report.exact = false;
  report.samples = samples;
  report.delta_star = static_cast<double>(total) / samples;
  report.standard_error = std::sqrt(
      report.delta_star * (1.0 - report.delta_star) / samples);
  return report;
}

absl::StatusOr<AccuracyReport> CertifyAccuracy(const AdaptiveRun& run,
                                               const QueryTable& queries,
                                               double eps, AccuracyMode mode) {
  if (!(eps >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be non-negative, got ", eps));
  }
  AccuracyReport report;
  report.eps = eps;
  report.mode = mode;
  report.k = run.k();
  std::vector<std::size_t> tuple(run.space.n());
  for (std::size_t leaf_index : run.leaves) {
    const ViewNode& leaf = run.nodes[leaf_index];
    auto path = ResolvePath(run, leaf, queries);
    if (!path.ok()) return path.status();
    if (mode == AccuracyMode::kDistribution) {
      if (Fails(MaxDistributionError(*path), eps)) {
        report.delta_star += leaf.mass;
      }
      continue;
    }
    for (std::size_t s = 0; s < leaf.posterior.size(); ++s) {
      if (leaf.posterior[s] == 0.0) continue;
      run.space.Decode(s, tuple);
      if (Fails(MaxSampleError(*path, tuple), eps)) {
        report.delta_star += leaf.mass * leaf.posterior[s];
      }
    }
  }
  report.delta_star = std::min(1.0, report.delta_star);
  return report;
}

absl::StatusOr<ExpectationCheck> CheckExpectationGeneralization(
    const World& world, std::span<const LinearQuery> response_queries,
    double eps, double delta) {
  auto inputs = PrepareExpectation(world, response_queries, eps, delta);
  if (!inputs.ok()) return inputs.status();
  ExpectationCheck check;
  check.eps = eps;
  check.delta = delta;
  check.delta_bound = inputs->delta_bound;
  check.unstable_mass =
      MassAbove(inputs->profile, inputs->induced.marginal_r, eps);
  check.applicable = check.unstable_mass < delta;
  const Means means = ExpectedValues(inputs->induced, response_queries);
  check.population_mean = means.population;
  check.sample_mean = means.sample;
  check.lhs = std::abs(means.population - means.sample);
  check.bound = 2 * check.delta_bound * (eps + delta);
  check.pass = !check.applicable || check.lhs < check.bound;
  return check;
}

absl::StatusOr<ExpectationCheck> CheckStableExpectationGeneralization(
    const World& world, std::span<const LinearQuery> response_queries,
    double eps, double delta) {
  if (!(eps > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be positive, got ", eps));
  }
  auto inputs = PrepareExpectation(world, response_queries, eps, delta);
  if (!inputs.ok()) return inputs.status();
  auto lss = CertifyLss(inputs->profile, inputs->induced.marginal_r, eps);
  if (!lss.ok()) return lss.status();
  ExpectationCheck check;
  check.eps = eps;
  check.delta = delta;
  check.delta_bound = inputs->delta_bound;
  check.unstable_mass =
      MassAbove(inputs->profile, inputs->induced.marginal_r, 2 * eps);
  check.certified_delta = lss->delta_star;
  check.applicable = lss->delta_star <= delta;
  const Means means = ExpectedValues(inputs->induced, response_queries);
  check.population_mean = means.population;
  check.sample_mean = means.sample;
  check.lhs = std::abs(means.population - means.sample);
  check.bound = 2 * check.delta_bound * (2 * eps + delta / eps);
  check.pass = !check.applicable || check.lhs < check.bound;
  return check;
}

absl::StatusOr<LinearQuery> LossAssessmentQuery(
    const InducedDistributions& induced, std::size_t r, double delta_bound) {
  if (!(delta_bound > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta bound must be positive, got ", delta_bound));
  }
  if (r >= induced.posterior_elems.size()) {
    return absl::InvalidArgumentError(absl::StrCat("no response ", r));
  }
  if (!induced.posterior_elems[r].has_value()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "response ", r, " has zero mass, so its posterior is undefined"));
  }
  return AssessmentQuery(induced.element_marginal.weights(),
                         induced.posterior_elems[r]->weights(), delta_bound);
}

absl::StatusOr<OverfitCheck> CheckLossAssessmentOverfit(const World& world,
                                                        double delta_bound,
                                                        double eps,
                                                        double delta) {
  if (!(delta_bound > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta bound must be positive, got ", delta_bound));
  }
  if (auto s = CheckUnit("eps", eps); !s.ok()) return s;
  if (auto s = CheckUnit("delta", delta); !s.ok()) return s;
  auto induced = Induce(world);
  if (!induced.ok()) return induced.status();
  auto profile = ComputeLossProfile(*induced);
  if (!profile.ok()) return profile.status();
  std::vector<LinearQuery> queries;
  const std::size_t domain = world.space().domain_size();
  for (std::size_t r = 0; r < induced->marginal_r.size(); ++r) {
    if (induced->posterior_elems[r].has_value()) {
      queries.push_back(*LossAssessmentQuery(*induced, r, delta_bound));
    } else {
      queries.push_back(*LinearQuery::Create(
          std::vector<double>(domain, -delta_bound), delta_bound));
    }
  }
  OverfitCheck check;
  check.eps = eps;
  check.delta = delta;
  check.delta_bound = delta_bound;
  check.unstable_mass = MassAbove(*profile, induced->marginal_r, eps);
  check.applicable = check.unstable_mass > delta;
  const Means means = ExpectedValues(*induced, queries);
  check.lhs = std::abs(means.population - means.sample);
  check.bound = 2 * eps * delta_bound * delta;
  check.pass = !check.applicable || check.lhs > check.bound;
  return check;
}

absl::StatusOr<TranscriptSampler> TableSampler(
    const SampleSpace& space, Analyst analyst,
    std::vector<RoundMechanisms> rounds, QueryTable queries) {
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    for (const auto& [id, kernel] : rounds[i]) {
      if (!kernel.CompatibleWith(space)) {
        return absl::InvalidArgumentError(
            absl::StrCat("mechanism for query '", id, "' in round ", i + 1,
                         " does not match the sample space"));
      }
      if (!kernel.response_values().has_value()) {
        return absl::InvalidArgumentError(
            absl::StrCat("mechanism for query '", id, "' in round ", i + 1,
                         " has no response values"));
      }
      if (auto q = LookupQuery(queries, id, space); !q.ok()) return q.status();
    }
  }
  auto state = std::make_shared<const std::tuple<
      SampleSpace, Analyst, std::vector<RoundMechanisms>, QueryTable>>(
      space, std::move(analyst), std::move(rounds), std::move(queries));
  return TranscriptSampler(
      [state](std::span<const std::size_t> tuple,
              Rng& rng) -> absl::StatusOr<std::vector<AnsweredQuery>> {
        const auto& [space, analyst, rounds, queries] = *state;
        const std::size_t coin = rng.Categorical(analyst.coins().weights());
        const std::size_t index = TupleIndex(space, tuple);
        std::vector<std::size_t> responses;
        std::vector<AnsweredQuery> answered;
        std::vector<double> scratch;
        for (std::size_t i = 0; i < rounds.size(); ++i) {
          auto id = analyst.Choose(coin, responses);
          if (!id.ok()) return id.status();
          auto it = rounds[i].find(*id);
          if (it == rounds[i].end()) {
            return absl::InvalidArgumentError(absl::StrCat(
                "unknown query '", *id, "' in round ", i + 1));
          }
          auto row = it->second.Row(index, tuple, scratch);
          const std::size_t r = rng.Categorical(row);
          responses.push_back(r);
          answered.push_back({*id, queries.at(*id),
                              (*it->second.response_values())[r]});
        }
        return answered;
      });
}

TranscriptSampler StrategySampler(QueryStrategy strategy,
                                  QueryMechanism mechanism, int k) {
  return [strategy = std::move(strategy), mechanism = std::move(mechanism),
          k](std::span<const std::size_t> tuple,
             Rng& rng) -> absl::StatusOr<std::vector<AnsweredQuery>> {
    std::vector<AnsweredQuery> answered;
    for (int i = 0; i < k; ++i) {
      auto [id, query] = strategy(answered);
      const double response = mechanism(query, tuple, rng);
      answered.push_back({std::move(id), std::move(query), response});
    }
    return answered;
  };
}

QueryMechanism ExactAnswers() {
  return [](const LinearQuery& query, std::span<const std::size_t> tuple,
            Rng&) { return query.Empirical(tuple); };
}

absl::StatusOr<QueryMechanism> NoisyAnswers(const NoiseSpec& spec,
                                            double delta_bound) {
  if (spec.family == NoiseFamily::kRandomizedResponse) {
    return absl::InvalidArgumentError(
        "randomized response does not answer real-valued queries");
  }
  if (auto s = ValidateNoiseSpec(spec, delta_bound); !s.ok()) return s;
  auto grid = NoiseGrid(spec, delta_bound);
  if (!grid.ok()) return grid.status();
  auto points = std::make_shared<const std::vector<double>>(*std::move(grid));
  return QueryMechanism([spec, points](const LinearQuery& query,
                                       std::span<const std::size_t> tuple,
                                       Rng& rng) {
    const std::vector<double> row =
        DiscretizedNoiseRow(spec, *points, query.Empirical(tuple));
    return (*points)[rng.Categorical(row)];
  });
}

QueryMechanism ElementAnswers() {
  return [](const LinearQuery& query, std::span<const std::size_t> tuple,
            Rng& rng) { return query(tuple[rng.UniformIndex(tuple.size())]); };
}

QueryStrategy ReconstructThenOverfit(std::size_t domain_size, int n, int k,
                                     double delta_bound) {
  const double threshold = delta_bound / (2.0 * n);
  return [=](std::span<const AnsweredQuery> answered)
             -> std::pair<std::string, LinearQuery> {
    const std::size_t round = answered.size();
    if (static_cast<int>(round) + 1 < k) {
      const std::size_t x = round % domain_size;
      return {absl::StrCat("probe:", x),
              LinearQuery::Indicator(domain_size, x, delta_bound)};
    }
    std::vector<double> values(domain_size, -delta_bound);
    for (std::size_t j = 0; j < answered.size(); ++j) {
      if (answered[j].response > threshold) {
        values[j % domain_size] = delta_bound;
      }
    }
    return {"overfit", *LinearQuery::Create(std::move(values), delta_bound)};
  };
}

Estimate MakeEstimate(std::span<const double> values) {
  Estimate out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / values.size();
  if (values.size() > 1) {
    double squares = 0.0;
    for (double v : values) squares += (v - out.mean) * (v - out.mean);
    out.standard_error =
        std::sqrt(squares / (values.size() - 1) / values.size());
  }
  out.ci_low = out.mean - 1.96 * out.standard_error;
  out.ci_high = out.mean + 1.96 * out.standard_error;
  return out;
}

absl::StatusOr<MonitorReport> RunMonitor(const SampleSpace& space,
                                         const SamplePrior& prior,
                                         const TranscriptSampler& sampler,
                                         const MonitorOptions& options) {
  if (auto s = CheckMonitorOptions(options); !s.ok()) return s;
  auto marginal = ElementMarginal(space, prior);
  if (!marginal.ok()) return marginal.status();
  std::vector<ReplicateResult> results(options.replicates);
  ParallelForChunks(
      options.replicates, 1,
      [&](std::size_t replicate, std::size_t, std::size_t) {
        ReplicateResult& result = results[replicate];
        const std::uint64_t replicate_seed =
            DeriveSeed(options.seed, replicate);
        std::vector<CopyOutcome> outcomes;
        std::vector<std::size_t> tuple(space.n());
        for (int c = 0; c < options.t; ++c) {
          Rng rng(DeriveSeed(replicate_seed, c));
          prior.Sample(space, rng, tuple);
          auto transcript = sampler(tuple, rng);
          if (!transcript.ok()) {
            result.status = transcript.status();
            return;
          }
          if (transcript->empty()) {
            result.status =
                absl::InvalidArgumentError("monitor needs at least one round");
            return;
          }
          std::optional<CopyOutcome> best;
          for (const AnsweredQuery& a : *transcript) {
            auto population = a.query.Population(*marginal);
            if (!population.ok()) {
              result.status = population.status();
              return;
            }
            CopyOutcome outcome = Correct(*population, a.response,
                                          a.query.Empirical(tuple), a.id);
            if (!best.has_value() || outcome.score > best->score) {
              best = std::move(outcome);
            }
          }
          outcomes.push_back(*std::move(best));
        }
        std::size_t chosen = 0;
        for (std::size_t c = 1; c < outcomes.size(); ++c) {
          if (outcomes[c].score > outcomes[chosen].score) chosen = c;
        }
        for (std::size_t c = 0; c < outcomes.size(); ++c) {
          result.copies.push_back({replicate, static_cast<int>(c),
                                   outcomes[c].score, outcomes[c].id,
                                   c == chosen});
        }
        const CopyOutcome& o = outcomes[chosen];
        result.distribution_error = o.population - o.response;
        result.sample_error = o.empirical - o.response;
        result.gap = o.population - o.empirical;
      });
  for (const ReplicateResult& result : results) {
    if (!result.status.ok()) return result.status;
  }
  return Collect(options, results);
}

absl::StatusOr<MonitorReport> ExactMonitor(const AdaptiveRun& run,
                                           const QueryTable& queries, int t) {
  if (auto s = CheckExactCopies(t); !s.ok()) return s;
  if (run.k() < 1) {
    return absl::InvalidArgumentError("monitor needs at least one round");
  }
  const std::size_t views = run.leaves.size();
  std::vector<double> score(views), distribution(views), sample(views);
  for (std::size_t v = 0; v < views; ++v) {
    const ViewNode& leaf = run.nodes[run.leaves[v]];
    auto path = ResolvePath(run, leaf, queries);
    if (!path.ok()) return path.status();
    std::optional<CopyOutcome> best;
    for (std::size_t i = 0; i < path->queries.size(); ++i) {
      // E[q(S) | view] is q at the view's element posterior.
      double empirical = 0.0;
      for (std::size_t x = 0; x < leaf.element_posterior.size(); ++x) {
        empirical += leaf.element_posterior[x] * (*path->queries[i])(x);
      }
      CopyOutcome outcome = Correct(path->population[i], path->values[i],
                                    empirical, path->ids[i]);
      if (!best.has_value() || outcome.score > best->score) {
        best = std::move(outcome);
      }
    }
    score[v] = best->score;
    distribution[v] = best->population - best->response;
    sample[v] = best->empirical - best->response;
  }
  MonitorReport report;
  report.t = t;
  report.exact = true;
  const double dist = SelectedExpectation(
      run.view_dist, t, score, [&](std::size_t v) { return distribution[v]; });
  const double samp = SelectedExpectation(
      run.view_dist, t, score, [&](std::size_t v) { return sample[v]; });
  report.distribution_error = ExactEstimate(dist);
  report.sample_error = ExactEstimate(samp);
  report.expectation_gap = ExactEstimate(dist - samp);
  return report;
}

absl::StatusOr<MonitorReport> RunSecondMonitor(const AdaptiveRun& run,
                                               const QueryMechanism& final_answer,
                                               double delta_bound,
                                               const MonitorOptions& options) {
  if (auto s = CheckMonitorOptions(options); !s.ok()) return s;
  if (!(delta_bound > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta bound must be positive, got ", delta_bound));
  }
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  // children[node][r], and the depth-0 node for each coin.
  std::vector<std::vector<std::size_t>> children(run.nodes.size());
  std::vector<std::size_t> coin_root(run.coins.size(), kNone);
  std::vector<std::size_t> leaf_slot(run.nodes.size(), kNone);
  for (std::size_t i = 0; i < run.nodes.size(); ++i) {
    const ViewNode& node = run.nodes[i];
    if (node.depth == 0) {
      coin_root[node.coin] = i;
      continue;
    }
    auto& slots = children[node.parent];
    if (slots.empty()) {
      slots.assign(run.rounds[node.depth - 1].begin()->second.response_count(),
                   kNone);
    }
    slots[node.responses.back()] = i;
  }
  std::vector<LinearQuery> assessment;
  for (std::size_t v = 0; v < run.leaves.size(); ++v) {
    leaf_slot[run.leaves[v]] = v;
    assessment.push_back(
        AssessmentQuery(run.element_marginal.weights(),
                        run.nodes[run.leaves[v]].element_posterior,
                        delta_bound));
  }

  std::vector<ReplicateResult> results(options.replicates);
  ParallelForChunks(
      options.replicates, 1,
      [&](std::size_t replicate, std::size_t, std::size_t) {
        ReplicateResult& result = results[replicate];
        const std::uint64_t replicate_seed =
            DeriveSeed(options.seed, replicate);
        struct Outcome {
          double loss, population, response, empirical;
          std::size_t view;
        };
        std::vector<Outcome> outcomes;
        std::vector<std::size_t> tuple(run.space.n());
        std::vector<double> scratch;
        for (int c = 0; c < options.t; ++c) {
          Rng rng(DeriveSeed(replicate_seed, c));
          std::size_t node = coin_root[rng.Categorical(run.coins.weights())];
          run.prior.Sample(run.space, rng, tuple);
          const std::size_t index = run.space.Encode(tuple);
          for (int depth = 0; depth < run.k() && node != kNone; ++depth) {
            const MechanismKernel& kernel =
                run.rounds[depth].at(run.nodes[node].next_query);
            auto row = kernel.Row(index, tuple, scratch);
            node = children[node][rng.Categorical(row)];
          }
          if (node == kNone || leaf_slot[node] == kNone) {
            result.status = absl::InternalError(
                "sampled a view outside the enumerated run");
            return;
          }
          const std::size_t v = leaf_slot[node];
          const LinearQuery& q = assessment[v];
          outcomes.push_back({run.nodes[node].loss,
                              *q.Population(run.element_marginal),
                              final_answer(q, tuple, rng), q.Empirical(tuple),
                              v});
        }
        std::size_t chosen = 0;
        for (std::size_t c = 1; c < outcomes.size(); ++c) {
          if (outcomes[c].loss > outcomes[chosen].loss) chosen = c;
        }
        for (std::size_t c = 0; c < outcomes.size(); ++c) {
          result.copies.push_back(
              {replicate, static_cast<int>(c), outcomes[c].loss,
               run.ViewLabel(run.nodes[run.leaves[outcomes[c].view]]),
               c == chosen});
        }
        const Outcome& o = outcomes[chosen];
        result.distribution_error = o.population - o.response;
        result.sample_error = o.empirical - o.response;
        result.gap = o.population - o.empirical;
      });
  for (const ReplicateResult& result : results) {
    if (!result.status.ok()) return result.status;
  }
  return Collect(options, results);
}

absl::StatusOr<MonitorReport> ExactSecondMonitor(const AdaptiveRun& run,
                                                 double delta_bound, int t) {
  if (auto s = CheckExactCopies(t); !s.ok()) return s;
  if (!(delta_bound > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta bound must be positive, got ", delta_bound));
  }
  const std::size_t views = run.leaves.size();
  std::vector<double> loss(views), gap(views);
  for (std::size_t v = 0; v < views; ++v) {
    const ViewNode& leaf = run.nodes[run.leaves[v]];
    loss[v] = leaf.loss;
    LinearQuery q = AssessmentQuery(run.element_marginal.weights(),
                                    leaf.element_posterior, delta_bound);
    for (std::size_t x = 0; x < q.domain_size(); ++x) {
      gap[v] += (run.element_marginal[x] - leaf.element_posterior[x]) * q(x);
    }
  }
  MonitorReport report;
  report.t = t;
  report.exact = true;
  report.expectation_gap = ExactEstimate(SelectedExpectation(
      run.view_dist, t, loss, [&](std::size_t v) { return gap[v]; }));
  return report;
}

absl::StatusOr<SecondMonitorBound> SecondMonitorGapBound(
    const AdaptiveRun& run, double eps, double delta_bound, int t) {
  if (!(delta_bound > 0.0) || !(eps >= 0.0) || t < 1) {
    return absl::InvalidArgumentError(
        "need eps >= 0, a positive delta bound and t >= 1");
  }
  SecondMonitorBound out;
  for (std::size_t v = 0; v < run.leaves.size(); ++v) {
    if (run.nodes[run.leaves[v]].loss > eps / delta_bound) {
      out.unstable_mass += run.view_dist[v];
    }
  }
  out.gap_lower_bound =
      2 * eps * (1.0 - std::pow(1.0 - out.unstable_mass, t));
  return out;
}

absl::StatusOr<NecessityReport> CheckLssNecessity(
    const AdaptiveRun& run, const QueryTable& queries,
    const QueryKernelFactory& final_round, double eps, double delta,
    double delta_bound) {
  if (!(delta_bound > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta bound must be positive, got ", delta_bound));
  }
  if (!(eps > 0.0 && eps <= delta_bound)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must lie in (0, delta bound], got ", eps));
  }
  if (auto s = CheckUnit("delta", delta); !s.ok()) return s;
  NecessityReport report;
  report.eps = eps;
  report.delta = delta;
  report.delta_bound = delta_bound;
  auto lss = CertifyLss(ViewLossProfile(run), run.view_dist,
                        eps / delta_bound);
  if (!lss.ok()) return lss.status();
  report.lss_delta = lss->delta_star;
  report.lss_fails = lss->delta_star > delta;
  report.accuracy_eps = eps / 5;
  report.accuracy_delta = eps * delta / (5 * delta_bound);

  std::vector<std::size_t> tuple(run.space.n());
  std::vector<double> scratch;
  for (std::size_t leaf_index : run.leaves) {
    const ViewNode& leaf = run.nodes[leaf_index];
    auto path = ResolvePath(run, leaf, queries);
    if (!path.ok()) return path.status();
    const LinearQuery q = AssessmentQuery(run.element_marginal.weights(),
                                          leaf.element_posterior, delta_bound);
    auto kernel = final_round(q);
    if (!kernel.ok()) return kernel.status();
    if (!kernel->CompatibleWith(run.space) ||
        !kernel->response_values().has_value()) {
      return absl::InvalidArgumentError(
          "the extra round needs a real-valued mechanism on the sample space");
    }
    const std::vector<double>& values = *kernel->response_values();
    const double population = *q.Population(run.element_marginal);
    const double path_distribution = MaxDistributionError(*path);
    for (std::size_t s = 0; s < leaf.posterior.size(); ++s) {
      if (leaf.posterior[s] == 0.0) continue;
      run.space.Decode(s, tuple);
      const double weight = leaf.mass * leaf.posterior[s];
      const double path_sample = MaxSampleError(*path, tuple);
      const double empirical = q.Empirical(tuple);
      auto row = kernel->Row(s, tuple, scratch);
      for (std::size_t r = 0; r < row.size(); ++r) {
        if (row[r] == 0.0) continue;
        if (Fails(std::max(path_sample, std::abs(values[r] - empirical)),
                  report.accuracy_eps)) {
          report.sample_failure += weight * row[r];
        }
        if (Fails(std::max(path_distribution, std::abs(values[r] - population)),
                  report.accuracy_eps)) {
          report.distribution_failure += weight * row[r];
        }
      }
    }
  }
  report.sample_accurate = report.sample_failure <= report.accuracy_delta;
  report.distribution_accurate =
      report.distribution_failure <= report.accuracy_delta;
  report.pass = !report.lss_fails ||
                !(report.sample_accurate && report.distribution_accurate);
  return report;
}

}  // namespace stability_lab
