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

#include "stability_lab/adaptivity.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "stability_lab/parallel.h"
#include "stability_lab/stability.h"

namespace stability_lab {
namespace {

constexpr double kCheckTolerance = 1e-9;

double HalfL1(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / 2;
}

// Element posterior of a tuple posterior: a uniformly chosen position.
std::vector<double> ElementPosterior(const SampleSpace& space,
                                     std::span<const double> posterior) {
  std::vector<double> out(space.domain_size(), 0.0);
  std::vector<std::size_t> tuple(space.n());
  const double share = 1.0 / space.n();
  for (std::size_t i = 0; i < posterior.size(); ++i) {
    if (posterior[i] == 0.0) continue;
    space.Decode(i, tuple);
    for (std::size_t x : tuple) out[x] += posterior[i] * share;
  }
  return out;
}

absl::Status ValidateRounds(const SampleSpace& space,
                            const std::vector<RoundMechanisms>& rounds) {
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    if (rounds[i].empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("round ", i + 1, " has no mechanisms"));
    }
    const OutcomeSetPtr& responses = rounds[i].begin()->second.responses();
    for (const auto& [query, kernel] : rounds[i]) {
      if (!kernel.CompatibleWith(space)) {
        return absl::InvalidArgumentError(
            absl::StrCat("mechanism for query '", query, "' in round ", i + 1,
                         " does not match the sample space"));
      }
      if (!SameOutcomes(kernel.responses(), responses)) {
        return absl::InvalidArgumentError(
            absl::StrCat("mechanisms in round ", i + 1,
                         " must share one response set; '", query,
                         "' differs"));
      }
    }
  }
  return absl::OkStatus();
}

struct Expansion {
  absl::Status status;
  std::vector<ViewNode> children;
};

Expansion Expand(const AdaptiveRun& run, const Analyst& analyst,
                 std::size_t index) {
  const ViewNode& node = run.nodes[index];
  Expansion out;
  auto query = analyst.Choose(node.coin, node.responses);
  if (!query.ok()) {
    out.status = query.status();
    return out;
  }
  const RoundMechanisms& round = run.rounds[node.depth];
  auto it = round.find(*query);
  if (it == round.end()) {
    out.status = absl::InvalidArgumentError(
        absl::StrCat("unknown query '", *query, "' in round ", node.depth + 1,
                     " at view '", run.ViewLabel(node), "'"));
    return out;
  }
  const MechanismKernel& kernel = it->second;
  const SampleSpace& space = run.space;
  const std::size_t width = kernel.response_count();
  const std::size_t count = node.posterior.size();
  std::vector<double> joint(width * count, 0.0);
  std::vector<double> conditional(width, 0.0);
  std::vector<std::size_t> tuple(space.n());
  std::vector<double> scratch;
  for (std::size_t s = 0; s < count; ++s) {
    const double w = node.posterior[s];
    if (w == 0.0) continue;
    space.Decode(s, tuple);
    auto row = kernel.Row(s, tuple, scratch);
    for (std::size_t r = 0; r < width; ++r) {
      joint[r * count + s] = node.mass * w * row[r];
      conditional[r] += w * row[r];
    }
  }
  for (std::size_t r = 0; r < width; ++r) {
    std::span<const double> column(joint.data() + r * count, count);
    double mass = 0.0;
    for (double v : column) mass += v;
    if (!(mass > 0.0)) continue;
    ViewNode child;
    child.parent = index;
    child.depth = node.depth + 1;
    child.coin = node.coin;
    child.responses = node.responses;
    child.responses.push_back(r);
    child.query = *query;
    child.mass = mass;
    child.conditional = conditional[r];
    child.posterior.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
      child.posterior[s] = column[s] / mass;
    }
    child.element_posterior = ElementPosterior(space, child.posterior);
    child.loss =
        HalfL1(child.element_posterior, run.element_marginal.weights());
    child.step_loss = HalfL1(child.element_posterior, node.element_posterior);
    out.children.push_back(std::move(child));
  }
  return out;
}

// LSS delta and expected loss of `kernel` under a posterior prior.
struct RoundCertificate {
  double delta = 0.0;
  double expected_loss = 0.0;
};

absl::StatusOr<RoundCertificate> CertifyRound(const AdaptiveRun& run,
                                              const std::vector<double>& prior,
                                              const MechanismKernel& kernel,
                                              double eps) {
  auto explicit_prior = SamplePrior::Explicit(run.space, prior);
  if (!explicit_prior.ok()) return explicit_prior.status();
  auto world = World::Create(run.space, *explicit_prior, kernel, run.budget);
  if (!world.ok()) return world.status();
  auto induced = Induce(*world);
  if (!induced.ok()) return induced.status();
  auto profile = ComputeLossProfile(*induced);
  if (!profile.ok()) return profile.status();
  auto lss = CertifyLss(*profile, induced->marginal_r, eps);
  if (!lss.ok()) return lss.status();
  RoundCertificate out;
  out.delta = lss->delta_star;
  for (std::size_t r = 0; r < profile->per_response.size(); ++r) {
    out.expected_loss +=
        induced->marginal_r[r] * profile->per_response[r].value_or(0.0);
  }
  return out;
}

absl::Status ValidateParams(std::span<const RoundParams> rounds,
                            bool need_positive_eps) {
  if (rounds.empty()) {
    return absl::InvalidArgumentError("composition needs at least one round");
  }
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const RoundParams& p = rounds[i];
    for (double v : {p.eps, p.delta, p.alpha}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        return absl::InvalidArgumentError(absl::StrCat(
            "round ", i + 1, " parameters must lie in [0, 1], got ", v));
      }
    }
    if (need_positive_eps && !(p.eps > 0.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("round ", i + 1, " needs eps > 0"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<CompositionCheck> CheckComposition(
    const AdaptiveRun& run, std::span<const RoundParams> params,
    const CompositionBound& bound, bool check_alpha) {
  if (params.size() != run.rounds.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("got parameters for ", params.size(),
                     " rounds but the run has ", run.rounds.size()));
  }
  CompositionCheck check;
  check.bound = bound;
  check.premises_hold = true;
  for (std::size_t i = 0; i < run.rounds.size(); ++i) {
    RoundPremise premise;
    premise.round = static_cast<int>(i) + 1;
    for (std::size_t v = 0; v < run.nodes.size(); ++v) {
      const ViewNode& node = run.nodes[v];
      if (node.depth != static_cast<int>(i)) continue;
      for (const auto& [query, kernel] : run.rounds[i]) {
        auto cert = CertifyRound(run, node.posterior, kernel, params[i].eps);
        if (!cert.ok()) return cert.status();
        ++premise.posteriors_checked;
        if (premise.posteriors_checked == 1 ||
            cert->delta > premise.worst_delta) {
          premise.worst_delta = cert->delta;
          premise.worst_node = v;
          premise.worst_query = query;
        }
        premise.worst_expected_loss =
            std::max(premise.worst_expected_loss, cert->expected_loss);
      }
    }
    premise.holds = premise.worst_delta <= params[i].delta + kCheckTolerance;
    if (check_alpha) {
      premise.holds = premise.holds && premise.worst_expected_loss <=
                                           params[i].alpha + kCheckTolerance;
    }
    check.premises_hold = check.premises_hold && premise.holds;
    check.premises.push_back(std::move(premise));
  }
  const LossProfile profile = ViewLossProfile(run);
  auto lss = CertifyLss(profile, run.view_dist, bound.eps);
  if (!lss.ok()) return lss.status();
  check.end_to_end_delta = lss->delta_star;
  check.pass = !check.premises_hold ||
               check.end_to_end_delta <= bound.delta + kCheckTolerance;
  return check;
}

}  // namespace

Analyst Analyst::Deterministic(Strategy strategy) {
  return Analyst(*FiniteDist::Create(*OutcomeSet::FromLabels({"-"}), {1.0}),
                 std::move(strategy));
}

Analyst Analyst::Randomized(FiniteDist coins, Strategy strategy) {
  return Analyst(std::move(coins), std::move(strategy));
}

Analyst Analyst::FromTable(FiniteDist coins, DecisionTable table,
                           std::vector<OutcomeSetPtr> round_responses) {
  OutcomeSetPtr coin_set = coins.outcomes();
  Strategy strategy = [table = std::move(table),
                       round_responses = std::move(round_responses),
                       coin_set](std::size_t coin,
                                 std::span<const std::size_t> responses)
      -> absl::StatusOr<std::string> {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < responses.size(); ++i) {
      labels.push_back(round_responses[i]->label(responses[i]));
    }
    auto it = table.find({coin_set->label(coin), labels});
    if (it == table.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "analyst table has no entry for coin '", coin_set->label(coin),
          "' and responses [", absl::StrJoin(labels, ", "), "]"));
    }
    return it->second;
  };
  return Analyst(std::move(coins), std::move(strategy));
}

std::string AdaptiveRun::ViewLabel(const ViewNode& node) const {
  std::vector<std::string> parts;
  if (coins.size() > 1) parts.push_back(coins.outcomes()->label(node.coin));
  for (std::size_t i = 0; i < node.responses.size(); ++i) {
    parts.push_back(
        rounds[i].begin()->second.responses()->label(node.responses[i]));
  }
  return absl::StrJoin(parts, "/");
}

absl::StatusOr<AdaptiveRun> RunAdaptive(const SampleSpace& space,
                                        const SamplePrior& prior,
                                        const Analyst& analyst,
                                        std::vector<RoundMechanisms> rounds,
                                        EnumerationBudget budget) {
  if (auto s = ValidateRounds(space, rounds); !s.ok()) return s;
  const auto count = space.tuple_count();
  if (!count.has_value() || *count > budget.max_tuples) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "enumeration budget exceeded: ", space.tuple_count_estimate(),
        " tuples exceeds the cap of ", budget.max_tuples));
  }
  std::vector<double> weights(*count);
  for (std::size_t i = 0; i < *count; ++i) weights[i] = prior.Weight(space, i);
  auto marginal = FiniteDist::Create(space.elements(),
                                     ElementPosterior(space, weights));
  if (!marginal.ok()) return marginal.status();

  AdaptiveRun run{space,
                  prior,
                  analyst.coins(),
                  std::move(rounds),
                  budget,
                  *marginal,
                  {},
                  {},
                  analyst.coins()};
  for (std::size_t c = 0; c < run.coins.size(); ++c) {
    if (!(run.coins[c] > 0.0)) continue;
    ViewNode node;
    node.coin = c;
    node.mass = run.coins[c];
    node.conditional = run.coins[c];
    node.posterior = weights;
    node.element_posterior.assign(marginal->weights().begin(),
                                  marginal->weights().end());
    run.nodes.push_back(std::move(node));
  }
  const std::size_t max_nodes = budget.max_cells / *count;
  std::size_t begin = 0;
  for (int depth = 0; depth < run.k(); ++depth) {
    const std::size_t end = run.nodes.size();
    std::vector<Expansion> expansions(end - begin);
    ParallelForChunks(end - begin, 1,
                      [&](std::size_t, std::size_t lo, std::size_t hi) {
                        for (std::size_t i = lo; i < hi; ++i) {
                          expansions[i] = Expand(run, analyst, begin + i);
                        }
                      });
    for (std::size_t i = 0; i < expansions.size(); ++i) {
      if (!expansions[i].status.ok()) return expansions[i].status;
      run.nodes[begin + i].next_query =
          expansions[i].children.empty() ? ""
                                         : expansions[i].children[0].query;
      for (ViewNode& child : expansions[i].children) {
        if (run.nodes.size() >= max_nodes) {
          return absl::ResourceExhaustedError(absl::StrCat(
              "view enumeration exceeds the cell cap of ", budget.max_cells,
              " (", run.nodes.size(), " views x ", *count, " tuples)"));
        }
        run.nodes.push_back(std::move(child));
      }
    }
    begin = end;
  }
  std::vector<std::string> labels;
  std::vector<double> masses;
  for (std::size_t i = begin; i < run.nodes.size(); ++i) {
    run.leaves.push_back(i);
    labels.push_back(run.ViewLabel(run.nodes[i]));
    masses.push_back(run.nodes[i].mass);
  }
  auto views = OutcomeSet::FromLabels(labels);
  if (!views.ok()) views = OutcomeSet::Range(labels.size());
  auto view_dist = FiniteDist::Create(*views, std::move(masses));
  if (!view_dist.ok()) return view_dist.status();
  run.view_dist = *std::move(view_dist);
  return run;
}

LossProfile ViewLossProfile(const AdaptiveRun& run) {
  LossProfile profile;
  for (std::size_t leaf : run.leaves) {
    const ViewNode& node = run.nodes[leaf];
    profile.per_response.push_back(node.loss);
    std::vector<std::size_t> positive;
    for (std::size_t x = 0; x < node.element_posterior.size(); ++x) {
      if (node.element_posterior[x] > run.element_marginal[x]) {
        positive.push_back(x);
      }
    }
    profile.positive_sets.push_back(std::move(positive));
  }
  return profile;
}

absl::StatusOr<World> AsWorld(const AdaptiveRun& run) {
  const std::size_t count = *run.space.tuple_count();
  const std::size_t width = run.leaves.size();
  if (count > run.budget.max_cells / std::max<std::size_t>(width, 1)) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "enumeration budget exceeded: ", count, " tuples x ", width,
        " views exceeds the cell cap of ", run.budget.max_cells));
  }
  std::vector<double> rows(count * width, 0.0);
  std::vector<bool> defined(count, false);
  for (std::size_t s = 0; s < count; ++s) {
    const double p = run.prior.Weight(run.space, s);
    if (!(p > 0.0)) continue;
    defined[s] = true;
    for (std::size_t v = 0; v < width; ++v) {
      const ViewNode& leaf = run.nodes[run.leaves[v]];
      rows[s * width + v] = leaf.mass * leaf.posterior[s] / p;
    }
  }
  auto kernel = MechanismKernel::Dense(run.space, run.view_dist.outcomes(),
                                       std::move(rows), std::move(defined));
  if (!kernel.ok()) return kernel.status();
  return World::Create(run.space, run.prior, *std::move(kernel), run.budget);
}

absl::StatusOr<InducedDistributions> AsInduced(const AdaptiveRun& run) {
  auto world = AsWorld(run);
  if (!world.ok()) return world.status();
  return Induce(*world);
}

absl::StatusOr<DecompositionCheck> CheckViewLossDecomposition(
    const AdaptiveRun& run) {
  if (run.k() < 1) {
    return absl::InvalidArgumentError(
        "the loss decomposition needs at least one round");
  }
  DecompositionCheck check;
  for (const ViewNode& node : run.nodes) {
    if (node.depth == 0) continue;
    const ViewNode& parent = run.nodes[node.parent];
    check.product_residual =
        std::max(check.product_residual,
                 std::abs(node.mass - parent.mass * node.conditional));
    check.loss_excess = std::max(
        check.loss_excess, node.loss - parent.loss - node.step_loss);
  }
  double total = 0.0;
  for (std::size_t leaf : run.leaves) total += run.nodes[leaf].mass;
  check.mass_residual = std::abs(total - 1.0);
  check.max_violation = std::max(
      {check.product_residual, check.loss_excess, check.mass_residual});
  check.pass = check.max_violation <= kCheckTolerance;
  return check;
}

absl::StatusOr<CompositionBound> LinearCompositionBound(
    std::span<const RoundParams> rounds) {
  if (auto s = ValidateParams(rounds, false); !s.ok()) return s;
  CompositionBound bound;
  for (const RoundParams& p : rounds) {
    bound.eps += p.eps;
    bound.delta += p.delta;
  }
  return bound;
}

absl::StatusOr<CompositionBound> AdvancedCompositionBound(
    std::span<const RoundParams> rounds, double delta_prime) {
  if (!(delta_prime > 0.0 && delta_prime <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta' must lie in (0, 1], got ", delta_prime));
  }
  if (auto s = ValidateParams(rounds, true); !s.ok()) return s;
  double squares = 0.0;
  double alphas = 0.0;
  CompositionBound bound;
  bound.delta = delta_prime;
  for (const RoundParams& p : rounds) {
    squares += p.eps * p.eps;
    alphas += p.alpha;
    bound.delta += p.delta / p.eps;
  }
  bound.eps = std::sqrt(8 * std::log(1 / delta_prime) * squares) + alphas;
  return bound;
}

absl::StatusOr<CompositionCheck> CheckLinearComposition(
    const AdaptiveRun& run, std::span<const RoundParams> params) {
  auto bound = LinearCompositionBound(params);
  if (!bound.ok()) return bound.status();
  return CheckComposition(run, params, *bound, false);
}

absl::StatusOr<CompositionCheck> CheckAdvancedComposition(
    const AdaptiveRun& run, std::span<const RoundParams> params,
    double delta_prime) {
  auto bound = AdvancedCompositionBound(params, delta_prime);
  if (!bound.ok()) return bound.status();
  return CheckComposition(run, params, *bound, true);
}

}  // namespace stability_lab
