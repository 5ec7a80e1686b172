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

#include "stability_lab/notions.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>

#include "absl/strings/str_cat.h"
#include "stability_lab/mechanisms.h"
#include "stability_lab/parallel.h"
#include "stability_lab/probability.h"
#include "stability_lab/stability.h"

namespace stability_lab {
namespace {

// Slack for comparing a certified delta against a budget.
constexpr double kPassTolerance = 1e-9;
// A pair counts as distinguishable only beyond this margin over delta.
constexpr double kPairTolerance = 1e-12;

absl::Status CheckEps(double eps) {
  if (!(eps >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("eps must be non-negative, got ", eps));
  }
  return absl::OkStatus();
}

absl::Status CheckDelta(double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("delta must lie in [0, 1], got ", delta));
  }
  return absl::OkStatus();
}

struct PairMax {
  double value = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  bool found = false;
};

// Maximum of score(row(a), row(b)) over ordered pairs of tuples that differ
// in exactly one position. Ties keep the first pair in tuple order.
PairMax MaxOverNeighbours(
    const SampleSpace& space, std::size_t width, const std::vector<double>& rows,
    const std::function<double(std::span<const double>,
                               std::span<const double>)>& score) {
  const std::size_t count = *space.tuple_count();
  const std::size_t domain = space.domain_size();
  const int n = space.n();
  std::vector<std::size_t> stride(n, 1);
  for (int j = n - 2; j >= 0; --j) stride[j] = stride[j + 1] * domain;
  auto row = [&](std::size_t i) {
    return std::span<const double>(rows).subspan(i * width, width);
  };
  std::vector<PairMax> partial(ChunkCount(count, kDefaultChunkSize));
  ParallelForChunks(
      count, kDefaultChunkSize,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        PairMax best;
        std::vector<std::size_t> tuple(n);
        for (std::size_t i = begin; i < end; ++i) {
          space.Decode(i, tuple);
          for (int j = 0; j < n; ++j) {
            for (std::size_t x = 0; x < domain; ++x) {
              if (x == tuple[j]) continue;
              const std::size_t k = i - tuple[j] * stride[j] + x * stride[j];
              const double v = score(row(i), row(k));
              if (!best.found || v > best.value) best = {v, i, k, true};
            }
          }
        }
        partial[chunk] = best;
      });
  PairMax best;
  for (const PairMax& p : partial) {
    if (p.found && (!best.found || p.value > best.value)) best = p;
  }
  return best;
}

// Cells of the event that attains delta in the p-over-q direction.
void FillCellWitness(const JointDist& p, const JointDist& q, double eps,
                     NotionCertificate& cert) {
  const double scale = std::exp(eps);
  cert.witness.clear();
  cert.witness_size = 0;
  for (std::size_t l = 0; l < p.rows(); ++l) {
    for (std::size_t r = 0; r < p.cols(); ++r) {
      const double excess =
          q.at(l, r) > 0.0 ? p.at(l, r) - scale * q.at(l, r) : p.at(l, r);
      if (!(excess > 0.0)) continue;
      if (cert.witness.size() < kMaxWitnessItems) {
        cert.witness.push_back(
            absl::StrCat(p.left()->label(l), "|", p.right()->label(r)));
      }
      ++cert.witness_size;
    }
  }
}

NotionCertificate IndistinguishabilityCertificate(Notion notion,
                                                  const JointDist& joint,
                                                  const JointDist& product,
                                                  double eps) {
  NotionCertificate cert;
  cert.notion = notion;
  cert.eps = eps;
  const double forward =
      internal::MinDeltaForEps(joint.weights(), product.weights(), eps);
  const double reverse =
      internal::MinDeltaForEps(product.weights(), joint.weights(), eps);
  cert.joint_over_product = forward;
  cert.product_over_joint = reverse;
  cert.delta = std::max(forward, reverse);
  if (cert.delta > 0.0) {
    if (forward >= reverse) {
      FillCellWitness(joint, product, eps, cert);
    } else {
      FillCellWitness(product, joint, eps, cert);
    }
  }
  return cert;
}

double EpsilonFor(const JointDist& joint, const JointDist& product,
                  double delta, Direction direction) {
  const double forward =
      internal::MinEpsForDelta(joint.weights(), product.weights(), delta);
  if (direction == Direction::kJointOverProduct) return forward;
  return std::max(forward, internal::MinEpsForDelta(product.weights(),
                                                    joint.weights(), delta));
}

}  // namespace

std::string_view NotionName(Notion notion) {
  switch (notion) {
    case Notion::kDp:
      return "DP";
    case Notion::kMi:
      return "MI";
    case Notion::kLmi:
      return "LMI";
    case Notion::kTs:
      return "TS";
    case Notion::kMl:
      return "ML";
    case Notion::kLml:
      return "LML";
    case Notion::kLss:
      return "LSS";
  }
  return "?";
}

absl::StatusOr<const InducedDistributions*> NotionCertifier::Induced() {
  if (!induced_.has_value()) {
    auto induced = Induce(world_);
    if (!induced.ok()) return induced.status();
    induced_ = *std::move(induced);
  }
  return &*induced_;
}

absl::StatusOr<const JointDist*> NotionCertifier::ProductSets() {
  auto induced = Induced();
  if (!induced.ok()) return induced.status();
  if (!(*induced)->has_set_level()) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "set-level joint unavailable: ",
        world_.CheckEnumerable(world_.kernel().response_count()).message()));
  }
  if (!product_sets_.has_value()) {
    auto product = (*induced)->ProductSets();
    if (!product.ok()) return product.status();
    product_sets_ = *std::move(product);
  }
  return &*product_sets_;
}

absl::Status NotionCertifier::MaterializeRows() {
  if (rows_ready_) return absl::OkStatus();
  const std::size_t width = world_.kernel().response_count();
  if (auto s = world_.CheckEnumerable(width); !s.ok()) return s;
  const SampleSpace& space = world_.space();
  const std::size_t count = *space.tuple_count();
  for (std::size_t i = 0; i < count; ++i) {
    if (!world_.kernel().HasRow(i)) {
      std::vector<std::size_t> tuple(space.n());
      space.Decode(i, tuple);
      return absl::FailedPreconditionError(
          absl::StrCat("worst-case certification needs a kernel row for every "
                       "tuple; (",
                       space.TupleLabel(tuple), ") has none"));
    }
  }
  rows_.assign(count * width, 0.0);
  ParallelForChunks(count, kDefaultChunkSize,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      std::vector<std::size_t> tuple(space.n());
                      std::vector<double> scratch;
                      for (std::size_t i = begin; i < end; ++i) {
                        space.Decode(i, tuple);
                        auto row = world_.kernel().Row(i, tuple, scratch);
                        std::copy(row.begin(), row.end(),
                                  rows_.begin() + i * width);
                      }
                    });
  rows_ready_ = true;
  return absl::OkStatus();
}

absl::StatusOr<NotionCertificate> NotionCertifier::Dp(double eps) {
  if (auto s = CheckEps(eps); !s.ok()) return s;
  if (auto s = MaterializeRows(); !s.ok()) return s;
  const SampleSpace& space = world_.space();
  PairMax worst = MaxOverNeighbours(
      space, world_.kernel().response_count(), rows_,
      [eps](std::span<const double> p, std::span<const double> q) {
        return internal::MinDeltaForEps(p, q, eps);
      });
  NotionCertificate cert;
  cert.notion = Notion::kDp;
  cert.eps = eps;
  cert.delta = worst.value;
  if (worst.found && worst.value > 0.0) {
    std::vector<std::size_t> tuple(space.n());
    for (std::size_t index : {worst.a, worst.b}) {
      space.Decode(index, tuple);
      cert.witness.push_back(space.TupleLabel(tuple));
    }
    cert.witness_size = 2;
  }
  return cert;
}

absl::StatusOr<NotionCertificate> NotionCertifier::Mi(double eps) {
  if (auto s = CheckEps(eps); !s.ok()) return s;
  auto product = ProductSets();
  if (!product.ok()) return product.status();
  return IndistinguishabilityCertificate(Notion::kMi, *induced_->joint_sets,
                                         **product, eps);
}

absl::StatusOr<NotionCertificate> NotionCertifier::Lmi(double eps) {
  if (auto s = CheckEps(eps); !s.ok()) return s;
  auto induced = Induced();
  if (!induced.ok()) return induced.status();
  return IndistinguishabilityCertificate(Notion::kLmi, (*induced)->joint_elems,
                                         (*induced)->product_elems, eps);
}

absl::StatusOr<NotionCertificate> NotionCertifier::Ts(double eps,
                                                      double delta) {
  if (auto s = CheckEps(eps); !s.ok()) return s;
  if (auto s = CheckDelta(delta); !s.ok()) return s;
  const std::size_t width = world_.kernel().response_count();
  if (auto s = world_.CheckEnumerable(width); !s.ok()) return s;
  const SampleSpace& space = world_.space();
  std::vector<std::size_t> support;
  std::vector<double> weights;
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    const double w = world_.prior().Weight(space, i);
    if (w > 0.0) {
      support.push_back(i);
      weights.push_back(w);
    }
  }
  const std::size_t m = support.size();
  if (m > world_.budget().max_cells / std::max<std::size_t>(m, 1)) {
    return absl::ResourceExhaustedError(
        absl::StrCat("enumeration budget exceeded: ", m, "^2 sample pairs "
                     "exceeds the cell cap of ", world_.budget().max_cells));
  }
  std::vector<double> rows(m * width);
  {
    std::vector<std::size_t> tuple(space.n());
    std::vector<double> scratch;
    for (std::size_t a = 0; a < m; ++a) {
      space.Decode(support[a], tuple);
      auto row = world_.kernel().Row(support[a], tuple, scratch);
      std::copy(row.begin(), row.end(), rows.begin() + a * width);
    }
  }
  auto row = [&](std::size_t a) {
    return std::span<const double>(rows).subspan(a * width, width);
  };
  struct Partial {
    double eta = 0.0;
    bool found = false;
    std::size_t a = 0;
    std::size_t b = 0;
  };
  std::vector<Partial> partial(ChunkCount(m, kDefaultChunkSize / 16));
  ParallelForChunks(m, kDefaultChunkSize / 16,
                    [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                      Partial out;
                      for (std::size_t a = begin; a < end; ++a) {
                        for (std::size_t b = 0; b < m; ++b) {
                          if (internal::MinDeltaForEps(row(a), row(b), eps) <=
                              delta + kPairTolerance) {
                            continue;
                          }
                          out.eta += weights[a] * weights[b];
                          if (!out.found) out = {out.eta, true, a, b};
                        }
                      }
                      partial[chunk] = out;
                    });
  NotionCertificate cert;
  cert.notion = Notion::kTs;
  cert.eps = eps;
  cert.delta = delta;
  double eta = 0.0;
  const Partial* first = nullptr;
  for (const Partial& p : partial) {
    eta += p.eta;
    if (p.found && first == nullptr) first = &p;
  }
  cert.eta = std::min(1.0, eta);
  if (first != nullptr) {
    std::vector<std::size_t> tuple(space.n());
    for (std::size_t a : {first->a, first->b}) {
      space.Decode(support[a], tuple);
      cert.witness.push_back(space.TupleLabel(tuple));
    }
    cert.witness_size = 2;
  }
  return cert;
}

absl::StatusOr<NotionCertificate> NotionCertifier::Ml() {
  auto product = ProductSets();
  if (!product.ok()) return product.status();
  auto leakage = MaximalLeakage(*induced_->joint_sets);
  if (!leakage.ok()) return leakage.status();
  NotionCertificate cert;
  cert.notion = Notion::kMl;
  cert.leakage = *leakage;
  return cert;
}

absl::StatusOr<NotionCertificate> NotionCertifier::Lml() {
  auto induced = Induced();
  if (!induced.ok()) return induced.status();
  auto leakage = MaximalLeakage((*induced)->joint_elems);
  if (!leakage.ok()) return leakage.status();
  NotionCertificate cert;
  cert.notion = Notion::kLml;
  cert.leakage = *leakage;
  return cert;
}

absl::StatusOr<NotionCertificate> NotionCertifier::Lss(double eps) {
  if (auto s = CheckEps(eps); !s.ok()) return s;
  auto induced = Induced();
  if (!induced.ok()) return induced.status();
  auto lss = CertifyLss(**induced, eps);
  if (!lss.ok()) return lss.status();
  NotionCertificate cert;
  cert.notion = Notion::kLss;
  cert.eps = eps;
  cert.delta = lss->delta_star;
  cert.witness_size = lss->witness.size();
  const OutcomeSetPtr& responses = world_.kernel().responses();
  for (std::size_t r : lss->witness) {
    if (cert.witness.size() == kMaxWitnessItems) break;
    cert.witness.push_back(responses->label(r));
  }
  return cert;
}

absl::StatusOr<double> NotionCertifier::EpsilonAtDelta(Notion notion,
                                                       double delta,
                                                       Direction direction) {
  if (auto s = CheckDelta(delta); !s.ok()) return s;
  switch (notion) {
    case Notion::kDp: {
      if (auto s = MaterializeRows(); !s.ok()) return s;
      return MaxOverNeighbours(
                 world_.space(), world_.kernel().response_count(), rows_,
                 [delta](std::span<const double> p, std::span<const double> q) {
                   return internal::MinEpsForDelta(p, q, delta);
                 })
          .value;
    }
    case Notion::kMi: {
      auto product = ProductSets();
      if (!product.ok()) return product.status();
      return EpsilonFor(*induced_->joint_sets, **product, delta, direction);
    }
    case Notion::kLmi: {
      auto induced = Induced();
      if (!induced.ok()) return induced.status();
      return EpsilonFor((*induced)->joint_elems, (*induced)->product_elems,
                        delta, direction);
    }
    default:
      return absl::InvalidArgumentError(absl::StrCat(
          "no eps-at-delta search for ", std::string(NotionName(notion))));
  }
}

std::string_view ImplicationName(Implication implication) {
  switch (implication) {
    case Implication::kDpToLmi:
      return "dp-lmi";
    case Implication::kMiToLmi:
      return "mi-lmi";
    case Implication::kTsToLmi:
      return "ts-lmi";
    case Implication::kLmlToLmi:
      return "lml-lmi";
    case Implication::kLmiToLss:
      return "lmi-lss";
    case Implication::kCompressionToLss:
      return "cs-lss";
  }
  return "?";
}

absl::StatusOr<ImplicationReport> VerifyImplication(
    Implication implication, NotionCertifier& certifier,
    const ImplicationParams& params) {
  if (auto s = CheckEps(params.eps); !s.ok()) return s;
  if (auto s = CheckDelta(params.delta); !s.ok()) return s;
  const World& world = certifier.world();
  ImplicationReport report;
  report.implication = implication;

  absl::StatusOr<NotionCertificate> premise;
  switch (implication) {
    case Implication::kDpToLmi:
      if (!world.prior().is_product()) {
        return absl::FailedPreconditionError(
            "the DP transfer requires a product prior");
      }
      premise = certifier.Dp(params.eps);
      if (!premise.ok()) return premise.status();
      report.transferred_eps = params.eps;
      report.transferred_delta = premise->delta;
      break;
    case Implication::kMiToLmi:
      premise = certifier.Mi(params.eps);
      if (!premise.ok()) return premise.status();
      report.transferred_eps = params.eps;
      report.transferred_delta = premise->delta;
      break;
    case Implication::kTsToLmi:
      premise = certifier.Ts(params.eps, params.delta);
      if (!premise.ok()) return premise.status();
      report.transferred_eps = params.eps;
      report.transferred_delta = std::min(1.0, params.delta + 2 * *premise->eta);
      break;
    case Implication::kLmlToLmi:
      premise = certifier.Lml();
      if (!premise.ok()) return premise.status();
      // delta = 0 transfers to eps = +infinity.
      report.transferred_eps = *premise->leakage - std::log(params.delta);
      report.transferred_delta = params.delta;
      break;
    case Implication::kLmiToLss: {
      if (params.eps > 1.0 / 3) {
        return absl::FailedPreconditionError(
            absl::StrCat("the LMI transfer requires eps <= 1/3, got ",
                         params.eps));
      }
      premise = certifier.Lmi(params.eps);
      if (!premise.ok()) return premise.status();
      if (premise->delta > params.eps) {
        return absl::FailedPreconditionError(absl::StrCat(
            "the LMI transfer requires delta <= eps; certified delta ",
            premise->delta, " exceeds eps ", params.eps));
      }
      report.transferred_eps = std::expm1(params.eps) + params.eps;
      // delta <= eps forces delta = 0 when eps = 0.
      report.transferred_delta =
          params.eps > 0.0 ? premise->delta / params.eps : 0.0;
      break;
    }
    case Implication::kCompressionToLss: {
      if (!world.prior().is_product()) {
        return absl::FailedPreconditionError(
            "the compression transfer requires a product prior");
      }
      const std::optional<int> m = world.kernel().compression_size();
      if (!m.has_value()) {
        return absl::FailedPreconditionError(
            "the compression transfer requires a kernel built from a "
            "compression scheme");
      }
      const int n = world.space().n();
      if (*m > 0) {
        if (!(params.delta > 0.0)) {
          return absl::FailedPreconditionError(
              "the compression transfer requires delta > 0");
        }
        const double log_term = std::log(2.0 * n / params.delta);
        if (*m > n / (9 * log_term)) {
          return absl::FailedPreconditionError(absl::StrCat(
              "the compression transfer requires m <= n / (9 ln(2n/delta)) = ",
              n / (9 * log_term), ", got m = ", *m));
        }
        report.transferred_eps = 11 * std::sqrt(*m * log_term / n);
      }
      report.transferred_delta = params.delta;
      break;
    }
  }
  if (premise.ok()) report.premise = *std::move(premise);

  auto conclusion =
      implication == Implication::kLmiToLss ||
              implication == Implication::kCompressionToLss
          ? certifier.Lss(report.transferred_eps)
          : certifier.Lmi(report.transferred_eps);
  if (!conclusion.ok()) return conclusion.status();
  report.conclusion = *std::move(conclusion);
  report.conclusion_delta = implication == Implication::kLmlToLmi
                                ? *report.conclusion.joint_over_product
                                : report.conclusion.delta;
  report.pass =
      report.conclusion_delta <= report.transferred_delta + kPassTolerance;
  return report;
}

absl::StatusOr<ParitySeparationReport> RunParitySeparation(
    const ParitySeparationParams& params) {
  if (!(params.eps > 0.0 && params.eps <= 0.7)) {
    return absl::InvalidArgumentError(
        absl::StrCat("parity separation needs 0 < eps <= 0.7, got ",
                     params.eps));
  }
  // alpha = eps / 7 must pass for eps given in decimal.
  if (!(params.alpha >= 0.0 && params.alpha <= params.eps / 7 + 1e-12)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "parity separation needs 0 <= alpha <= eps / 7, got alpha = ",
        params.alpha));
  }
  if (params.n < 3) {
    return absl::InvalidArgumentError(
        absl::StrCat("parity separation needs n >= 3, got ", params.n));
  }
  auto space = SampleSpace::Create(OutcomeSet::Range(2), params.n);
  if (!space.ok()) return space.status();
  auto dist = FiniteDist::Bernoulli(0.5 + params.alpha);
  if (!dist.ok()) return dist.status();
  auto prior = SamplePrior::Product(*space, *dist);
  if (!prior.ok()) return prior.status();
  auto kernel = BuildParityMechanism(*space, {0, 1});
  if (!kernel.ok()) return kernel.status();
  auto world = World::Create(*space, *prior, *kernel);
  if (!world.ok()) return world.status();
  NotionCertifier certifier(*std::move(world));

  ParitySeparationReport report;
  report.params = params;
  auto lmi = certifier.Lmi(params.eps);
  if (!lmi.ok()) return lmi.status();
  auto mi = certifier.Mi(1.0);
  if (!mi.ok()) return mi.status();
  auto profile = ComputeLossProfile(**certifier.Induced());
  if (!profile.ok()) return profile.status();
  report.lmi_delta = lmi->delta;
  report.mi_delta_at_one = mi->delta;
  for (const auto& loss : profile->per_response) {
    report.losses.push_back(loss.value_or(0.0));
  }
  report.lmi_holds = report.lmi_delta <= kPassTolerance;
  report.mi_fails = report.mi_delta_at_one > 0.2;
  report.pass = report.lmi_holds && report.mi_fails;
  return report;
}

absl::StatusOr<ElementReleaseSeparationReport> RunElementReleaseSeparation(
    const ElementReleaseSeparationParams& params) {
  const int n = params.n;
  const int size = params.domain_size;
  if (!(params.delta > 0.0 && params.delta <= 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "element release separation needs 0 < delta <= 1, got ",
        params.delta));
  }
  if (!(n > std::max(2 * std::log(2 / params.delta), 6.0))) {
    return absl::InvalidArgumentError(absl::StrCat(
        "element release separation needs n > max(2 ln(2/delta), 6), got ",
        n));
  }
  if (!(static_cast<double>(size) > static_cast<double>(n) * n)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "element release separation needs a domain larger than n^2, got ",
        size));
  }
  std::vector<double> weights = params.weights;
  if (weights.empty()) weights.assign(size, 1.0 / size);
  if (weights.size() != static_cast<std::size_t>(size)) {
    return absl::InvalidArgumentError(
        absl::StrCat("element weights cover ", weights.size(),
                     " elements but the domain has ", size));
  }
  for (double w : weights) {
    if (w > 1.0 / (static_cast<double>(n) * n) + 1e-12) {
      return absl::InvalidArgumentError(absl::StrCat(
          "element release separation needs every element mass <= 1/n^2, "
          "got ", w));
    }
  }
  auto space = SampleSpace::Create(OutcomeSet::Range(size), n);
  if (!space.ok()) return space.status();
  auto dist = FiniteDist::Create(space->elements(), weights);
  if (!dist.ok()) return dist.status();
  auto prior = SamplePrior::Product(*space, *dist);
  if (!prior.ok()) return prior.status();
  auto world = World::Create(*space, *prior, BuildElementRelease(*space));
  if (!world.ok()) return world.status();
  NotionCertifier certifier(*std::move(world));

  ElementReleaseSeparationReport report;
  report.params = params;
  report.params.weights = weights;
  auto lmi = certifier.Lmi(1.0);
  if (!lmi.ok()) return lmi.status();
  report.lmi_delta_at_one = lmi->delta;
  report.lmi_threshold = 1.0 / (2 * n);
  report.lmi_margin = report.lmi_delta_at_one - report.lmi_threshold;
  report.lss_eps = 11 * std::sqrt(std::log(2 * n / params.delta) / n);
  report.lss_vacuous = report.lss_eps >= 1.0;
  auto lss = certifier.Lss(report.lss_eps);
  if (!lss.ok()) return lss.status();
  report.lss_delta = lss->delta;
  report.lmi_fails = report.lmi_margin > 0.0;
  report.lss_holds = report.lss_delta <= params.delta + kPassTolerance;
  report.pass = report.lmi_fails && report.lss_holds;
  return report;
}

}  // namespace stability_lab
