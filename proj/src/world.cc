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

#include "stability_lab/world.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "stability_lab/parallel.h"

namespace stability_lab {
namespace {

constexpr std::size_t kMaxIndexableTuples = std::size_t{1} << 62;
// Largest dense tuple vector an explicit prior may carry.
constexpr std::size_t kMaxExplicitTuples = std::size_t{1} << 26;

absl::Status CheckRow(std::span<const double> row, const std::string& what) {
  double total = 0.0;
  for (double w : row) {
    if (!std::isfinite(w) || w < 0.0) {
      return absl::InvalidArgumentError(
          absl::StrCat(what, " has a negative or non-finite entry"));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    return absl::InvalidArgumentError(
        absl::StrCat(what, " sums to ", total, ", expected 1"));
  }
  return absl::OkStatus();
}

std::string CardinalityText(const SampleSpace& space) {
  return absl::StrCat("|X|^n = ", space.domain_size(), "^", space.n(), " = ",
                      space.tuple_count_estimate(), " tuples");
}

}  // namespace

absl::StatusOr<SampleSpace> SampleSpace::Create(OutcomeSetPtr elements,
                                                int n) {
  if (elements == nullptr || elements->size() == 0) {
    return absl::InvalidArgumentError("domain must be non-empty");
  }
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("sample size must be positive, got ", n));
  }
  std::optional<std::size_t> count = 1;
  for (int i = 0; i < n && count.has_value(); ++i) {
    if (*count > kMaxIndexableTuples / elements->size()) {
      count.reset();
    } else {
      *count *= elements->size();
    }
  }
  SampleSpace space(std::move(elements), n, count);
  if (count.has_value()) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < space.domain_size(); ++i) {
      labels.push_back(space.elements_->label(i));
    }
    std::string tag = absl::StrCat("tuples/", n, "/", absl::StrJoin(labels, ","));
    SampleSpace copy = space;
    space.tuples_ = OutcomeSet::Indexed(
        *count, std::move(tag), [copy](std::size_t index) {
          std::vector<std::size_t> tuple(copy.n());
          copy.Decode(index, tuple);
          return copy.TupleLabel(tuple);
        });
  }
  return space;
}

double SampleSpace::tuple_count_estimate() const {
  return std::pow(static_cast<double>(domain_size()), n_);
}

void SampleSpace::Decode(std::size_t index, std::span<std::size_t> tuple) const {
  const std::size_t base = domain_size();
  for (int j = n_ - 1; j >= 0; --j) {
    tuple[j] = index % base;
    index /= base;
  }
}

std::size_t SampleSpace::Encode(std::span<const std::size_t> tuple) const {
  std::size_t index = 0;
  for (int j = 0; j < n_; ++j) index = index * domain_size() + tuple[j];
  return index;
}

std::string SampleSpace::TupleLabel(std::span<const std::size_t> tuple) const {
  std::string label;
  for (std::size_t j = 0; j < tuple.size(); ++j) {
    if (j > 0) label += ',';
    label += elements_->label(tuple[j]);
  }
  return label;
}

OutcomeSetPtr SampleSpace::tuples() const { return tuples_; }

bool SampleSpace::operator==(const SampleSpace& other) const {
  return n_ == other.n_ && SameOutcomes(elements_, other.elements_);
}

absl::StatusOr<SamplePrior> SamplePrior::Product(const SampleSpace& space,
                                                 FiniteDist element_dist) {
  if (!SameOutcomes(element_dist.outcomes(), space.elements())) {
    return absl::InvalidArgumentError(
        "element distribution is not over the world's domain");
  }
  SamplePrior prior;
  prior.element_dist_ = std::move(element_dist);
  return prior;
}

absl::StatusOr<SamplePrior> SamplePrior::Explicit(const SampleSpace& space,
                                                  std::vector<double> weights) {
  if (!space.tuple_count().has_value() ||
      *space.tuple_count() > kMaxExplicitTuples) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "explicit prior over ", CardinalityText(space), " is too large"));
  }
  if (weights.size() != *space.tuple_count()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "tuple arity mismatch: explicit prior has ", weights.size(),
        " weights but the sample space has ", *space.tuple_count(), " tuples"));
  }
  if (auto s = CheckRow(weights, "explicit prior"); !s.ok()) return s;
  SamplePrior prior;
  prior.weights_ = std::move(weights);
  return prior;
}

double SamplePrior::Weight(std::size_t index,
                           std::span<const std::size_t> tuple) const {
  if (!element_dist_.has_value()) return weights_[index];
  double w = 1.0;
  for (std::size_t x : tuple) w *= (*element_dist_)[x];
  return w;
}

double SamplePrior::Weight(const SampleSpace& space, std::size_t index) const {
  if (!element_dist_.has_value()) return weights_[index];
  std::vector<std::size_t> tuple(space.n());
  space.Decode(index, tuple);
  return Weight(index, tuple);
}

absl::StatusOr<SamplePrior> SamplePrior::Expanded(
    const SampleSpace& space) const {
  if (!element_dist_.has_value()) return *this;
  if (!space.tuple_count().has_value() ||
      *space.tuple_count() > kMaxExplicitTuples) {
    return absl::ResourceExhaustedError(
        absl::StrCat("cannot expand a prior over ", CardinalityText(space)));
  }
  std::vector<double> weights(*space.tuple_count());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = Weight(space, i);
  }
  return Explicit(space, std::move(weights));
}

absl::StatusOr<FiniteDist> SamplePrior::AsTupleDist(
    const SampleSpace& space) const {
  auto expanded = Expanded(space);
  if (!expanded.ok()) return expanded.status();
  return FiniteDist::Create(space.tuples(), expanded->weights_);
}

void SamplePrior::Sample(const SampleSpace& space, Rng& rng,
                         std::span<std::size_t> tuple) const {
  if (element_dist_.has_value()) {
    for (auto& x : tuple) x = rng.Categorical(element_dist_->weights());
    return;
  }
  space.Decode(rng.Categorical(weights_), tuple);
}

absl::StatusOr<MechanismKernel> MechanismKernel::Dense(
    const SampleSpace& space, OutcomeSetPtr responses, std::vector<double> rows,
    std::vector<bool> defined) {
  if (responses == nullptr || responses->size() == 0) {
    return absl::InvalidArgumentError("response set must be non-empty");
  }
  if (!space.tuple_count().has_value() ||
      *space.tuple_count() > kMaxExplicitTuples) {
    return absl::ResourceExhaustedError(
        absl::StrCat("dense kernel over ", CardinalityText(space)));
  }
  const std::size_t tuples = *space.tuple_count();
  const std::size_t width = responses->size();
  if (rows.size() != tuples * width) {
    return absl::InvalidArgumentError(absl::StrCat(
        "kernel has ", rows.size(), " entries, expected ", tuples, " x ",
        width));
  }
  if (!defined.empty() && defined.size() != tuples) {
    return absl::InvalidArgumentError("kernel row flags do not match tuples");
  }
  std::vector<std::size_t> tuple(space.n());
  for (std::size_t i = 0; i < tuples; ++i) {
    if (!defined.empty() && !defined[i]) continue;
    space.Decode(i, tuple);
    auto s = CheckRow(std::span<const double>(rows).subspan(i * width, width),
                      absl::StrCat("kernel row (", space.TupleLabel(tuple), ")"));
    if (!s.ok()) return s;
  }
  MechanismKernel kernel;
  kernel.domain_size_ = space.domain_size();
  kernel.n_ = space.n();
  kernel.responses_ = std::move(responses);
  kernel.dense_ = std::move(rows);
  kernel.defined_ = std::move(defined);
  return kernel;
}

MechanismKernel MechanismKernel::FromFunction(const SampleSpace& space,
                                              OutcomeSetPtr responses,
                                              RowFn row_fn,
                                              Structure structure) {
  MechanismKernel kernel;
  kernel.domain_size_ = space.domain_size();
  kernel.n_ = space.n();
  kernel.responses_ = std::move(responses);
  kernel.row_fn_ = std::move(row_fn);
  kernel.structure_ = structure;
  return kernel;
}

bool MechanismKernel::HasRow(std::size_t index) const {
  if (row_fn_) return true;
  return defined_.empty() || defined_[index];
}

std::span<const double> MechanismKernel::Row(
    std::size_t index, std::span<const std::size_t> tuple,
    std::vector<double>& scratch) const {
  const std::size_t width = responses_->size();
  if (!row_fn_) {
    return std::span<const double>(dense_).subspan(index * width, width);
  }
  scratch.assign(width, 0.0);
  row_fn_(tuple, scratch);
  return scratch;
}

absl::Status MechanismKernel::SetResponseValues(std::vector<double> values) {
  if (values.size() != responses_->size()) {
    return absl::InvalidArgumentError(
        "response values do not match the response set");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      return absl::InvalidArgumentError("response values must be finite");
    }
  }
  response_values_ = std::move(values);
  return absl::OkStatus();
}

bool MechanismKernel::CompatibleWith(const SampleSpace& space) const {
  return domain_size_ == space.domain_size() && n_ == space.n();
}

absl::StatusOr<MechanismKernel> ComposeKernel(const MechanismKernel& kernel,
                                              const SampleSpace& space,
                                              const Channel& channel) {
  if (!SameOutcomes(kernel.responses(), channel.inputs())) {
    return absl::InvalidArgumentError(
        "domain mismatch: channel inputs differ from the kernel's responses");
  }
  auto inner = std::make_shared<const MechanismKernel>(kernel);
  auto post = std::make_shared<const Channel>(channel);
  MechanismKernel composed = MechanismKernel::FromFunction(
      space, channel.outputs(),
      [inner, post, space](std::span<const std::size_t> tuple,
                           std::span<double> out) {
        std::vector<double> scratch;
        auto row = inner->Row(space.Encode(tuple), tuple, scratch);
        for (std::size_t r = 0; r < row.size(); ++r) {
          if (row[r] == 0.0) continue;
          auto mapped = post->row(r);
          for (std::size_t u = 0; u < out.size(); ++u) {
            out[u] += row[r] * mapped[u];
          }
        }
      });
  if (kernel.compression_size().has_value()) {
    composed.set_compression_size(*kernel.compression_size());
  }
  return composed;
}

absl::StatusOr<World> World::Create(SampleSpace space, SamplePrior prior,
                                    MechanismKernel kernel,
                                    EnumerationBudget budget) {
  if (!kernel.CompatibleWith(space)) {
    return absl::InvalidArgumentError(
        "tuple arity mismatch: kernel was built for a different sample space");
  }
  if (prior.is_product()) {
    if (!SameOutcomes(prior.element_dist()->outcomes(), space.elements())) {
      return absl::InvalidArgumentError(
          "prior element distribution is not over the world's domain");
    }
  } else if (!space.tuple_count().has_value()) {
    return absl::InvalidArgumentError("explicit prior over unindexable space");
  }
  // Only dense kernels can lack rows, and they exist only over small spaces.
  if (kernel.is_dense()) {
    std::vector<std::size_t> tuple(space.n());
    for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
      if (kernel.HasRow(i)) continue;
      space.Decode(i, tuple);
      if (prior.Weight(i, tuple) > 0.0) {
        return absl::InvalidArgumentError(
            absl::StrCat("kernel has no row for positive-prior tuple (",
                         space.TupleLabel(tuple), ")"));
      }
    }
  }
  return World(std::move(space), std::move(prior), std::move(kernel), budget);
}

absl::Status World::CheckEnumerable(std::size_t cells_per_tuple) const {
  const auto count = space_.tuple_count();
  if (!count.has_value() || *count > budget_.max_tuples) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "enumeration budget exceeded: ", CardinalityText(space_),
        " exceeds the cap of ", budget_.max_tuples));
  }
  if (cells_per_tuple > 0 && *count > budget_.max_cells / cells_per_tuple) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "enumeration budget exceeded: ", *count, " tuples x ", cells_per_tuple,
        " responses exceeds the cell cap of ", budget_.max_cells));
  }
  return absl::OkStatus();
}

absl::StatusOr<World> World::WithKernel(MechanismKernel kernel) const {
  return Create(space_, prior_, std::move(kernel), budget_);
}

absl::StatusOr<FiniteDist> InducedDistributions::PosteriorSets(
    std::size_t r) const {
  if (!joint_sets.has_value()) {
    return absl::FailedPreconditionError(
        "set-level distributions were not computed for this world");
  }
  if (r >= marginal_r.size() || !(marginal_r[r] > 0.0)) {
    return absl::InvalidArgumentError(
        "posterior over sample sets is undefined for a zero-mass response");
  }
  std::vector<double> column(joint_sets->rows());
  for (std::size_t s = 0; s < column.size(); ++s) {
    column[s] = joint_sets->at(s, r) / marginal_r[r];
  }
  return FiniteDist::Normalize(joint_sets->left(), std::move(column));
}

absl::StatusOr<JointDist> InducedDistributions::ProductSets() const {
  if (!prior.has_value()) {
    return absl::FailedPreconditionError(
        "set-level distributions were not computed for this world");
  }
  return JointDist::Product(*prior, marginal_r);
}

namespace {

struct PassOnePartial {
  std::vector<double> marginal_r;
  std::vector<double> element_marginal;
  std::vector<double> joint_elems;
  absl::Status status;
};

struct PassTwoPartial {
  std::vector<double> posterior;    // responses x elements
  std::vector<double> conditional;  // elements x responses
};

absl::StatusOr<InducedDistributions> InduceByEnumeration(const World& world) {
  const SampleSpace& space = world.space();
  const MechanismKernel& kernel = world.kernel();
  const std::size_t tuples = *space.tuple_count();
  const std::size_t width = kernel.response_count();
  const std::size_t domain = space.domain_size();
  const int n = space.n();
  const double inv_n = 1.0 / n;

  std::vector<double> prior_weights(tuples);
  std::vector<double> joint_sets(tuples * width, 0.0);
  const std::size_t chunks = ChunkCount(tuples, kDefaultChunkSize);
  std::vector<PassOnePartial> first(chunks);
  ParallelForChunks(
      tuples, kDefaultChunkSize,
      [&](std::size_t c, std::size_t begin, std::size_t end) {
        PassOnePartial& part = first[c];
        part.marginal_r.assign(width, 0.0);
        part.element_marginal.assign(domain, 0.0);
        part.joint_elems.assign(domain * width, 0.0);
        std::vector<std::size_t> tuple(n);
        std::vector<double> scratch;
        for (std::size_t i = begin; i < end; ++i) {
          space.Decode(i, tuple);
          const double w = world.prior().Weight(i, tuple);
          prior_weights[i] = w;
          if (w == 0.0) continue;
          auto row = kernel.Row(i, tuple, scratch);
          if (auto s = CheckRow(row, absl::StrCat("kernel row (",
                                                  space.TupleLabel(tuple), ")"));
              !s.ok()) {
            part.status = absl::InternalError(s.message());
            return;
          }
          for (std::size_t r = 0; r < width; ++r) {
            const double mass = w * row[r];
            joint_sets[i * width + r] = mass;
            part.marginal_r[r] += mass;
          }
          for (int j = 0; j < n; ++j) {
            const std::size_t x = tuple[j];
            part.element_marginal[x] += w * inv_n;
            double* cell = &part.joint_elems[x * width];
            for (std::size_t r = 0; r < width; ++r) {
              cell[r] += w * row[r] * inv_n;
            }
          }
        }
      });
  std::vector<double> marginal_r(width, 0.0);
  std::vector<double> element_marginal(domain, 0.0);
  std::vector<double> joint_elems(domain * width, 0.0);
  for (const auto& part : first) {
    if (!part.status.ok()) return part.status;
    for (std::size_t r = 0; r < width; ++r) marginal_r[r] += part.marginal_r[r];
    for (std::size_t x = 0; x < domain; ++x) {
      element_marginal[x] += part.element_marginal[x];
    }
    for (std::size_t k = 0; k < joint_elems.size(); ++k) {
      joint_elems[k] += part.joint_elems[k];
    }
  }

  std::vector<PassTwoPartial> second(chunks);
  ParallelForChunks(
      tuples, kDefaultChunkSize,
      [&](std::size_t c, std::size_t begin, std::size_t end) {
        PassTwoPartial& part = second[c];
        part.posterior.assign(width * domain, 0.0);
        part.conditional.assign(domain * width, 0.0);
        std::vector<std::size_t> tuple(n);
        std::vector<double> scratch;
        for (std::size_t i = begin; i < end; ++i) {
          const double w = prior_weights[i];
          if (w == 0.0) continue;
          space.Decode(i, tuple);
          for (std::size_t r = 0; r < width; ++r) {
            if (!(marginal_r[r] > 0.0)) continue;
            const double set_posterior = joint_sets[i * width + r] / marginal_r[r];
            if (set_posterior == 0.0) continue;
            for (int j = 0; j < n; ++j) {
              part.posterior[r * domain + tuple[j]] += set_posterior * inv_n;
            }
          }
          auto row = kernel.Row(i, tuple, scratch);
          for (int j = 0; j < n; ++j) {
            const std::size_t x = tuple[j];
            const double set_given_x = w * inv_n / element_marginal[x];
            double* cell = &part.conditional[x * width];
            for (std::size_t r = 0; r < width; ++r) {
              cell[r] += set_given_x * row[r];
            }
          }
        }
      });
  std::vector<double> posterior(width * domain, 0.0);
  std::vector<double> conditional(domain * width, 0.0);
  for (const auto& part : second) {
    for (std::size_t k = 0; k < posterior.size(); ++k) {
      posterior[k] += part.posterior[k];
    }
    for (std::size_t k = 0; k < conditional.size(); ++k) {
      conditional[k] += part.conditional[k];
    }
  }

  auto internal = [](const absl::Status& s) {
    return absl::InternalError(
        absl::StrCat("induced distribution invalid: ", s.message()));
  };
  auto prior = FiniteDist::Create(space.tuples(), std::move(prior_weights));
  if (!prior.ok()) return internal(prior.status());
  auto joint = JointDist::Create(space.tuples(), kernel.responses(),
                                 std::move(joint_sets));
  if (!joint.ok()) return internal(joint.status());
  auto marginal = FiniteDist::Create(kernel.responses(), std::move(marginal_r));
  if (!marginal.ok()) return internal(marginal.status());
  auto elements = FiniteDist::Create(space.elements(), element_marginal);
  if (!elements.ok()) return internal(elements.status());
  auto joint_x = JointDist::Create(space.elements(), kernel.responses(),
                                   std::move(joint_elems));
  if (!joint_x.ok()) return internal(joint_x.status());

  InducedDistributions induced{
      .prior = std::move(*prior),
      .joint_sets = std::move(*joint),
      .marginal_r = *marginal,
      .element_marginal = *elements,
      .joint_elems = std::move(*joint_x),
      .product_elems = JointDist::Product(*elements, *marginal),
  };
  induced.posterior_elems.resize(width);
  for (std::size_t r = 0; r < width; ++r) {
    if (!((*marginal)[r] > 0.0)) continue;
    auto post = FiniteDist::Create(
        space.elements(),
        std::vector<double>(posterior.begin() + r * domain,
                            posterior.begin() + (r + 1) * domain));
    if (!post.ok()) return internal(post.status());
    induced.posterior_elems[r] = std::move(*post);
  }
  induced.response_given_elem.resize(domain);
  for (std::size_t x = 0; x < domain; ++x) {
    if (!(element_marginal[x] > 0.0)) continue;
    auto cond = FiniteDist::Create(
        kernel.responses(),
        std::vector<double>(conditional.begin() + x * width,
                            conditional.begin() + (x + 1) * width));
    if (!cond.ok()) return internal(cond.status());
    induced.response_given_elem[x] = std::move(*cond);
  }
  return induced;
}

}  // namespace

absl::StatusOr<InducedDistributions> Induce(const World& world) {
  absl::Status enumerable =
      world.CheckEnumerable(world.kernel().response_count());
  if (enumerable.ok()) return InduceByEnumeration(world);
  if (world.kernel().structure() ==
          MechanismKernel::Structure::kElementRelease &&
      world.prior().is_product()) {
    return ElementReleaseAnalytic(*world.prior().element_dist(),
                                  world.space().n());
  }
  return enumerable;
}

absl::StatusOr<InducedDistributions> ElementReleaseAnalytic(
    const FiniteDist& element_dist, int n) {
  if (n < 1) {
    return absl::InvalidArgumentError("sample size must be positive");
  }
  const std::size_t size = element_dist.size();
  const double inv_n = 1.0 / n;
  const double keep = 1.0 - inv_n;
  std::vector<double> joint(size * size);
  for (std::size_t a = 0; a < size; ++a) {
    for (std::size_t b = 0; b < size; ++b) {
      joint[a * size + b] = keep * element_dist[a] * element_dist[b] +
                            (a == b ? element_dist[a] * inv_n : 0.0);
    }
  }
  auto joint_x =
      JointDist::Create(element_dist.outcomes(), element_dist.outcomes(),
                        std::move(joint));
  if (!joint_x.ok()) return joint_x.status();
  InducedDistributions induced{
      .marginal_r = element_dist,
      .element_marginal = element_dist,
      .joint_elems = std::move(*joint_x),
      .product_elems = JointDist::Product(element_dist, element_dist),
  };
  // Given the release b, each position is b with probability 1/n via the
  // chosen slot and otherwise an independent draw.
  induced.posterior_elems.resize(size);
  induced.response_given_elem.resize(size);
  for (std::size_t b = 0; b < size; ++b) {
    if (!(element_dist[b] > 0.0)) continue;
    std::vector<double> row(size);
    for (std::size_t x = 0; x < size; ++x) {
      row[x] = keep * element_dist[x] + (x == b ? inv_n : 0.0);
    }
    auto post = FiniteDist::Create(element_dist.outcomes(), row);
    if (!post.ok()) return post.status();
    induced.posterior_elems[b] = *post;
    induced.response_given_elem[b] = std::move(*post);
  }
  return induced;
}

double BayesResidual::max() const {
  return std::max({posterior_route, conditional_route, element_marginal});
}

BayesResidual BayesCheck(const InducedDistributions& induced) {
  BayesResidual residual;
  const JointDist& joint = induced.joint_elems;
  for (std::size_t x = 0; x < joint.rows(); ++x) {
    double row_total = 0.0;
    for (std::size_t r = 0; r < joint.cols(); ++r) {
      const double j = joint.at(x, r);
      row_total += j;
      const double via_posterior =
          induced.posterior_elems[r].has_value()
              ? induced.marginal_r[r] * (*induced.posterior_elems[r])[x]
              : 0.0;
      const double via_conditional =
          induced.response_given_elem[x].has_value()
              ? induced.element_marginal[x] * (*induced.response_given_elem[x])[r]
              : 0.0;
      residual.posterior_route =
          std::max(residual.posterior_route, std::abs(j - via_posterior));
      residual.conditional_route =
          std::max(residual.conditional_route, std::abs(j - via_conditional));
    }
    residual.element_marginal =
        std::max(residual.element_marginal,
                 std::abs(row_total - induced.element_marginal[x]));
  }
  return residual;
}

}  // namespace stability_lab
