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

// Finite worlds: an element domain, a sample size, a prior over ordered
// sample tuples and a mechanism kernel, plus the distributions they induce
// over sample sets, sample elements and responses.

#ifndef STABILITY_LAB_WORLD_H_
#define STABILITY_LAB_WORLD_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "stability_lab/probability.h"
#include "stability_lab/random.h"

namespace stability_lab {

// The domain X together with the sample size n. Tuples are indexed in mixed
// radix |X| with position 0 most significant.
class SampleSpace {
 public:
  static absl::StatusOr<SampleSpace> Create(OutcomeSetPtr elements, int n);

  const OutcomeSetPtr& elements() const { return elements_; }
  std::size_t domain_size() const { return elements_->size(); }
  int n() const { return n_; }
  // |X|^n; nullopt when it does not fit in 62 bits.
  std::optional<std::size_t> tuple_count() const { return tuple_count_; }
  // |X|^n as a double, for diagnostics on spaces too large to index.
  double tuple_count_estimate() const;

  void Decode(std::size_t index, std::span<std::size_t> tuple) const;
  std::size_t Encode(std::span<const std::size_t> tuple) const;
  std::string TupleLabel(std::span<const std::size_t> tuple) const;
  // Requires tuple_count().
  OutcomeSetPtr tuples() const;
  bool operator==(const SampleSpace& other) const;

 private:
  SampleSpace(OutcomeSetPtr elements, int n,
              std::optional<std::size_t> tuple_count)
      : elements_(std::move(elements)), n_(n), tuple_count_(tuple_count) {}

  OutcomeSetPtr elements_;
  int n_ = 0;
  std::optional<std::size_t> tuple_count_;
  mutable OutcomeSetPtr tuples_;
};

// A distribution over X^n, either the n-fold product of an element
// distribution (stored compactly) or an explicit dense weight vector.
class SamplePrior {
 public:
  static absl::StatusOr<SamplePrior> Product(const SampleSpace& space,
                                             FiniteDist element_dist);
  static absl::StatusOr<SamplePrior> Explicit(const SampleSpace& space,
                                              std::vector<double> weights);

  bool is_product() const { return element_dist_.has_value(); }
  const std::optional<FiniteDist>& element_dist() const {
    return element_dist_;
  }
  double Weight(std::size_t index, std::span<const std::size_t> tuple) const;
  double Weight(const SampleSpace& space, std::size_t index) const;
  // The explicit expansion of a product prior (or a copy of an explicit one).
  absl::StatusOr<SamplePrior> Expanded(const SampleSpace& space) const;
  absl::StatusOr<FiniteDist> AsTupleDist(const SampleSpace& space) const;
  void Sample(const SampleSpace& space, Rng& rng,
              std::span<std::size_t> tuple) const;

 private:
  SamplePrior() = default;

  std::optional<FiniteDist> element_dist_;
  std::vector<double> weights_;
};

// Conditional distribution of the response given the sample tuple. Rows are
// either stored densely or generated on demand from the decoded tuple.
class MechanismKernel {
 public:
  using RowFn = std::function<void(std::span<const std::size_t> tuple,
                                   std::span<double> row)>;

  enum class Structure { kGeneral, kConstant, kElementRelease };

  // `rows` is tuples x responses, row-major. Rows whose `defined` flag is
  // false are absent; an empty `defined` means all rows are present.
  static absl::StatusOr<MechanismKernel> Dense(const SampleSpace& space,
                                               OutcomeSetPtr responses,
                                               std::vector<double> rows,
                                               std::vector<bool> defined = {});
  static MechanismKernel FromFunction(const SampleSpace& space,
                                      OutcomeSetPtr responses, RowFn row_fn,
                                      Structure structure = Structure::kGeneral);

  const OutcomeSetPtr& responses() const { return responses_; }
  std::size_t response_count() const { return responses_->size(); }
  Structure structure() const { return structure_; }
  bool is_dense() const { return !row_fn_; }
  bool HasRow(std::size_t index) const;
  // Returns the row for a tuple, either as a view into dense storage or
  // written into `scratch`.
  std::span<const double> Row(std::size_t index,
                              std::span<const std::size_t> tuple,
                              std::vector<double>& scratch) const;

  // Real values attached to responses (the response grid of a numeric
  // mechanism).
  const std::optional<std::vector<double>>& response_values() const {
    return response_values_;
  }
  absl::Status SetResponseValues(std::vector<double> values);
  // Set by constructors of mechanisms that factor through m sample elements.
  std::optional<int> compression_size() const { return compression_size_; }
  void set_compression_size(int m) { compression_size_ = m; }

  bool CompatibleWith(const SampleSpace& space) const;

 private:
  MechanismKernel() = default;

  std::size_t domain_size_ = 0;
  int n_ = 0;
  OutcomeSetPtr responses_;
  Structure structure_ = Structure::kGeneral;
  std::vector<double> dense_;
  std::vector<bool> defined_;
  RowFn row_fn_;
  std::optional<std::vector<double>> response_values_;
  std::optional<int> compression_size_;
};

// Post-processing: the kernel followed by a channel on responses.
absl::StatusOr<MechanismKernel> ComposeKernel(const MechanismKernel& kernel,
                                              const SampleSpace& space,
                                              const Channel& channel);

struct EnumerationBudget {
  std::size_t max_tuples = std::size_t{1} << 20;
  // Cap on tuples x responses for the stored set-level joint.
  std::size_t max_cells = std::size_t{1} << 24;
};

class World {
 public:
  static absl::StatusOr<World> Create(SampleSpace space, SamplePrior prior,
                                      MechanismKernel kernel,
                                      EnumerationBudget budget = {});

  const SampleSpace& space() const { return space_; }
  const SamplePrior& prior() const { return prior_; }
  const MechanismKernel& kernel() const { return kernel_; }
  const EnumerationBudget& budget() const { return budget_; }

  // ResourceExhausted unless the tuple space (times `cells_per_tuple`, when
  // non-zero) fits the budget.
  absl::Status CheckEnumerable(std::size_t cells_per_tuple = 0) const;
  absl::StatusOr<World> WithKernel(MechanismKernel kernel) const;

 private:
  World(SampleSpace space, SamplePrior prior, MechanismKernel kernel,
        EnumerationBudget budget)
      : space_(std::move(space)),
        prior_(std::move(prior)),
        kernel_(std::move(kernel)),
        budget_(budget) {}

  SampleSpace space_;
  SamplePrior prior_;
  MechanismKernel kernel_;
  EnumerationBudget budget_;
};

// Everything a world induces. The set-level members are absent when the
// distributions came from a closed form rather than enumeration.
struct InducedDistributions {
  std::optional<FiniteDist> prior;
  std::optional<JointDist> joint_sets;
  FiniteDist marginal_r;
  FiniteDist element_marginal;
  JointDist joint_elems;
  JointDist product_elems;
  // Defined where marginal_r > 0; computed through the set-level posterior.
  std::vector<std::optional<FiniteDist>> posterior_elems;
  // Defined where element_marginal > 0.
  std::vector<std::optional<FiniteDist>> response_given_elem;

  bool has_set_level() const { return joint_sets.has_value(); }
  absl::StatusOr<FiniteDist> PosteriorSets(std::size_t r) const;
  absl::StatusOr<JointDist> ProductSets() const;
};

absl::StatusOr<InducedDistributions> Induce(const World& world);

// Closed form for releasing one uniformly chosen sample element under an
// iid prior. Only the element-level members are populated.
absl::StatusOr<InducedDistributions> ElementReleaseAnalytic(
    const FiniteDist& element_dist, int n);

struct BayesResidual {
  // |joint(x, r) - D(r) D(x | r)|, maximised.
  double posterior_route = 0.0;
  // |joint(x, r) - D(x) D(r | x)|, maximised.
  double conditional_route = 0.0;
  // |sum_r joint(x, r) - D(x)|, maximised.
  double element_marginal = 0.0;

  double max() const;
};

BayesResidual BayesCheck(const InducedDistributions& induced);

}  // namespace stability_lab

#endif  // STABILITY_LAB_WORLD_H_
