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

#include "stability_lab/mechanisms.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <unordered_map>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace stability_lab {
namespace {

constexpr std::size_t kMaxGridPoints = 200001;
constexpr int kMaxBitStringLength = 20;
constexpr std::size_t kMaxExactValues = 200000;
constexpr std::size_t kSelectorCheckLimit = std::size_t{1} << 20;

// Mass of Laplace(0, b) on [u, v], computed from the tail on the side away
// from zero so that far cells keep full relative precision.
double LaplaceCell(double u, double v, double b) {
  if (u >= 0.0) return 0.5 * std::exp(-u / b) * -std::expm1(-(v - u) / b);
  if (v <= 0.0) return 0.5 * std::exp(v / b) * -std::expm1(-(v - u) / b);
  return 1.0 - 0.5 * std::exp(u / b) - 0.5 * std::exp(-v / b);
}

double GaussianCell(double u, double v, double sigma) {
  const double scale = 1.0 / (sigma * std::numbers::sqrt2);
  if (u >= 0.0) return 0.5 * (std::erfc(u * scale) - std::erfc(v * scale));
  if (v <= 0.0) return 0.5 * (std::erfc(-v * scale) - std::erfc(-u * scale));
  return 1.0 - 0.5 * std::erfc(-u * scale) - 0.5 * std::erfc(v * scale);
}

// Rows of a noise kernel depend only on the centre, which takes few values.
class RowCache {
 public:
  std::vector<double> Get(double center,
                          const std::function<std::vector<double>()>& make) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = rows_.find(center);
      if (it != rows_.end()) return it->second;
    }
    std::vector<double> row = make();
    std::lock_guard<std::mutex> lock(mutex_);
    return rows_.emplace(center, std::move(row)).first->second;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<double, std::vector<double>> rows_;
};

absl::Status CheckQueryDomain(const LinearQuery& query,
                              const SampleSpace& space) {
  if (query.domain_size() != space.domain_size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "query covers ", query.domain_size(), " elements but the domain has ",
        space.domain_size()));
  }
  return absl::OkStatus();
}

absl::StatusOr<MechanismKernel> BuildRandomizedResponse(
    const LinearQuery& query, double flip, const SampleSpace& space) {
  const int n = space.n();
  if (n > kMaxBitStringLength) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "randomized response over ", n, " bits has too many responses"));
  }
  const std::size_t count = std::size_t{1} << n;
  std::vector<std::string> labels;
  for (std::size_t b = 0; b < count; ++b) {
    std::string label(n, '0');
    for (int j = 0; j < n; ++j) {
      if (b & (std::size_t{1} << (n - 1 - j))) label[j] = '1';
    }
    labels.push_back(std::move(label));
  }
  auto responses = OutcomeSet::FromLabels(std::move(labels));
  if (!responses.ok()) return responses.status();
  return MechanismKernel::FromFunction(
      space, *responses,
      [query, flip, n](std::span<const std::size_t> tuple,
                       std::span<double> row) {
        for (std::size_t b = 0; b < row.size(); ++b) {
          double p = 1.0;
          for (int j = 0; j < n; ++j) {
            const bool truth = query(tuple[j]) > 0.0;
            const bool bit = b & (std::size_t{1} << (n - 1 - j));
            p *= bit == truth ? 1.0 - flip : flip;
          }
          row[b] = p;
        }
      });
}

}  // namespace

std::string FormatNumber(double value) {
  if (value == 0.0) return "0";
  return absl::StrFormat("%.12g", value);
}

absl::Status ValidateNoiseSpec(const NoiseSpec& spec, double delta_bound) {
  if (spec.family == NoiseFamily::kRandomizedResponse) {
    if (!(spec.scale > 0.0 && spec.scale < 0.5)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "flip probability must lie in (0, 1/2), got ", spec.scale));
    }
    return absl::OkStatus();
  }
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) {
    return absl::InvalidArgumentError(
        absl::StrCat("noise scale must be positive, got ", spec.scale));
  }
  if (!(spec.grid_step > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("grid step must be positive, got ", spec.grid_step));
  }
  if (spec.grid_step > spec.scale) {
    return absl::InvalidArgumentError(
        absl::StrCat("grid too coarse: step ", spec.grid_step,
                     " exceeds the noise scale ", spec.scale));
  }
  const double needed = delta_bound + 5.0 * spec.scale;
  if (spec.grid_halfwidth < needed * (1.0 - 1e-12)) {
    return absl::InvalidArgumentError(
        absl::StrCat("grid halfwidth ", spec.grid_halfwidth,
                     " is below the query bound plus five scales (", needed,
                     ")"));
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<double>> NoiseGrid(const NoiseSpec& spec,
                                              double delta_bound) {
  if (auto s = ValidateNoiseSpec(spec, delta_bound); !s.ok()) return s;
  const double reach = delta_bound + spec.grid_halfwidth;
  const double k_max = std::ceil(reach / spec.grid_step - 1e-9);
  if (2.0 * k_max + 1.0 > kMaxGridPoints) {
    return absl::ResourceExhaustedError(
        absl::StrCat("noise grid would have ", 2.0 * k_max + 1.0, " points"));
  }
  const long k = static_cast<long>(k_max);
  std::vector<double> points;
  points.reserve(2 * k + 1);
  for (long i = -k; i <= k; ++i) points.push_back(i * spec.grid_step);
  return points;
}

std::vector<double> DiscretizedNoiseRow(const NoiseSpec& spec,
                                        std::span<const double> grid,
                                        double center) {
  std::vector<double> row(grid.size());
  const double half = spec.grid_step / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double u = grid[i] - half - center;
    const double v = grid[i] + half - center;
    row[i] = spec.family == NoiseFamily::kGaussian
                 ? GaussianCell(u, v, spec.scale)
                 : LaplaceCell(u, v, spec.scale);
    row[i] = std::max(0.0, row[i]);
    total += row[i];
  }
  for (double& w : row) w /= total;
  return row;
}

absl::StatusOr<MechanismKernel> BuildNoiseMechanism(const LinearQuery& query,
                                                    const NoiseSpec& spec,
                                                    const SampleSpace& space) {
  if (auto s = CheckQueryDomain(query, space); !s.ok()) return s;
  if (spec.family == NoiseFamily::kRandomizedResponse) {
    if (auto s = ValidateNoiseSpec(spec, query.delta_bound()); !s.ok()) {
      return s;
    }
    return BuildRandomizedResponse(query, spec.scale, space);
  }
  auto grid = NoiseGrid(spec, query.delta_bound());
  if (!grid.ok()) return grid.status();
  std::vector<std::string> labels;
  for (double g : *grid) labels.push_back(FormatNumber(g));
  auto responses = OutcomeSet::FromLabels(std::move(labels));
  if (!responses.ok()) return responses.status();
  auto points = std::make_shared<const std::vector<double>>(*grid);
  auto cache = std::make_shared<RowCache>();
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, *responses,
      [query, spec, points, cache](std::span<const std::size_t> tuple,
                                   std::span<double> row) {
        const double center = query.Empirical(tuple);
        std::vector<double> cached = cache->Get(center, [&] {
          return DiscretizedNoiseRow(spec, *points, center);
        });
        std::copy(cached.begin(), cached.end(), row.begin());
      });
  if (auto s = kernel.SetResponseValues(*grid); !s.ok()) return s;
  return kernel;
}

MechanismKernel BuildConstantMechanism(const SampleSpace& space, double value) {
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, *OutcomeSet::FromLabels({FormatNumber(value)}),
      [](std::span<const std::size_t>, std::span<double> row) { row[0] = 1.0; },
      MechanismKernel::Structure::kConstant);
  kernel.SetResponseValues({value}).IgnoreError();
  kernel.set_compression_size(0);
  return kernel;
}

absl::StatusOr<MechanismKernel> BuildIdentityMechanism(
    const SampleSpace& space) {
  if (!space.tuple_count().has_value()) {
    return absl::ResourceExhaustedError(
        "identity release needs an indexable tuple space");
  }
  return MechanismKernel::FromFunction(
      space, space.tuples(),
      [space](std::span<const std::size_t> tuple, std::span<double> row) {
        row[space.Encode(tuple)] = 1.0;
      });
}

absl::StatusOr<MechanismKernel> BuildParityMechanism(
    const SampleSpace& space, const std::vector<int>& labels) {
  if (labels.size() != space.domain_size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "parity labeling covers ", labels.size(), " elements but the domain has ",
        space.domain_size()));
  }
  for (int label : labels) {
    if (label != 0 && label != 1) {
      return absl::InvalidArgumentError("parity labels must be 0 or 1");
    }
  }
  return MechanismKernel::FromFunction(
      space, OutcomeSet::Range(2),
      [labels](std::span<const std::size_t> tuple, std::span<double> row) {
        int parity = 0;
        for (std::size_t x : tuple) parity ^= labels[x];
        row[parity] = 1.0;
      });
}

absl::StatusOr<MechanismKernel> BuildXorMechanism(const SampleSpace& space) {
  if (space.domain_size() != 2) {
    return absl::InvalidArgumentError("xor release needs a binary domain");
  }
  return BuildParityMechanism(space, {0, 1});
}

MechanismKernel BuildElementRelease(const SampleSpace& space) {
  const double weight = 1.0 / space.n();
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, space.elements(),
      [weight](std::span<const std::size_t> tuple, std::span<double> row) {
        for (std::size_t x : tuple) row[x] += weight;
      },
      MechanismKernel::Structure::kElementRelease);
  kernel.set_compression_size(1);
  return kernel;
}

absl::StatusOr<MechanismKernel> BuildEmpiricalMeanMechanism(
    const LinearQuery& query, const SampleSpace& space) {
  if (auto s = CheckQueryDomain(query, space); !s.ok()) return s;
  // Reachable sums of n per-element values, merged within a relative 1e-12.
  auto merge = [](std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<double> merged;
    for (double v : values) {
      if (merged.empty() ||
          v - merged.back() > 1e-12 * std::max(1.0, std::abs(v))) {
        merged.push_back(v);
      }
    }
    return merged;
  };
  std::vector<double> distinct = merge(
      std::vector<double>(query.values().begin(), query.values().end()));
  std::vector<double> sums = {0.0};
  for (int j = 0; j < space.n(); ++j) {
    std::vector<double> next;
    next.reserve(sums.size() * distinct.size());
    for (double s : sums) {
      for (double v : distinct) next.push_back(s + v);
    }
    sums = merge(std::move(next));
    if (sums.size() > kMaxExactValues) {
      return absl::ResourceExhaustedError(
          "exact empirical answers take too many distinct values");
    }
  }
  std::vector<double> means;
  for (double s : sums) means.push_back(s / space.n());
  means = merge(std::move(means));
  std::vector<std::string> labels;
  for (double m : means) labels.push_back(FormatNumber(m));
  // Labels can collide after rounding; fall back to positional labels.
  auto responses = OutcomeSet::FromLabels(labels);
  if (!responses.ok()) responses = OutcomeSet::Range(means.size());
  auto values = std::make_shared<const std::vector<double>>(means);
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, *responses,
      [query, values](std::span<const std::size_t> tuple,
                      std::span<double> row) {
        const double answer = query.Empirical(tuple);
        auto it = std::lower_bound(values->begin(), values->end(), answer);
        std::size_t best = it == values->end() ? values->size() - 1
                                               : it - values->begin();
        if (best > 0 && std::abs((*values)[best - 1] - answer) <
                            std::abs((*values)[best] - answer)) {
          --best;
        }
        row[best] = 1.0;
      });
  if (auto s = kernel.SetResponseValues(means); !s.ok()) return s;
  return kernel;
}

absl::StatusOr<MechanismKernel> BuildElementAnswerMechanism(
    const LinearQuery& query, const SampleSpace& space) {
  if (auto s = CheckQueryDomain(query, space); !s.ok()) return s;
  std::vector<double> values(query.values().begin(), query.values().end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<std::string> labels;
  for (double v : values) labels.push_back(FormatNumber(v));
  auto responses = OutcomeSet::FromLabels(labels);
  if (!responses.ok()) responses = OutcomeSet::Range(values.size());
  auto index = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t x = 0; x < query.domain_size(); ++x) {
    index->push_back(std::lower_bound(values.begin(), values.end(), query(x)) -
                     values.begin());
  }
  const double share = 1.0 / space.n();
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, *responses,
      [index, share](std::span<const std::size_t> tuple,
                     std::span<double> row) {
        for (std::size_t x : tuple) row[(*index)[x]] += share;
      });
  if (auto s = kernel.SetResponseValues(values); !s.ok()) return s;
  return kernel;
}

absl::StatusOr<MechanismKernel> BuildCompressionMechanism(
    const CompressionSpec& spec, const SampleSpace& space) {
  if (spec.m < 0 || 2 * spec.m >= space.n()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "compression size ", spec.m, " must be below n/2 = ", space.n() / 2.0));
  }
  if (!spec.selector || !spec.encoder || spec.responses == nullptr) {
    return absl::InvalidArgumentError(
        "compression scheme needs a selector, an encoder and responses");
  }
  if (space.tuple_count().has_value() &&
      *space.tuple_count() <= kSelectorCheckLimit) {
    std::vector<std::size_t> tuple(space.n());
    for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
      space.Decode(i, tuple);
      double total = 0.0;
      for (const auto& [positions, weight] : spec.selector(tuple)) {
        total += weight;
        std::vector<std::size_t> sorted = positions;
        std::sort(sorted.begin(), sorted.end());
        const bool distinct =
            std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
        if (positions.size() != static_cast<std::size_t>(spec.m) || !distinct ||
            (!sorted.empty() && sorted.back() >= tuple.size()) ||
            !(weight >= 0.0)) {
          return absl::InvalidArgumentError(
              absl::StrCat("selector out of range on tuple (",
                           space.TupleLabel(tuple), ")"));
        }
      }
      if (std::abs(total - 1.0) > kProbabilityTolerance) {
        return absl::InvalidArgumentError(
            absl::StrCat("selector weights on tuple (", space.TupleLabel(tuple),
                         ") sum to ", total));
      }
    }
  }
  MechanismKernel kernel = MechanismKernel::FromFunction(
      space, spec.responses,
      [spec](std::span<const std::size_t> tuple, std::span<double> row) {
        std::vector<double> encoded(row.size());
        std::vector<std::size_t> selected;
        for (const auto& [positions, weight] : spec.selector(tuple)) {
          selected.clear();
          for (std::size_t p : positions) selected.push_back(tuple[p]);
          std::fill(encoded.begin(), encoded.end(), 0.0);
          spec.encoder(selected, encoded);
          for (std::size_t r = 0; r < row.size(); ++r) {
            row[r] += weight * encoded[r];
          }
        }
      });
  kernel.set_compression_size(spec.m);
  return kernel;
}

}  // namespace stability_lab
