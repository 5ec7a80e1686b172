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

// Independent reference computations used as ground truth by the tests.
// They deliberately avoid the library's own code paths.

#ifndef STABILITY_LAB_TESTS_ORACLES_H_
#define STABILITY_LAB_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "boost/multiprecision/cpp_int.hpp"
#include "stability_lab/world.h"

namespace stability_lab {
namespace testing {

using Rational = boost::multiprecision::cpp_rational;

// Exact distributions given as integer weights over a common denominator.
struct RationalDist {
  std::vector<Rational> p;

  static RationalDist FromCounts(const std::vector<int>& counts) {
    int total = 0;
    for (int c : counts) total += c;
    RationalDist d;
    for (int c : counts) d.p.push_back(Rational(c, total));
    return d;
  }
  std::vector<double> ToDouble() const {
    std::vector<double> out;
    for (const auto& x : p) out.push_back(static_cast<double>(x));
    return out;
  }
};

inline Rational ExactStatisticalDistance(const RationalDist& a,
                                         const RationalDist& b) {
  Rational sum = 0;
  for (std::size_t i = 0; i < a.p.size(); ++i) {
    sum += a.p[i] > b.p[i] ? a.p[i] - b.p[i] : b.p[i] - a.p[i];
  }
  return sum / 2;
}

// Exact sum_i max(0, p_i - c q_i) for a rational scale c = e^eps.
inline Rational ExactMinDelta(const RationalDist& a, const RationalDist& b,
                              const Rational& scale) {
  Rational sum = 0;
  for (std::size_t i = 0; i < a.p.size(); ++i) {
    Rational excess = a.p[i] - scale * b.p[i];
    if (excess > 0) sum += excess;
  }
  return sum;
}

// max over all events B of p(B) - c q(B), by exhaustive subset enumeration.
inline Rational SubsetMaxExcess(const RationalDist& a, const RationalDist& b,
                                const Rational& scale) {
  const std::size_t size = a.p.size();
  Rational best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << size); ++mask) {
    Rational value = 0;
    for (std::size_t i = 0; i < size; ++i) {
      if (mask & (std::size_t{1} << i)) value += a.p[i] - scale * b.p[i];
    }
    best = std::max(best, value);
  }
  return best;
}

struct OracleLosses {
  std::vector<double> marginal_r;
  std::vector<std::optional<double>> loss;
};

// Losses from a direct (tuple, position, response) enumeration: the element
// posterior is D(x, r) / D(r) with D(x, r) summed over tuples and positions,
// and the loss is half the L1 distance to the element marginal.
inline OracleLosses EnumerateLosses(const World& world) {
  const SampleSpace& space = world.space();
  const std::size_t width = world.kernel().response_count();
  const std::size_t domain = space.domain_size();
  std::vector<double> joint(domain * width, 0.0);
  std::vector<double> element(domain, 0.0);
  OracleLosses out;
  out.marginal_r.assign(width, 0.0);
  std::vector<std::size_t> tuple(space.n());
  std::vector<double> scratch;
  for (std::size_t i = 0; i < *space.tuple_count(); ++i) {
    space.Decode(i, tuple);
    const double w = world.prior().Weight(i, tuple);
    if (w == 0.0) continue;
    auto row = world.kernel().Row(i, tuple, scratch);
    for (std::size_t r = 0; r < width; ++r) out.marginal_r[r] += w * row[r];
    for (std::size_t x : tuple) {
      element[x] += w / space.n();
      for (std::size_t r = 0; r < width; ++r) {
        joint[x * width + r] += w * row[r] / space.n();
      }
    }
  }
  out.loss.resize(width);
  for (std::size_t r = 0; r < width; ++r) {
    if (!(out.marginal_r[r] > 0.0)) continue;
    double l1 = 0.0;
    for (std::size_t x = 0; x < domain; ++x) {
      l1 += std::abs(joint[x * width + r] / out.marginal_r[r] - element[x]);
    }
    out.loss[r] = l1 / 2;
  }
  return out;
}

// max over every response subset of D(R') (loss(R') - eps), with the empty
// set contributing zero.
inline double BruteForceLssDelta(const std::vector<double>& marginal_r,
                                 const std::vector<std::optional<double>>& loss,
                                 double eps) {
  const std::size_t width = marginal_r.size();
  double best = 0.0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << width); ++mask) {
    double mass = 0.0;
    double weighted = 0.0;
    for (std::size_t r = 0; r < width; ++r) {
      if (!(mask & (std::size_t{1} << r)) || !(marginal_r[r] > 0.0)) continue;
      mass += marginal_r[r];
      weighted += marginal_r[r] * *loss[r];
    }
    if (mass > 0.0) best = std::max(best, mass * (weighted / mass - eps));
  }
  return best;
}

// max over every event B of p(B) - e^eps q(B), by enumerating all 2^|p|
// events. Only for short vectors.
inline double BruteForceEventDelta(const std::vector<double>& p,
                                   const std::vector<double>& q, double eps) {
  const double scale = std::exp(eps);
  double best = 0.0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << p.size()); ++mask) {
    double pb = 0.0;
    double qb = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (mask & (std::size_t{1} << i)) {
        pb += p[i];
        qb += q[i];
      }
    }
    if (qb == 0.0) {
      best = std::max(best, pb);
    } else {
      best = std::max(best, pb - scale * qb);
    }
  }
  return best;
}

inline std::vector<double> KernelRow(const World& world, std::size_t index) {
  std::vector<std::size_t> tuple(world.space().n());
  world.space().Decode(index, tuple);
  std::vector<double> scratch;
  auto row = world.kernel().Row(index, tuple, scratch);
  return std::vector<double>(row.begin(), row.end());
}

inline int HammingDistance(const SampleSpace& space, std::size_t a,
                           std::size_t b) {
  std::vector<std::size_t> ta(space.n()), tb(space.n());
  space.Decode(a, ta);
  space.Decode(b, tb);
  int d = 0;
  for (int j = 0; j < space.n(); ++j) d += ta[j] != tb[j];
  return d;
}

// Worst event delta over all ordered pairs at Hamming distance one.
inline double NeighbourDpOracle(const World& world, double eps) {
  const std::size_t count = *world.space().tuple_count();
  double best = 0.0;
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = 0; b < count; ++b) {
      if (HammingDistance(world.space(), a, b) != 1) continue;
      best = std::max(best, BruteForceEventDelta(KernelRow(world, a),
                                                 KernelRow(world, b), eps));
    }
  }
  return best;
}

// Mass of independent pairs whose rows admit an event beyond delta.
inline double TsOracle(const World& world, double eps, double delta) {
  const std::size_t count = *world.space().tuple_count();
  double eta = 0.0;
  for (std::size_t a = 0; a < count; ++a) {
    const double wa = world.prior().Weight(world.space(), a);
    if (wa == 0.0) continue;
    for (std::size_t b = 0; b < count; ++b) {
      const double wb = world.prior().Weight(world.space(), b);
      if (wb == 0.0) continue;
      if (BruteForceEventDelta(KernelRow(world, a), KernelRow(world, b), eps) >
          delta + 1e-12) {
        eta += wa * wb;
      }
    }
  }
  return eta;
}

// Joint and product over (tuple, response) cells, flattened tuple-major.
struct CellDists {
  std::vector<double> joint;
  std::vector<double> product;
};

inline CellDists SetCells(const World& world) {
  const std::size_t count = *world.space().tuple_count();
  const std::size_t width = world.kernel().response_count();
  CellDists out;
  std::vector<double> prior(count), marginal(width, 0.0);
  for (std::size_t a = 0; a < count; ++a) {
    prior[a] = world.prior().Weight(world.space(), a);
    std::vector<double> row(width, 0.0);
    if (prior[a] > 0.0) row = KernelRow(world, a);
    for (std::size_t r = 0; r < width; ++r) {
      out.joint.push_back(prior[a] * row[r]);
      marginal[r] += prior[a] * row[r];
    }
  }
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t r = 0; r < width; ++r) {
      out.product.push_back(prior[a] * marginal[r]);
    }
  }
  return out;
}

// Element-level cells: a uniformly chosen position of the sample.
inline CellDists ElementCells(const World& world) {
  const SampleSpace& space = world.space();
  const std::size_t count = *space.tuple_count();
  const std::size_t width = world.kernel().response_count();
  const std::size_t domain = space.domain_size();
  CellDists out;
  out.joint.assign(domain * width, 0.0);
  std::vector<double> element(domain, 0.0), marginal(width, 0.0);
  std::vector<std::size_t> tuple(space.n());
  for (std::size_t a = 0; a < count; ++a) {
    const double w = world.prior().Weight(space, a);
    if (w == 0.0) continue;
    space.Decode(a, tuple);
    std::vector<double> row = KernelRow(world, a);
    for (std::size_t r = 0; r < width; ++r) marginal[r] += w * row[r];
    for (std::size_t x : tuple) {
      element[x] += w / space.n();
      for (std::size_t r = 0; r < width; ++r) {
        out.joint[x * width + r] += w * row[r] / space.n();
      }
    }
  }
  for (std::size_t x = 0; x < domain; ++x) {
    for (std::size_t r = 0; r < width; ++r) {
      out.product.push_back(element[x] * marginal[r]);
    }
  }
  return out;
}

inline double SymmetricEventDelta(const CellDists& cells, double eps) {
  return std::max(BruteForceEventDelta(cells.joint, cells.product, eps),
                  BruteForceEventDelta(cells.product, cells.joint, eps));
}

}  // namespace testing
}  // namespace stability_lab

#endif  // STABILITY_LAB_TESTS_ORACLES_H_
