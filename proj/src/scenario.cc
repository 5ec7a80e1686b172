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

#include "stability_lab/scenario.h"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "json.hpp"
#include "stability_lab/adaptivity.h"
#include "stability_lab/generalization.h"
#include "stability_lab/linear_query.h"
#include "stability_lab/mechanisms.h"
#include "stability_lab/notions.h"
#include "stability_lab/probability.h"
#include "stability_lab/world.h"

namespace stability_lab {
namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Schema reading. Every error names the offending field.

std::string Path(std::string_view base, std::string_view key) {
  if (base.empty()) return std::string(key);
  return absl::StrCat(std::string(base), ".", std::string(key));
}

std::string Index(std::string_view base, std::size_t i) {
  return absl::StrCat(std::string(base), "[", i, "]");
}

absl::Status FieldError(std::string_view path, std::string_view message) {
  return absl::InvalidArgumentError(
      absl::StrCat(std::string(path), ": ", std::string(message)));
}

// Keeps the code of a library error and prefixes the field it came from.
absl::Status Annotate(const absl::Status& status, std::string_view path) {
  return absl::Status(status.code(), absl::StrCat(std::string(path), ": ",
                                                  std::string(status.message())));
}

absl::Status CheckObject(const json& value, std::string_view path,
                         std::initializer_list<std::string_view> allowed) {
  if (!value.is_object()) return FieldError(path, "expected an object");
  for (const auto& [key, unused] : value.items()) {
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) return FieldError(Path(path, key), "unknown field");
  }
  return absl::OkStatus();
}

const json* Find(const json& object, std::string_view key) {
  auto it = object.find(std::string(key));
  return it == object.end() ? nullptr : &*it;
}

absl::StatusOr<const json*> Require(const json& object, std::string_view path,
                                    std::string_view key) {
  const json* value = Find(object, key);
  if (value == nullptr) {
    return FieldError(Path(path, key), "missing required field");
  }
  return value;
}

absl::StatusOr<double> ReadNumber(const json& value, std::string_view path) {
  if (!value.is_number()) return FieldError(path, "expected a number");
  return value.get<double>();
}

absl::StatusOr<std::int64_t> ReadInt(const json& value, std::string_view path,
                                     std::int64_t min) {
  if (!value.is_number_integer()) return FieldError(path, "expected an integer");
  const std::int64_t v = value.get<std::int64_t>();
  if (v < min) return FieldError(path, absl::StrCat("must be at least ", min));
  return v;
}

absl::StatusOr<std::string> ReadString(const json& value,
                                       std::string_view path) {
  if (!value.is_string()) return FieldError(path, "expected a string");
  return value.get<std::string>();
}

absl::StatusOr<std::vector<double>> ReadNumbers(const json& value,
                                                std::string_view path) {
  if (!value.is_array()) return FieldError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    auto v = ReadNumber(value[i], Index(path, i));
    if (!v.ok()) return v.status();
    out.push_back(*v);
  }
  return out;
}

absl::StatusOr<std::vector<std::string>> ReadStrings(const json& value,
                                                     std::string_view path) {
  if (!value.is_array()) return FieldError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    auto v = ReadString(value[i], Index(path, i));
    if (!v.ok()) return v.status();
    out.push_back(*std::move(v));
  }
  return out;
}

absl::StatusOr<double> NumberField(const json& object, std::string_view path,
                                   std::string_view key) {
  auto value = Require(object, path, key);
  if (!value.ok()) return value.status();
  return ReadNumber(**value, Path(path, key));
}

absl::StatusOr<double> NumberField(const json& object, std::string_view path,
                                   std::string_view key, double fallback) {
  const json* value = Find(object, key);
  if (value == nullptr) return fallback;
  return ReadNumber(*value, Path(path, key));
}

absl::StatusOr<std::int64_t> IntField(const json& object, std::string_view path,
                                      std::string_view key, std::int64_t min) {
  auto value = Require(object, path, key);
  if (!value.ok()) return value.status();
  return ReadInt(**value, Path(path, key), min);
}

absl::StatusOr<std::string> StringField(const json& object,
                                        std::string_view path,
                                        std::string_view key) {
  auto value = Require(object, path, key);
  if (!value.ok()) return value.status();
  return ReadString(**value, Path(path, key));
}

// ---------------------------------------------------------------------------
// Output rendering.

void DumpCanonical(const json& value, int indent, std::string& out) {
  const std::string pad(2 * (indent + 1), ' ');
  const std::string close(2 * indent, ' ');
  switch (value.type()) {
    case json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      // Object keys are held in a std::map, so iteration is sorted.
      for (const auto& [key, item] : value.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(key).dump() + ": ";
        DumpCanonical(item, indent + 1, out);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i > 0) out += ",\n";
        out += pad;
        DumpCanonical(value[i], indent + 1, out);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = value.get<double>();
      // JSON has no infinities; they are written as strings.
      out += std::isfinite(v) ? FormatNumber(v)
                              : json(FormatNumber(v)).dump();
      return;
    }
    default:
      out += value.dump();
  }
}

std::string CanonicalJson(const json& value) {
  std::string out;
  DumpCanonical(value, 0, out);
  out += "\n";
  return out;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header)
      : header_(std::move(header)) {}

  void AddRow(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string Render() const {
    std::string out;
    AppendLine(header_, out);
    for (const auto& row : rows_) AppendLine(row, out);
    return out;
  }

 private:
  static void AppendLine(const std::vector<std::string>& cells,
                         std::string& out) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ",";
      const std::string& cell = cells[i];
      if (cell.find_first_of(",\"\n") == std::string::npos) {
        out += cell;
        continue;
      }
      out += "\"";
      for (char c : cell) {
        if (c == '"') out += "\"";
        out += c;
      }
      out += "\"";
    }
    out += "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string Bool(bool value) { return value ? "true" : "false"; }

json EstimateJson(const Estimate& e) {
  return json{{"mean", e.mean},
              {"standard_error", e.standard_error},
              {"ci_low", e.ci_low},
              {"ci_high", e.ci_high}};
}

// ---------------------------------------------------------------------------
// World construction.

struct WorldSpec {
  std::optional<SampleSpace> space;
  std::optional<SamplePrior> prior;
  EnumerationBudget budget;
  QueryTable queries;
};

absl::StatusOr<SampleSpace> ParseSpace(const json& world) {
  auto domain = Require(world, "world", "domain");
  if (!domain.ok()) return domain.status();
  OutcomeSetPtr elements;
  if ((*domain)->is_array()) {
    auto labels = ReadStrings(**domain, "world.domain");
    if (!labels.ok()) return labels.status();
    auto set = OutcomeSet::FromLabels(*std::move(labels));
    if (!set.ok()) return Annotate(set.status(), "world.domain");
    elements = *std::move(set);
  } else {
    auto size = ReadInt(**domain, "world.domain", 1);
    if (!size.ok()) return size.status();
    elements = OutcomeSet::Range(static_cast<std::size_t>(*size));
  }
  auto n = IntField(world, "world", "n", 1);
  if (!n.ok()) return n.status();
  auto space = SampleSpace::Create(elements, static_cast<int>(*n));
  if (!space.ok()) return Annotate(space.status(), "world");
  return space;
}

absl::StatusOr<SamplePrior> ParsePrior(const json& world,
                                       const SampleSpace& space) {
  const json* prior = Find(world, "prior");
  std::string type = "uniform";
  if (prior != nullptr) {
    if (auto s = CheckObject(*prior, "world.prior", {"type", "weights"});
        !s.ok()) {
      return s;
    }
    auto t = StringField(*prior, "world.prior", "type");
    if (!t.ok()) return t.status();
    type = *t;
  }
  if (type == "uniform") {
    return SamplePrior::Product(space, FiniteDist::Uniform(space.elements()));
  }
  if (type != "product" && type != "explicit") {
    return FieldError("world.prior.type",
                      "expected 'uniform', 'product' or 'explicit'");
  }
  auto field = Require(*prior, "world.prior", "weights");
  if (!field.ok()) return field.status();
  auto weights = ReadNumbers(**field, "world.prior.weights");
  if (!weights.ok()) return weights.status();
  absl::StatusOr<SamplePrior> out;
  if (type == "product") {
    auto dist = FiniteDist::Create(space.elements(), *std::move(weights));
    if (!dist.ok()) return Annotate(dist.status(), "world.prior.weights");
    out = SamplePrior::Product(space, *std::move(dist));
  } else {
    out = SamplePrior::Explicit(space, *std::move(weights));
  }
  if (!out.ok()) return Annotate(out.status(), "world.prior");
  return out;
}

absl::StatusOr<QueryTable> ParseQueries(const json& root,
                                        const SampleSpace* space) {
  QueryTable out;
  const json* queries = Find(root, "queries");
  if (queries == nullptr) return out;
  if (!queries->is_object()) return FieldError("queries", "expected an object");
  for (const auto& [id, spec] : queries->items()) {
    const std::string path = Path("queries", id);
    if (auto s = CheckObject(spec, path, {"values", "bound"}); !s.ok()) return s;
    auto field = Require(spec, path, "values");
    if (!field.ok()) return field.status();
    auto values = ReadNumbers(**field, Path(path, "values"));
    if (!values.ok()) return values.status();
    if (space != nullptr && values->size() != space->domain_size()) {
      return FieldError(Path(path, "values"),
                        absl::StrCat("expected ", space->domain_size(),
                                     " values, got ", values->size()));
    }
    auto bound = NumberField(spec, path, "bound", 1.0);
    if (!bound.ok()) return bound.status();
    auto query = LinearQuery::Create(*std::move(values), *bound);
    if (!query.ok()) return Annotate(query.status(), path);
    out.emplace(id, *std::move(query));
  }
  return out;
}

absl::StatusOr<EnumerationBudget> ParseBudget(
    const json& root, const ScenarioOverrides& overrides) {
  EnumerationBudget budget;
  if (const json* b = Find(root, "budget"); b != nullptr) {
    if (auto s = CheckObject(*b, "budget", {"max_tuples", "max_cells"});
        !s.ok()) {
      return s;
    }
    if (const json* v = Find(*b, "max_tuples"); v != nullptr) {
      auto t = ReadInt(*v, "budget.max_tuples", 1);
      if (!t.ok()) return t.status();
      budget.max_tuples = static_cast<std::size_t>(*t);
    }
    if (const json* v = Find(*b, "max_cells"); v != nullptr) {
      auto c = ReadInt(*v, "budget.max_cells", 1);
      if (!c.ok()) return c.status();
      budget.max_cells = static_cast<std::size_t>(*c);
    }
  }
  if (overrides.max_tuples.has_value()) {
    if (*overrides.max_tuples == 0) {
      return FieldError("--budget", "must be at least 1");
    }
    budget.max_tuples = *overrides.max_tuples;
  }
  return budget;
}

absl::StatusOr<const LinearQuery*> LookupQuery(const json& spec,
                                               std::string_view path,
                                               const QueryTable& queries) {
  auto id = StringField(spec, path, "query");
  if (!id.ok()) return id.status();
  auto it = queries.find(*id);
  if (it == queries.end()) {
    return FieldError(Path(path, "query"),
                      absl::StrCat("unknown query '", *id, "'"));
  }
  return &it->second;
}

absl::StatusOr<NoiseSpec> ParseNoise(const json& spec, std::string_view path,
                                     std::string_view type) {
  NoiseSpec noise;
  if (type == "laplace") {
    noise.family = NoiseFamily::kLaplace;
  } else if (type == "gaussian") {
    noise.family = NoiseFamily::kGaussian;
  } else {
    noise.family = NoiseFamily::kRandomizedResponse;
  }
  auto scale = NumberField(spec, path, "scale");
  if (!scale.ok()) return scale.status();
  auto step = NumberField(spec, path, "grid_step", 0.0);
  if (!step.ok()) return step.status();
  auto halfwidth = NumberField(spec, path, "grid_halfwidth", 0.0);
  if (!halfwidth.ok()) return halfwidth.status();
  noise.scale = *scale;
  noise.grid_step = *step;
  noise.grid_halfwidth = *halfwidth;
  return noise;
}

bool IsNoiseType(std::string_view type) {
  return type == "laplace" || type == "gaussian" ||
         type == "randomized_response";
}

absl::StatusOr<MechanismKernel> ParseMechanism(const json& spec,
                                               std::string_view path,
                                               const SampleSpace& space,
                                               const QueryTable& queries) {
  if (auto s = CheckObject(spec, path,
                           {"type", "value", "labels", "query", "scale",
                            "grid_step", "grid_halfwidth", "responses", "rows",
                            "values"});
      !s.ok()) {
    return s;
  }
  auto type = StringField(spec, path, "type");
  if (!type.ok()) return type.status();
  absl::StatusOr<MechanismKernel> kernel =
      absl::InvalidArgumentError("unset");
  if (*type == "constant") {
    auto value = NumberField(spec, path, "value", 0.0);
    if (!value.ok()) return value.status();
    kernel = BuildConstantMechanism(space, *value);
  } else if (*type == "identity") {
    kernel = BuildIdentityMechanism(space);
  } else if (*type == "parity") {
    auto field = Require(spec, path, "labels");
    if (!field.ok()) return field.status();
    auto raw = ReadNumbers(**field, Path(path, "labels"));
    if (!raw.ok()) return raw.status();
    std::vector<int> labels;
    for (double v : *raw) labels.push_back(static_cast<int>(v));
    kernel = BuildParityMechanism(space, labels);
  } else if (*type == "xor") {
    kernel = BuildXorMechanism(space);
  } else if (*type == "element_release") {
    kernel = BuildElementRelease(space);
  } else if (*type == "empirical_mean" || *type == "element_answer") {
    auto query = LookupQuery(spec, path, queries);
    if (!query.ok()) return query.status();
    kernel = *type == "empirical_mean"
                 ? BuildEmpiricalMeanMechanism(**query, space)
                 : BuildElementAnswerMechanism(**query, space);
  } else if (IsNoiseType(*type)) {
    auto query = LookupQuery(spec, path, queries);
    if (!query.ok()) return query.status();
    auto noise = ParseNoise(spec, path, *type);
    if (!noise.ok()) return noise.status();
    kernel = BuildNoiseMechanism(**query, *noise, space);
  } else if (*type == "dense") {
    auto labels_field = Require(spec, path, "responses");
    if (!labels_field.ok()) return labels_field.status();
    auto labels = ReadStrings(**labels_field, Path(path, "responses"));
    if (!labels.ok()) return labels.status();
    auto responses = OutcomeSet::FromLabels(*labels);
    if (!responses.ok()) return Annotate(responses.status(), Path(path, "responses"));
    auto rows_field = Require(spec, path, "rows");
    if (!rows_field.ok()) return rows_field.status();
    const std::string rows_path = Path(path, "rows");
    if (!(*rows_field)->is_array()) {
      return FieldError(rows_path, "expected an array of rows");
    }
    const std::optional<std::size_t> count = space.tuple_count();
    if (!count.has_value() || (*rows_field)->size() != *count) {
      return FieldError(rows_path,
                        absl::StrCat("expected one row per tuple (",
                                     FormatNumber(space.tuple_count_estimate()),
                                     "), got ", (*rows_field)->size()));
    }
    std::vector<double> rows;
    for (std::size_t i = 0; i < (*rows_field)->size(); ++i) {
      auto row = ReadNumbers((**rows_field)[i], Index(rows_path, i));
      if (!row.ok()) return row.status();
      if (row->size() != labels->size()) {
        return FieldError(Index(rows_path, i),
                          absl::StrCat("expected ", labels->size(),
                                       " probabilities, got ", row->size()));
      }
      rows.insert(rows.end(), row->begin(), row->end());
    }
    kernel = MechanismKernel::Dense(space, *std::move(responses),
                                    std::move(rows));
    if (kernel.ok()) {
      if (const json* v = Find(spec, "values"); v != nullptr) {
        auto values = ReadNumbers(*v, Path(path, "values"));
        if (!values.ok()) return values.status();
        if (auto s = kernel->SetResponseValues(*std::move(values)); !s.ok()) {
          return Annotate(s, Path(path, "values"));
        }
      }
    }
  } else {
    return FieldError(Path(path, "type"),
                      absl::StrCat("unknown mechanism '", *type, "'"));
  }
  if (!kernel.ok()) return Annotate(kernel.status(), path);
  return kernel;
}

absl::StatusOr<WorldSpec> ParseWorld(const json& root,
                                     const ScenarioOverrides& overrides,
                                     bool required) {
  WorldSpec out;
  auto budget = ParseBudget(root, overrides);
  if (!budget.ok()) return budget.status();
  out.budget = *budget;
  const json* world = Find(root, "world");
  if (world == nullptr) {
    if (required) return FieldError("world", "missing required field");
    auto queries = ParseQueries(root, nullptr);
    if (!queries.ok()) return queries.status();
    out.queries = *std::move(queries);
    return out;
  }
  if (auto s = CheckObject(*world, "world", {"domain", "n", "prior", "mechanism"});
      !s.ok()) {
    return s;
  }
  auto space = ParseSpace(*world);
  if (!space.ok()) return space.status();
  auto prior = ParsePrior(*world, *space);
  if (!prior.ok()) return prior.status();
  auto queries = ParseQueries(root, &*space);
  if (!queries.ok()) return queries.status();
  out.space = *std::move(space);
  out.prior = *std::move(prior);
  out.queries = *std::move(queries);
  return out;
}

absl::StatusOr<World> BuildWorld(const json& root, const WorldSpec& spec) {
  const json& world = root.at("world");
  auto mechanism = Require(world, "world", "mechanism");
  if (!mechanism.ok()) return mechanism.status();
  auto kernel =
      ParseMechanism(**mechanism, "world.mechanism", *spec.space, spec.queries);
  if (!kernel.ok()) return kernel.status();
  return World::Create(*spec.space, *spec.prior, *std::move(kernel),
                       spec.budget);
}

json WorldSummary(const World& world) {
  const SampleSpace& space = world.space();
  json out{{"domain_size", space.domain_size()},
           {"n", space.n()},
           {"responses", world.kernel().response_count()},
           {"product_prior", world.prior().is_product()}};
  if (space.tuple_count().has_value()) out["tuples"] = *space.tuple_count();
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive runs.

absl::StatusOr<std::vector<RoundMechanisms>> ParseRounds(
    const json& spec, std::string_view path, const SampleSpace& space,
    const QueryTable& queries, std::vector<RoundParams>* params) {
  auto field = Require(spec, path, "rounds");
  if (!field.ok()) return field.status();
  const std::string rounds_path = Path(path, "rounds");
  if (!(*field)->is_array() || (*field)->empty()) {
    return FieldError(rounds_path, "expected a non-empty array");
  }
  std::vector<RoundMechanisms> rounds;
  for (std::size_t i = 0; i < (*field)->size(); ++i) {
    const json& round = (**field)[i];
    const std::string round_path = Index(rounds_path, i);
    if (auto s = CheckObject(round, round_path,
                             {"mechanisms", "eps", "delta", "alpha"});
        !s.ok()) {
      return s;
    }
    auto mechanisms = Require(round, round_path, "mechanisms");
    if (!mechanisms.ok()) return mechanisms.status();
    const std::string mech_path = Path(round_path, "mechanisms");
    if (!(*mechanisms)->is_object() || (*mechanisms)->empty()) {
      return FieldError(mech_path, "expected a non-empty object");
    }
    RoundMechanisms round_mechanisms;
    for (const auto& [id, mech] : (*mechanisms)->items()) {
      auto kernel = ParseMechanism(mech, Path(mech_path, id), space, queries);
      if (!kernel.ok()) return kernel.status();
      round_mechanisms.emplace(id, *std::move(kernel));
    }
    rounds.push_back(std::move(round_mechanisms));
    if (params != nullptr) {
      RoundParams p;
      auto eps = NumberField(round, round_path, "eps");
      if (!eps.ok()) return eps.status();
      auto delta = NumberField(round, round_path, "delta");
      if (!delta.ok()) return delta.status();
      auto alpha = NumberField(round, round_path, "alpha", 0.0);
      if (!alpha.ok()) return alpha.status();
      p.eps = *eps;
      p.delta = *delta;
      p.alpha = *alpha;
      params->push_back(p);
    }
  }
  return rounds;
}

absl::StatusOr<Analyst> ParseAnalyst(const json& spec, std::string_view path,
                                     const std::vector<RoundMechanisms>& rounds) {
  auto field = Require(spec, path, "analyst");
  if (!field.ok()) return field.status();
  const json& analyst = **field;
  const std::string analyst_path = Path(path, "analyst");
  if (auto s = CheckObject(analyst, analyst_path, {"fixed", "coins", "table"});
      !s.ok()) {
    return s;
  }
  if (const json* fixed = Find(analyst, "fixed"); fixed != nullptr) {
    if (Find(analyst, "table") != nullptr || Find(analyst, "coins") != nullptr) {
      return FieldError(analyst_path,
                        "'fixed' cannot be combined with 'coins' or 'table'");
    }
    auto ids = ReadStrings(*fixed, Path(analyst_path, "fixed"));
    if (!ids.ok()) return ids.status();
    if (ids->size() != rounds.size()) {
      return FieldError(Path(analyst_path, "fixed"),
                        absl::StrCat("expected one query per round (",
                                     rounds.size(), "), got ", ids->size()));
    }
    return Analyst::Deterministic(
        [ids = *std::move(ids)](std::size_t, std::span<const std::size_t> r)
            -> absl::StatusOr<std::string> { return ids[r.size()]; });
  }

  std::optional<FiniteDist> coins;
  if (const json* c = Find(analyst, "coins"); c != nullptr) {
    const std::string coins_path = Path(analyst_path, "coins");
    if (auto s = CheckObject(*c, coins_path, {"labels", "weights"}); !s.ok()) {
      return s;
    }
    auto labels_field = Require(*c, coins_path, "labels");
    if (!labels_field.ok()) return labels_field.status();
    auto labels = ReadStrings(**labels_field, Path(coins_path, "labels"));
    if (!labels.ok()) return labels.status();
    auto set = OutcomeSet::FromLabels(*std::move(labels));
    if (!set.ok()) return Annotate(set.status(), Path(coins_path, "labels"));
    auto weights_field = Require(*c, coins_path, "weights");
    if (!weights_field.ok()) return weights_field.status();
    auto weights = ReadNumbers(**weights_field, Path(coins_path, "weights"));
    if (!weights.ok()) return weights.status();
    auto dist = FiniteDist::Create(*std::move(set), *std::move(weights));
    if (!dist.ok()) return Annotate(dist.status(), coins_path);
    coins = *std::move(dist);
  } else {
    coins = *FiniteDist::Create(*OutcomeSet::FromLabels({"-"}), {1.0});
  }

  auto table_field = Require(analyst, analyst_path, "table");
  if (!table_field.ok()) return table_field.status();
  const std::string table_path = Path(analyst_path, "table");
  if (!(*table_field)->is_array()) {
    return FieldError(table_path, "expected an array of entries");
  }
  Analyst::DecisionTable table;
  for (std::size_t i = 0; i < (*table_field)->size(); ++i) {
    const json& entry = (**table_field)[i];
    const std::string entry_path = Index(table_path, i);
    if (auto s = CheckObject(entry, entry_path, {"coin", "responses", "query"});
        !s.ok()) {
      return s;
    }
    std::string coin = coins->outcomes()->label(0);
    if (const json* v = Find(entry, "coin"); v != nullptr) {
      auto c = ReadString(*v, Path(entry_path, "coin"));
      if (!c.ok()) return c.status();
      if (!coins->outcomes()->IndexOf(*c).has_value()) {
        return FieldError(Path(entry_path, "coin"),
                          absl::StrCat("unknown coin '", *c, "'"));
      }
      coin = *c;
    } else if (coins->size() > 1) {
      return FieldError(Path(entry_path, "coin"),
                        "required when the analyst has several coins");
    }
    std::vector<std::string> prefix;
    if (const json* v = Find(entry, "responses"); v != nullptr) {
      auto p = ReadStrings(*v, Path(entry_path, "responses"));
      if (!p.ok()) return p.status();
      prefix = *std::move(p);
    }
    if (prefix.size() >= rounds.size()) {
      return FieldError(Path(entry_path, "responses"),
                        absl::StrCat("a prefix has at most ", rounds.size() - 1,
                                     " responses"));
    }
    auto query = StringField(entry, entry_path, "query");
    if (!query.ok()) return query.status();
    if (!table.emplace(std::make_pair(coin, prefix), *query).second) {
      return FieldError(entry_path, "duplicate coin and response prefix");
    }
  }
  std::vector<OutcomeSetPtr> round_responses;
  for (const auto& round : rounds) {
    round_responses.push_back(round.begin()->second.responses());
  }
  return Analyst::FromTable(*std::move(coins), std::move(table),
                            std::move(round_responses));
}

// ---------------------------------------------------------------------------
// Tasks.

absl::StatusOr<std::vector<double>> EpsGrid(const json& spec,
                                            std::string_view path,
                                            const ScenarioOverrides& overrides) {
  if (overrides.grid.has_value()) return *overrides.grid;
  auto field = Require(spec, path, "eps");
  if (!field.ok()) return field.status();
  auto grid = ReadNumbers(**field, Path(path, "eps"));
  if (!grid.ok()) return grid.status();
  if (grid->empty()) return FieldError(Path(path, "eps"), "must not be empty");
  return grid;
}

absl::StatusOr<Notion> ParseNotion(std::string_view name,
                                   std::string_view path) {
  static const auto* const kNotions = new std::map<std::string_view, Notion>{
      {"dp", Notion::kDp},   {"mi", Notion::kMi},   {"lmi", Notion::kLmi},
      {"ts", Notion::kTs},   {"ml", Notion::kMl},   {"lml", Notion::kLml},
      {"lss", Notion::kLss}};
  auto it = kNotions->find(name);
  if (it == kNotions->end()) {
    return FieldError(path,
                      absl::StrCat("unknown notion '", std::string(name),
                                   "'; expected dp, mi, lmi, ts, ml, lml or lss"));
  }
  return it->second;
}

json CertificateJson(const NotionCertificate& cert) {
  json out{{"notion", std::string(NotionName(cert.notion))},
           {"eps", cert.eps},
           {"delta", cert.delta},
           {"witness", cert.witness},
           {"witness_size", cert.witness_size}};
  if (cert.eta.has_value()) out["eta"] = *cert.eta;
  if (cert.leakage.has_value()) out["leakage"] = *cert.leakage;
  if (cert.joint_over_product.has_value()) {
    out["joint_over_product"] = *cert.joint_over_product;
  }
  if (cert.product_over_joint.has_value()) {
    out["product_over_joint"] = *cert.product_over_joint;
  }
  return out;
}

absl::StatusOr<ScenarioResult> RunCertify(const json& root,
                                          const ScenarioOverrides& overrides) {
  auto spec_field = Require(root, "", "certify");
  if (!spec_field.ok()) return spec_field.status();
  const json& spec = **spec_field;
  if (auto s = CheckObject(spec, "certify", {"notions", "eps", "ts_delta"});
      !s.ok()) {
    return s;
  }
  auto names_field = Require(spec, "certify", "notions");
  if (!names_field.ok()) return names_field.status();
  auto names = ReadStrings(**names_field, "certify.notions");
  if (!names.ok()) return names.status();
  if (names->empty()) return FieldError("certify.notions", "must not be empty");
  std::vector<Notion> notions;
  bool needs_grid = false;
  bool needs_ts_delta = false;
  for (std::size_t i = 0; i < names->size(); ++i) {
    auto notion = ParseNotion((*names)[i], Index("certify.notions", i));
    if (!notion.ok()) return notion.status();
    notions.push_back(*notion);
    needs_grid = needs_grid || (*notion != Notion::kMl && *notion != Notion::kLml);
    needs_ts_delta = needs_ts_delta || *notion == Notion::kTs;
  }
  std::vector<double> grid;
  if (needs_grid) {
    auto g = EpsGrid(spec, "certify", overrides);
    if (!g.ok()) return g.status();
    grid = *std::move(g);
  }
  double ts_delta = 0.0;
  if (needs_ts_delta) {
    auto d = NumberField(spec, "certify", "ts_delta");
    if (!d.ok()) return d.status();
    ts_delta = *d;
  }
  auto world_spec = ParseWorld(root, overrides, /*required=*/true);
  if (!world_spec.ok()) return world_spec.status();
  auto world = BuildWorld(root, *world_spec);
  if (!world.ok()) return world.status();

  const json summary = WorldSummary(*world);
  NotionCertifier certifier(*std::move(world));
  CsvTable table({"notion", "eps", "delta_star", "witness_size"});
  json certificates = json::array();
  auto add = [&](const NotionCertificate& cert) {
    double eps = cert.eps;
    double delta = cert.delta;
    // Leakage notions report the leakage as their epsilon at delta 0; TS
    // reports the mass of distinguishable pairs.
    if (cert.leakage.has_value()) {
      eps = *cert.leakage;
      delta = 0.0;
    }
    if (cert.eta.has_value()) delta = *cert.eta;
    table.AddRow({std::string(NotionName(cert.notion)), FormatNumber(eps),
                  FormatNumber(delta), std::to_string(cert.witness_size)});
    certificates.push_back(CertificateJson(cert));
  };
  for (Notion notion : notions) {
    const std::string label = absl::StrCat(
        "certify ", std::string(NotionName(notion)));
    if (notion == Notion::kMl || notion == Notion::kLml) {
      auto cert = notion == Notion::kMl ? certifier.Ml() : certifier.Lml();
      if (!cert.ok()) return Annotate(cert.status(), label);
      add(*cert);
      continue;
    }
    for (double eps : grid) {
      absl::StatusOr<NotionCertificate> cert;
      switch (notion) {
        case Notion::kDp:
          cert = certifier.Dp(eps);
          break;
        case Notion::kMi:
          cert = certifier.Mi(eps);
          break;
        case Notion::kLmi:
          cert = certifier.Lmi(eps);
          break;
        case Notion::kTs:
          cert = certifier.Ts(eps, ts_delta);
          break;
        default:
          cert = certifier.Lss(eps);
          break;
      }
      if (!cert.ok()) return Annotate(cert.status(), label);
      add(*cert);
    }
  }
  ScenarioResult result;
  result.task = Task::kCertify;
  result.files["certificates.csv"] = table.Render();
  result.files["certificates.json"] = CanonicalJson(
      json{{"task", "certify"}, {"world", summary},
           {"certificates", certificates}});
  return result;
}

absl::StatusOr<Implication> ParseImplication(std::string_view name,
                                             std::string_view path) {
  for (Implication i :
       {Implication::kDpToLmi, Implication::kMiToLmi, Implication::kTsToLmi,
        Implication::kLmlToLmi, Implication::kLmiToLss,
        Implication::kCompressionToLss}) {
    if (ImplicationName(i) == name) return i;
  }
  return FieldError(path, absl::StrCat("unknown transfer '", std::string(name),
                                       "'; expected dp-lmi, mi-lmi, ts-lmi, "
                                       "lml-lmi, lmi-lss or cs-lss"));
}

absl::StatusOr<ScenarioResult> RunImplication(
    const json& root, const ScenarioOverrides& overrides) {
  auto spec_field = Require(root, "", "implication");
  if (!spec_field.ok()) return spec_field.status();
  const json& spec = **spec_field;
  if (auto s = CheckObject(spec, "implication", {"transfers", "eps", "delta"});
      !s.ok()) {
    return s;
  }
  auto names_field = Require(spec, "implication", "transfers");
  if (!names_field.ok()) return names_field.status();
  auto names = ReadStrings(**names_field, "implication.transfers");
  if (!names.ok()) return names.status();
  if (names->empty()) {
    return FieldError("implication.transfers", "must not be empty");
  }
  std::vector<Implication> transfers;
  for (std::size_t i = 0; i < names->size(); ++i) {
    auto t = ParseImplication((*names)[i], Index("implication.transfers", i));
    if (!t.ok()) return t.status();
    transfers.push_back(*t);
  }
  auto grid = EpsGrid(spec, "implication", overrides);
  if (!grid.ok()) return grid.status();
  auto delta = NumberField(spec, "implication", "delta", 0.0);
  if (!delta.ok()) return delta.status();
  auto world_spec = ParseWorld(root, overrides, /*required=*/true);
  if (!world_spec.ok()) return world_spec.status();
  auto world = BuildWorld(root, *world_spec);
  if (!world.ok()) return world.status();

  const json summary = WorldSummary(*world);
  NotionCertifier certifier(*std::move(world));
  CsvTable table({"transfer", "eps", "delta", "premise", "transferred_eps",
                  "transferred_delta", "conclusion_delta", "outcome"});
  json reports = json::array();
  std::vector<std::string> failures;
  for (Implication transfer : transfers) {
    const std::string name(ImplicationName(transfer));
    for (double eps : *grid) {
      auto report = VerifyImplication(transfer, certifier, {eps, *delta});
      if (!report.ok() &&
          report.status().code() == absl::StatusCode::kFailedPrecondition) {
        table.AddRow({name, FormatNumber(eps), FormatNumber(*delta), "", "", "",
                      "", "skipped"});
        reports.push_back(json{{"transfer", name},
                               {"eps", eps},
                               {"delta", *delta},
                               {"outcome", "skipped"},
                               {"reason", std::string(report.status().message())}});
        continue;
      }
      if (!report.ok()) {
        return Annotate(report.status(), absl::StrCat("transfer ", name));
      }
      // The premise value that drives the transfer.
      std::string premise;
      json entry{{"transfer", name},
                 {"eps", eps},
                 {"delta", *delta},
                 {"transferred_eps", report->transferred_eps},
                 {"transferred_delta", report->transferred_delta},
                 {"conclusion", CertificateJson(report->conclusion)},
                 {"conclusion_delta", report->conclusion_delta},
                 {"outcome", report->pass ? "pass" : "fail"}};
      if (report->premise.has_value()) {
        const NotionCertificate& p = *report->premise;
        const double value = p.leakage.has_value() ? *p.leakage
                             : p.eta.has_value()   ? *p.eta
                                                   : p.delta;
        premise = FormatNumber(value);
        entry["premise"] = CertificateJson(p);
      }
      table.AddRow({name, FormatNumber(eps), FormatNumber(*delta), premise,
                    FormatNumber(report->transferred_eps),
                    FormatNumber(report->transferred_delta),
                    FormatNumber(report->conclusion_delta),
                    report->pass ? "pass" : "fail"});
      reports.push_back(std::move(entry));
      if (!report->pass) {
        failures.push_back(absl::StrCat(name, " at eps ", FormatNumber(eps)));
      }
    }
  }
  ScenarioResult result;
  result.task = Task::kImplication;
  result.files["implications.csv"] = table.Render();
  result.files["implications.json"] = CanonicalJson(
      json{{"task", "implication"}, {"world", summary}, {"reports", reports}});
  if (!failures.empty()) {
    result.violation = absl::StrCat("transfer failed: ",
                                    absl::StrJoin(failures, "; "));
  }
  return result;
}

absl::StatusOr<ScenarioResult> RunSeparation(const json& root) {
  auto spec_field = Require(root, "", "separation");
  if (!spec_field.ok()) return spec_field.status();
  const json& spec = **spec_field;
  auto kind = StringField(spec, "separation", "kind");
  if (!kind.ok()) return kind.status();
  json report;
  CsvTable table({"quantity", "value"});
  bool pass = false;
  if (*kind == "parity") {
    if (auto s = CheckObject(spec, "separation", {"kind", "eps", "alpha", "n"});
        !s.ok()) {
      return s;
    }
    ParitySeparationParams params;
    auto eps = NumberField(spec, "separation", "eps", params.eps);
    if (!eps.ok()) return eps.status();
    auto alpha = NumberField(spec, "separation", "alpha", params.alpha);
    if (!alpha.ok()) return alpha.status();
    params.eps = *eps;
    params.alpha = *alpha;
    if (Find(spec, "n") != nullptr) {
      auto n = IntField(spec, "separation", "n", 1);
      if (!n.ok()) return n.status();
      params.n = static_cast<int>(*n);
    }
    auto out = RunParitySeparation(params);
    if (!out.ok()) return Annotate(out.status(), "separation");
    report = json{{"kind", "parity"},
                  {"eps", params.eps},
                  {"alpha", params.alpha},
                  {"n", params.n},
                  {"lmi_delta", out->lmi_delta},
                  {"mi_delta_at_one", out->mi_delta_at_one},
                  {"losses", out->losses},
                  {"lmi_holds", out->lmi_holds},
                  {"mi_fails", out->mi_fails},
                  {"pass", out->pass}};
    table.AddRow({"lmi_delta", FormatNumber(out->lmi_delta)});
    table.AddRow({"mi_delta_at_one", FormatNumber(out->mi_delta_at_one)});
    table.AddRow({"lmi_holds", Bool(out->lmi_holds)});
    table.AddRow({"mi_fails", Bool(out->mi_fails)});
    pass = out->pass;
  } else if (*kind == "element_release") {
    if (auto s = CheckObject(spec, "separation",
                             {"kind", "domain_size", "n", "delta", "weights"});
        !s.ok()) {
      return s;
    }
    ElementReleaseSeparationParams params;
    if (Find(spec, "domain_size") != nullptr) {
      auto d = IntField(spec, "separation", "domain_size", 1);
      if (!d.ok()) return d.status();
      params.domain_size = static_cast<int>(*d);
    }
    if (Find(spec, "n") != nullptr) {
      auto n = IntField(spec, "separation", "n", 1);
      if (!n.ok()) return n.status();
      params.n = static_cast<int>(*n);
    }
    auto delta = NumberField(spec, "separation", "delta", params.delta);
    if (!delta.ok()) return delta.status();
    params.delta = *delta;
    if (const json* w = Find(spec, "weights"); w != nullptr) {
      auto weights = ReadNumbers(*w, "separation.weights");
      if (!weights.ok()) return weights.status();
      params.weights = *std::move(weights);
    }
    auto out = RunElementReleaseSeparation(params);
    if (!out.ok()) return Annotate(out.status(), "separation");
    report = json{{"kind", "element_release"},
                  {"domain_size", params.domain_size},
                  {"n", params.n},
                  {"delta", params.delta},
                  {"lmi_delta_at_one", out->lmi_delta_at_one},
                  {"lmi_threshold", out->lmi_threshold},
                  {"lmi_margin", out->lmi_margin},
                  {"lss_eps", out->lss_eps},
                  {"lss_delta", out->lss_delta},
                  {"lss_vacuous", out->lss_vacuous},
                  {"lmi_fails", out->lmi_fails},
                  {"lss_holds", out->lss_holds},
                  {"pass", out->pass}};
    table.AddRow({"lmi_delta_at_one", FormatNumber(out->lmi_delta_at_one)});
    table.AddRow({"lmi_threshold", FormatNumber(out->lmi_threshold)});
    table.AddRow({"lmi_margin", FormatNumber(out->lmi_margin)});
    table.AddRow({"lss_eps", FormatNumber(out->lss_eps)});
    table.AddRow({"lss_delta", FormatNumber(out->lss_delta)});
    table.AddRow({"lmi_fails", Bool(out->lmi_fails)});
    table.AddRow({"lss_holds", Bool(out->lss_holds)});
    pass = out->pass;
  } else {
    return FieldError("separation.kind", "expected 'parity' or 'element_release'");
  }
  table.AddRow({"pass", Bool(pass)});
  report["task"] = "separation";
  ScenarioResult result;
  result.task = Task::kSeparation;
  result.files["separation.csv"] = table.Render();
  result.files["separation.json"] = CanonicalJson(report);
  if (!pass) result.violation = "separation did not hold";
  return result;
}

absl::StatusOr<ScenarioResult> RunCompose(const json& root,
                                          const ScenarioOverrides& overrides) {
  auto spec_field = Require(root, "", "compose");
  if (!spec_field.ok()) return spec_field.status();
  const json& spec = **spec_field;
  if (auto s = CheckObject(spec, "compose",
                           {"rule", "delta_prime", "rounds", "analyst"});
      !s.ok()) {
    return s;
  }
  std::string rule = "linear";
  if (Find(spec, "rule") != nullptr) {
    auto r = StringField(spec, "compose", "rule");
    if (!r.ok()) return r.status();
    rule = *r;
  }
  if (rule != "linear" && rule != "advanced") {
    return FieldError("compose.rule", "expected 'linear' or 'advanced'");
  }
  double delta_prime = 0.0;
  if (rule == "advanced") {
    auto d = NumberField(spec, "compose", "delta_prime");
    if (!d.ok()) return d.status();
    delta_prime = *d;
  }
  auto world_spec = ParseWorld(root, overrides, /*required=*/true);
  if (!world_spec.ok()) return world_spec.status();
  if (Find(root.at("world"), "mechanism") != nullptr) {
    return FieldError("world.mechanism",
                      "compose scenarios declare mechanisms per round");
  }
  std::vector<RoundParams> params;
  auto rounds = ParseRounds(spec, "compose", *world_spec->space,
                            world_spec->queries, &params);
  if (!rounds.ok()) return rounds.status();
  auto analyst = ParseAnalyst(spec, "compose", *rounds);
  if (!analyst.ok()) return analyst.status();
  auto run = RunAdaptive(*world_spec->space, *world_spec->prior, *analyst,
                         *std::move(rounds), world_spec->budget);
  if (!run.ok()) return Annotate(run.status(), "compose");
  auto check = rule == "linear"
                   ? CheckLinearComposition(*run, params)
                   : CheckAdvancedComposition(*run, params, delta_prime);
  if (!check.ok()) return Annotate(check.status(), "compose");
  auto decomposition = CheckViewLossDecomposition(*run);
  if (!decomposition.ok()) return Annotate(decomposition.status(), "compose");

  CsvTable table({"row", "eps", "delta_bound", "delta_measured", "holds"});
  json premises = json::array();
  for (std::size_t i = 0; i < check->premises.size(); ++i) {
    const RoundPremise& p = check->premises[i];
    table.AddRow({absl::StrCat("round ", p.round), FormatNumber(params[i].eps),
                  FormatNumber(params[i].delta), FormatNumber(p.worst_delta),
                  Bool(p.holds)});
    premises.push_back(json{{"round", p.round},
                            {"eps", params[i].eps},
                            {"delta", params[i].delta},
                            {"alpha", params[i].alpha},
                            {"worst_delta", p.worst_delta},
                            {"worst_expected_loss", p.worst_expected_loss},
                            {"worst_query", p.worst_query},
                            {"posteriors_checked", p.posteriors_checked},
                            {"holds", p.holds}});
  }
  table.AddRow({"total", FormatNumber(check->bound.eps),
                FormatNumber(check->bound.delta),
                FormatNumber(check->end_to_end_delta), Bool(check->pass)});
  json report{{"task", "compose"},
              {"rule", rule},
              {"k", run->k()},
              {"views", run->leaves.size()},
              {"premises", premises},
              {"premises_hold", check->premises_hold},
              {"bound", json{{"eps", check->bound.eps},
                             {"delta", check->bound.delta}}},
              {"end_to_end_delta", check->end_to_end_delta},
              {"pass", check->pass},
              {"decomposition",
               json{{"product_residual", decomposition->product_residual},
                    {"loss_excess", decomposition->loss_excess},
                    {"mass_residual", decomposition->mass_residual},
                    {"pass", decomposition->pass}}}};
  if (rule == "advanced") report["delta_prime"] = delta_prime;

  ScenarioResult result;
  result.task = Task::kCompose;
  result.files["compose.csv"] = table.Render();
  result.files["compose.json"] = CanonicalJson(report);
  if (check->premises_hold && !check->pass) {
    result.violation = "composition bound failed although every premise held";
  } else if (!decomposition->pass) {
    result.violation = "view loss decomposition failed";
  }
  return result;
}

absl::StatusOr<QueryMechanism> ParseAnswers(const json& spec,
                                            std::string_view path,
                                            double delta_bound) {
  const json* answers = Find(spec, "answers");
  if (answers == nullptr) return ExactAnswers();
  const std::string answers_path = Path(path, "answers");
  if (auto s = CheckObject(*answers, answers_path,
                           {"type", "scale", "grid_step", "grid_halfwidth"});
      !s.ok()) {
    return s;
  }
  auto type = StringField(*answers, answers_path, "type");
  if (!type.ok()) return type.status();
  if (*type == "exact") return ExactAnswers();
  if (*type == "element") return ElementAnswers();
  if (*type != "laplace" && *type != "gaussian") {
    return FieldError(Path(answers_path, "type"),
                      "expected 'exact', 'element', 'laplace' or 'gaussian'");
  }
  auto noise = ParseNoise(*answers, answers_path, *type);
  if (!noise.ok()) return noise.status();
  auto mechanism = NoisyAnswers(*noise, delta_bound);
  if (!mechanism.ok()) return Annotate(mechanism.status(), answers_path);
  return mechanism;
}

absl::StatusOr<std::uint64_t> ResolveSeed(const json& root,
                                          const ScenarioOverrides& overrides) {
  if (overrides.seed.has_value()) return *overrides.seed;
  const json* seed = Find(root, "seed");
  if (seed == nullptr) {
    return FieldError("seed",
                      "required for Monte Carlo tasks; set it in the scenario "
                      "or pass --seed");
  }
  if (!seed->is_number_unsigned()) {
    return FieldError("seed", "expected a non-negative integer");
  }
  return seed->get<std::uint64_t>();
}

absl::StatusOr<ScenarioResult> RunMonitorTask(
    const json& root, const ScenarioOverrides& overrides) {
  auto spec_field = Require(root, "", "monitor");
  if (!spec_field.ok()) return spec_field.status();
  const json& spec = **spec_field;
  if (auto s = CheckObject(spec, "monitor",
                           {"strategy", "t", "replicates", "k", "bound",
                            "answers", "rounds", "analyst"});
      !s.ok()) {
    return s;
  }
  auto strategy = StringField(spec, "monitor", "strategy");
  if (!strategy.ok()) return strategy.status();
  if (*strategy != "reconstruct_then_overfit" && *strategy != "table") {
    return FieldError("monitor.strategy",
                      "expected 'reconstruct_then_overfit' or 'table'");
  }
  auto t = IntField(spec, "monitor", "t", 1);
  if (!t.ok()) return t.status();
  auto replicates = IntField(spec, "monitor", "replicates", 1);
  if (!replicates.ok()) return replicates.status();
  auto seed = ResolveSeed(root, overrides);
  if (!seed.ok()) return seed.status();
  auto world_spec = ParseWorld(root, overrides, /*required=*/true);
  if (!world_spec.ok()) return world_spec.status();
  if (Find(root.at("world"), "mechanism") != nullptr) {
    return FieldError("world.mechanism",
                      "monitor scenarios answer queries through "
                      "monitor.answers or monitor.rounds");
  }
  const SampleSpace& space = *world_spec->space;

  TranscriptSampler sampler;
  json strategy_json{{"strategy", *strategy}};
  if (*strategy == "reconstruct_then_overfit") {
    for (std::string_view key : {"rounds", "analyst"}) {
      if (Find(spec, key) != nullptr) {
        return FieldError(Path("monitor", key),
                          "only used by the table strategy");
      }
    }
    auto k = IntField(spec, "monitor", "k", 1);
    if (!k.ok()) return k.status();
    auto bound = NumberField(spec, "monitor", "bound", 1.0);
    if (!bound.ok()) return bound.status();
    if (!(*bound > 0.0)) return FieldError("monitor.bound", "must be positive");
    auto answers = ParseAnswers(spec, "monitor", *bound);
    if (!answers.ok()) return answers.status();
    sampler = StrategySampler(
        ReconstructThenOverfit(space.domain_size(), space.n(),
                               static_cast<int>(*k), *bound),
        *std::move(answers), static_cast<int>(*k));
    strategy_json["k"] = *k;
    strategy_json["bound"] = *bound;
    const json* answers_spec = Find(spec, "answers");
    strategy_json["answers"] =
        answers_spec == nullptr ? json{{"type", "exact"}} : *answers_spec;
  } else {
    for (std::string_view key : {"k", "bound", "answers"}) {
      if (Find(spec, key) != nullptr) {
        return FieldError(Path("monitor", key),
                          "only used by the reconstruct_then_overfit strategy");
      }
    }
    auto rounds =
        ParseRounds(spec, "monitor", space, world_spec->queries, nullptr);
    if (!rounds.ok()) return rounds.status();
    auto analyst = ParseAnalyst(spec, "monitor", *rounds);
    if (!analyst.ok()) return analyst.status();
    strategy_json["k"] = rounds->size();
    auto table_sampler = TableSampler(space, *std::move(analyst),
                                      *std::move(rounds), world_spec->queries);
    if (!table_sampler.ok()) return Annotate(table_sampler.status(), "monitor");
    sampler = *std::move(table_sampler);
  }

  MonitorOptions options;
  options.t = static_cast<int>(*t);
  options.replicates = static_cast<std::size_t>(*replicates);
  options.seed = *seed;
  auto report = RunMonitor(space, *world_spec->prior, sampler, options);
  if (!report.ok()) return Annotate(report.status(), "monitor");

  CsvTable table({"replicate", "copy", "score", "query", "selected"});
  for (const MonitorCopy& copy : report->copies) {
    table.AddRow({std::to_string(copy.replicate), std::to_string(copy.copy),
                  FormatNumber(copy.score), copy.query, Bool(copy.selected)});
  }
  json summary{{"task", "monitor"},
               {"t", report->t},
               {"replicates", report->replicates},
               {"seed", report->seed},
               {"config", strategy_json},
               {"expectation_gap", EstimateJson(report->expectation_gap)}};
  if (report->distribution_error.has_value()) {
    summary["distribution_error"] = EstimateJson(*report->distribution_error);
  }
  if (report->sample_error.has_value()) {
    summary["sample_error"] = EstimateJson(*report->sample_error);
  }
  ScenarioResult result;
  result.task = Task::kMonitor;
  result.files["monitor.csv"] = table.Render();
  result.files["monitor.json"] = CanonicalJson(summary);
  return result;
}

absl::StatusOr<json> ParseJson(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed scenario JSON: ", e.what()));
  }
}

absl::StatusOr<Task> ReadTask(const json& root) {
  if (auto s = CheckObject(root, "scenario",
                           {"description", "task", "world", "queries",
                            "budget", "seed", "certify", "implication",
                            "separation", "compose", "monitor"});
      !s.ok()) {
    return s;
  }
  auto name = StringField(root, "", "task");
  if (!name.ok()) return name.status();
  for (Task task : {Task::kCertify, Task::kImplication, Task::kSeparation,
                    Task::kCompose, Task::kMonitor}) {
    if (TaskName(task) == *name) return task;
  }
  return FieldError("task",
                    "expected certify, implication, separation, compose or "
                    "monitor");
}

}  // namespace

std::string_view TaskName(Task task) {
  switch (task) {
    case Task::kCertify:
      return "certify";
    case Task::kImplication:
      return "implication";
    case Task::kSeparation:
      return "separation";
    case Task::kCompose:
      return "compose";
    case Task::kMonitor:
      return "monitor";
  }
  return "?";
}

bool IsExperimentTask(Task task) {
  return task == Task::kCompose || task == Task::kMonitor;
}

absl::StatusOr<ScenarioResult> RunScenario(
    std::string_view json_text, const ScenarioOverrides& overrides) {
  auto root = ParseJson(json_text);
  if (!root.ok()) return root.status();
  auto task = ReadTask(*root);
  if (!task.ok()) return task.status();
  if (overrides.grid.has_value() && *task != Task::kCertify &&
      *task != Task::kImplication) {
    return FieldError("--grid", "applies only to certify and implication tasks");
  }
  switch (*task) {
    case Task::kCertify:
      return RunCertify(*root, overrides);
    case Task::kImplication:
      return RunImplication(*root, overrides);
    case Task::kSeparation:
      return RunSeparation(*root);
    case Task::kCompose:
      return RunCompose(*root, overrides);
    case Task::kMonitor:
      return RunMonitorTask(*root, overrides);
  }
  return absl::InternalError("unhandled task");
}

absl::StatusOr<std::vector<double>> ParseGrid(std::string_view text) {
  std::vector<double> out;
  const std::string joined(text);
  for (absl::string_view raw : absl::StrSplit(joined, ',')) {
    const std::string part(absl::StripAsciiWhitespace(raw));
    double value = 0.0;
    if (!absl::SimpleAtod(part, &value) || !std::isfinite(value)) {
      return FieldError("--grid", absl::StrCat("'", part, "' is not a number"));
    }
    out.push_back(value);
  }
  return out;
}

int ExitCodeFor(const absl::Status& status) {
  switch (status.code()) {
    case absl::StatusCode::kOk:
      return kExitOk;
    case absl::StatusCode::kResourceExhausted:
      return kExitBudgetExceeded;
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kFailedPrecondition:
    case absl::StatusCode::kOutOfRange:
      return kExitInputError;
    default:
      return kExitInternal;
  }
}

int RunCommand(const CommandOptions& options, std::ostream& log) {
  if (options.command != "certify" && options.command != "experiment") {
    log << "error: unknown command '" << options.command << "'\n";
    return kExitInputError;
  }
  std::ifstream in(options.scenario_path, std::ios::binary);
  if (!in) {
    log << "error: cannot read scenario '" << options.scenario_path << "'\n";
    return kExitInputError;
  }
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());

  auto root = ParseJson(text);
  absl::StatusOr<Task> task =
      root.ok() ? ReadTask(*root) : absl::StatusOr<Task>(root.status());
  if (!task.ok()) {
    log << "error: " << task.status().message() << "\n";
    return ExitCodeFor(task.status());
  }
  const bool experiment = options.command == "experiment";
  if (IsExperimentTask(*task) != experiment) {
    log << "error: task '" << TaskName(*task) << "' runs under the '"
        << (experiment ? "certify" : "experiment") << "' command\n";
    return kExitInputError;
  }

  auto result = RunScenario(text, options.overrides);
  if (!result.ok()) {
    log << "error: " << result.status().message() << "\n";
    return ExitCodeFor(result.status());
  }

  std::error_code ec;
  const std::filesystem::path out_dir(options.out_dir);
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    log << "error: cannot create '" << options.out_dir << "': " << ec.message()
        << "\n";
    return kExitInputError;
  }
  for (const auto& [name, contents] : result->files) {
    const std::filesystem::path path = out_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << contents;
    if (!out) {
      log << "error: cannot write '" << path.string() << "'\n";
      return kExitInputError;
    }
    log << "wrote " << path.string() << "\n";
  }
  if (result->violation.has_value()) {
    log << "invariant violation: " << *result->violation << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace stability_lab
