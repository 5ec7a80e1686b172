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

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "json.hpp"
#include "stability_lab/adaptivity.h"
#include "stability_lab/mechanisms.h"
#include "stability_lab/notions.h"
#include "stability_lab/scenario.h"
#include "test_util.h"

namespace stability_lab {
namespace {

using ::stability_lab::testing::IsOk;
using ::stability_lab::testing::StatusIs;
using ::testing::HasSubstr;
using json = nlohmann::json;

namespace fs = std::filesystem;

const char kScenarioDir[] = STABILITY_LAB_SCENARIO_DIR;

class ScratchDir {
 public:
  ScratchDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            absl::StrCat("stability_lab_", info->test_suite_name(), "_",
                         info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }

  const fs::path& path() const { return path_; }

  std::string Write(const std::string& name, const std::string& contents) {
    const fs::path file = path_ / name;
    std::ofstream(file, std::ios::binary) << contents;
    return file.string();
  }

 private:
  fs::path path_;
};

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string Example(const std::string& name) {
  return (fs::path(kScenarioDir) / name).string();
}

std::vector<std::vector<std::string>> ReadCsv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(ReadFile(path));
  std::string line;
  while (std::getline(in, line)) {
    rows.push_back(absl::StrSplit(line, ','));
  }
  return rows;
}

int Invoke(const std::string& command, const std::string& scenario,
           const fs::path& out, ScenarioOverrides overrides = {},
           std::string* log = nullptr) {
  CommandOptions options;
  options.command = command;
  options.scenario_path = scenario;
  options.out_dir = out.string();
  options.overrides = std::move(overrides);
  std::ostringstream stream;
  const int code = RunCommand(options, stream);
  if (log != nullptr) *log = stream.str();
  return code;
}

std::string MonitorScenario(int t, std::size_t replicates,
                            bool with_seed = true) {
  json s{{"task", "monitor"},
         {"world", {{"domain", 5}, {"n", 6}}},
         {"monitor",
          {{"strategy", "reconstruct_then_overfit"},
           {"k", 6},
           {"t", t},
           {"replicates", replicates},
           {"answers", {{"type", "exact"}}}}}};
  if (with_seed) s["seed"] = 7;
  return s.dump();
}

TEST(CertifyCommandTest, ConstantScenarioGivesAllZeroTable) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("constant_certify.json"), dir.path() / "out"),
            kExitOk);
  auto rows = ReadCsv(dir.path() / "out" / "certificates.csv");
  ASSERT_EQ(rows[0], (std::vector<std::string>{"notion", "eps", "delta_star",
                                               "witness_size"}));
  // Five eps-indexed notions over four eps values, plus ML and LML.
  ASSERT_EQ(rows.size(), 1u + 5 * 4 + 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][2], "0") << rows[i][0] << " at eps " << rows[i][1];
    EXPECT_EQ(rows[i][3], "0") << rows[i][0] << " at eps " << rows[i][1];
  }
}

TEST(CertifyCommandTest, JsonKeysAreSortedAndNumbersUseTwelveDigits) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("laplace_certify.json"), dir.path()),
            kExitOk);
  const std::string text = ReadFile(dir.path() / "certificates.json");
  const json bundle = json::parse(text);
  ASSERT_EQ(bundle["certificates"].size(), 12u);
  // Keys are written in sorted order.
  EXPECT_LT(text.find("\"certificates\""), text.find("\"task\""));
  EXPECT_LT(text.find("\"task\""), text.find("\"world\""));
  const auto rows = ReadCsv(dir.path() / "certificates.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double delta = bundle["certificates"][i - 1]["delta"].get<double>();
    EXPECT_EQ(rows[i][2], FormatNumber(delta));
  }
}

TEST(CertifyCommandTest, LssTableMatchesLibrary) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("laplace_certify.json"), dir.path()),
            kExitOk);
  ASSERT_OK_AND_ASSIGN(SampleSpace space,
                       SampleSpace::Create(OutcomeSet::Range(3), 3));
  ASSERT_OK_AND_ASSIGN(
      SamplePrior prior,
      SamplePrior::Product(space, FiniteDist::Uniform(space.elements())));
  ASSERT_OK_AND_ASSIGN(LinearQuery query, LinearQuery::Create({0, 0.5, 1}, 1));
  NoiseSpec noise{NoiseFamily::kLaplace, 0.5, 0.25, 4};
  ASSERT_OK_AND_ASSIGN(MechanismKernel kernel,
                       BuildNoiseMechanism(query, noise, space));
  ASSERT_OK_AND_ASSIGN(World world, World::Create(space, prior, kernel));
  NotionCertifier certifier(world);
  const auto rows = ReadCsv(dir.path() / "certificates.csv");
  const std::vector<double> grid = {0.05, 0.1, 0.2, 0.4};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ASSERT_OK_AND_ASSIGN(NotionCertificate cert, certifier.Lss(grid[i]));
    EXPECT_EQ(rows[1 + i][0], "LSS");
    EXPECT_EQ(rows[1 + i][2], FormatNumber(cert.delta));
    EXPECT_EQ(rows[1 + i][3], std::to_string(cert.witness_size));
  }
}

TEST(CertifyCommandTest, GridFlagReplacesScenarioGrid) {
  ScratchDir dir;
  ScenarioOverrides overrides;
  overrides.grid = std::vector<double>{0.3};
  ASSERT_EQ(Invoke("certify", Example("laplace_certify.json"), dir.path(),
                overrides),
            kExitOk);
  const auto rows = ReadCsv(dir.path() / "certificates.csv");
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][1], "0.3");
}

TEST(CertifyCommandTest, ParityScenarioMatchesSeparationReport) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("parity_separation.json"), dir.path()),
            kExitOk);
  const json report = json::parse(ReadFile(dir.path() / "separation.json"));
  ASSERT_OK_AND_ASSIGN(ParitySeparationReport direct,
                       RunParitySeparation({0.7, 0.1, 3}));
  EXPECT_EQ(report["kind"], "parity");
  EXPECT_EQ(FormatNumber(report["lmi_delta"].get<double>()),
            FormatNumber(direct.lmi_delta));
  EXPECT_EQ(FormatNumber(report["mi_delta_at_one"].get<double>()),
            FormatNumber(direct.mi_delta_at_one));
  ASSERT_EQ(report["losses"].size(), direct.losses.size());
  for (std::size_t i = 0; i < direct.losses.size(); ++i) {
    EXPECT_EQ(FormatNumber(report["losses"][i].get<double>()),
              FormatNumber(direct.losses[i]));
  }
  EXPECT_EQ(report["pass"].get<bool>(), direct.pass);
  EXPECT_TRUE(direct.pass);
}

TEST(CertifyCommandTest, ElementReleaseScenarioMatchesSeparationReport) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("element_release_separation.json"),
                dir.path()),
            kExitOk);
  const json report = json::parse(ReadFile(dir.path() / "separation.json"));
  ASSERT_OK_AND_ASSIGN(ElementReleaseSeparationReport direct,
                       RunElementReleaseSeparation({50, 7, 0.1, {}}));
  EXPECT_EQ(FormatNumber(report["lmi_margin"].get<double>()),
            FormatNumber(direct.lmi_margin));
  EXPECT_EQ(report["pass"].get<bool>(), direct.pass);
}

TEST(CertifyCommandTest, ImplicationsPassOrAreSkipped) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("certify", Example("implication.json"), dir.path()), kExitOk);
  const auto rows = ReadCsv(dir.path() / "implications.csv");
  ASSERT_EQ(rows.size(), 1u + 5 * 3);
  int skipped = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_THAT(rows[i].back(), ::testing::AnyOf("pass", "skipped"));
    skipped += rows[i].back() == "skipped";
  }
  // The LMI transfer needs eps <= 1/3, so eps = 0.6 is skipped.
  EXPECT_EQ(skipped, 1);
}

TEST(CertifyCommandTest, MalformedJsonExitsOneWithoutOutput) {
  ScratchDir dir;
  const std::string path = dir.Write("bad.json", "{\"task\": \"certify\",\n");
  std::string log;
  EXPECT_EQ(Invoke("certify", path, dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("line 2"));
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(CertifyCommandTest, SchemaErrorsNameTheField) {
  ScratchDir dir;
  json s = json::parse(ReadFile(Example("laplace_certify.json")));
  s["world"]["mechanism"]["sclae"] = 0.5;
  std::string log;
  EXPECT_EQ(Invoke("certify", dir.Write("typo.json", s.dump()), dir.path() / "out",
                {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("world.mechanism.sclae: unknown field"));

  s["world"]["mechanism"].erase("sclae");
  s["world"]["n"] = "three";
  EXPECT_EQ(Invoke("certify", dir.Write("type.json", s.dump()), dir.path() / "out",
                {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("world.n: expected an integer"));

  s["world"]["n"] = 3;
  s["world"]["mechanism"]["query"] = "missing";
  EXPECT_EQ(Invoke("certify", dir.Write("query.json", s.dump()),
                dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("world.mechanism.query: unknown query 'missing'"));

  s["world"]["mechanism"]["query"] = "count";
  s["certify"]["notions"] = {"lss", "xx"};
  EXPECT_EQ(Invoke("certify", dir.Write("notion.json", s.dump()),
                dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("certify.notions[1]"));

  // A library error still names where it came from.
  s["certify"]["notions"] = {"lss"};
  s["world"]["mechanism"]["scale"] = -1;
  EXPECT_EQ(Invoke("certify", dir.Write("scale.json", s.dump()),
                dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("world.mechanism:"));
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(CertifyCommandTest, BudgetExceededExitsTwoWithoutOutput) {
  ScratchDir dir;
  ScenarioOverrides overrides;
  overrides.max_tuples = 8;
  std::string log;
  EXPECT_EQ(Invoke("certify", Example("laplace_certify.json"), dir.path() / "out",
                overrides, &log),
            kExitBudgetExceeded);
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(CertifyCommandTest, TaskMustMatchCommand) {
  ScratchDir dir;
  std::string log;
  EXPECT_EQ(Invoke("experiment", Example("constant_certify.json"),
                dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("'certify' command"));
  EXPECT_EQ(Invoke("certify", Example("compose_k2.json"), dir.path() / "out"),
            kExitInputError);
  EXPECT_EQ(Invoke("certify", (dir.path() / "none.json").string(),
                dir.path() / "out"),
            kExitInputError);
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(ExperimentCommandTest, OneCopyMonitorWritesOneRow) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("experiment", dir.Write("m.json", MonitorScenario(1, 1)),
                dir.path() / "out"),
            kExitOk);
  const auto rows = ReadCsv(dir.path() / "out" / "monitor.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"replicate", "copy", "score",
                                               "query", "selected"}));
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_EQ(rows[1][1], "0");
  EXPECT_EQ(rows[1][4], "true");
  const json summary = json::parse(ReadFile(dir.path() / "out" / "monitor.json"));
  EXPECT_EQ(summary["seed"].get<std::uint64_t>(), 7u);
  EXPECT_EQ(summary["t"].get<int>(), 1);
}

TEST(ExperimentCommandTest, SameSeedGivesIdenticalBytes) {
  ScratchDir dir;
  const std::string scenario = dir.Write("m.json", MonitorScenario(4, 30));
  ASSERT_EQ(Invoke("experiment", scenario, dir.path() / "a"), kExitOk);
  ASSERT_EQ(Invoke("experiment", scenario, dir.path() / "b"), kExitOk);
  for (const char* name : {"monitor.csv", "monitor.json"}) {
    EXPECT_EQ(ReadFile(dir.path() / "a" / name),
              ReadFile(dir.path() / "b" / name))
        << name;
  }
  ScenarioOverrides overrides;
  overrides.seed = 8;
  ASSERT_EQ(Invoke("experiment", scenario, dir.path() / "c", overrides), kExitOk);
  EXPECT_NE(ReadFile(dir.path() / "a" / "monitor.csv"),
            ReadFile(dir.path() / "c" / "monitor.csv"));
  const json summary = json::parse(ReadFile(dir.path() / "c" / "monitor.json"));
  EXPECT_EQ(summary["seed"].get<std::uint64_t>(), 8u);
}

TEST(ExperimentCommandTest, MissingSeedExitsOneWithoutOutput) {
  ScratchDir dir;
  std::string log;
  EXPECT_EQ(Invoke("experiment",
                dir.Write("m.json", MonitorScenario(2, 2, /*with_seed=*/false)),
                dir.path() / "out", {}, &log),
            kExitInputError);
  EXPECT_THAT(log, HasSubstr("seed: required"));
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
  ScenarioOverrides overrides;
  overrides.seed = 1;
  EXPECT_EQ(Invoke("experiment", (dir.path() / "m.json").string(),
                dir.path() / "out", overrides),
            kExitOk);
}

TEST(ExperimentCommandTest, GridFlagIsRejectedForExperiments) {
  ScratchDir dir;
  ScenarioOverrides overrides;
  overrides.grid = std::vector<double>{0.1};
  EXPECT_EQ(Invoke("experiment", Example("compose_k2.json"), dir.path() / "out",
                overrides),
            kExitInputError);
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(ExperimentCommandTest, ComposeTableMatchesLibrary) {
  ScratchDir dir;
  ASSERT_EQ(Invoke("experiment", Example("compose_k2.json"), dir.path()), kExitOk);
  const auto rows = ReadCsv(dir.path() / "compose.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"row", "eps", "delta_bound",
                                               "delta_measured", "holds"}));

  // The same run built directly.
  ASSERT_OK_AND_ASSIGN(SampleSpace space,
                       SampleSpace::Create(OutcomeSet::Range(2), 3));
  ASSERT_OK_AND_ASSIGN(
      SamplePrior prior,
      SamplePrior::Product(space, FiniteDist::Uniform(space.elements())));
  ASSERT_OK_AND_ASSIGN(LinearQuery q0, LinearQuery::Create({0, 1}, 1));
  ASSERT_OK_AND_ASSIGN(LinearQuery q1, LinearQuery::Create({1, 0}, 1));
  NoiseSpec flip{NoiseFamily::kRandomizedResponse, 0.3, 0, 0};
  std::vector<RoundMechanisms> rounds(2);
  ASSERT_OK_AND_ASSIGN(MechanismKernel k0, BuildNoiseMechanism(q0, flip, space));
  ASSERT_OK_AND_ASSIGN(MechanismKernel k1, BuildNoiseMechanism(q1, flip, space));
  rounds[0].emplace("q0", k0);
  rounds[1].emplace("q0", k0);
  rounds[1].emplace("q1", k1);
  // q1 follows a first response with at most one set bit.
  Analyst analyst = Analyst::Deterministic(
      [&](std::size_t, std::span<const std::size_t> r)
          -> absl::StatusOr<std::string> {
        if (r.empty()) return "q0";
        const std::string label = k0.responses()->label(r[0]);
        return std::count(label.begin(), label.end(), '1') <= 1 ? "q1" : "q0";
      });
  ASSERT_OK_AND_ASSIGN(AdaptiveRun run,
                       RunAdaptive(space, prior, analyst, rounds));
  const std::vector<RoundParams> params = {{0.1, 0.05, 0}, {0.1, 0.05, 0}};
  ASSERT_OK_AND_ASSIGN(CompositionCheck check,
                       CheckLinearComposition(run, params));
  ASSERT_TRUE(check.premises_hold);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(rows[1 + i][0], absl::StrCat("round ", i + 1));
    EXPECT_EQ(rows[1 + i][3], FormatNumber(check.premises[i].worst_delta));
    EXPECT_EQ(rows[1 + i][4], "true");
  }
  EXPECT_EQ(rows[3], (std::vector<std::string>{
                         "total", "0.2", "0.1",
                         FormatNumber(check.end_to_end_delta), "true"}));
  EXPECT_LE(check.end_to_end_delta, 0.1);
}

TEST(ParseGridTest, ParsesCommaSeparatedValues) {
  ASSERT_OK_AND_ASSIGN(std::vector<double> grid, ParseGrid("0, 0.05,1"));
  EXPECT_EQ(grid, (std::vector<double>{0, 0.05, 1}));
  EXPECT_THAT(ParseGrid("0.1,x"),
              StatusIs(absl::StatusCode::kInvalidArgument, HasSubstr("'x'")));
  EXPECT_THAT(ParseGrid(""), StatusIs(absl::StatusCode::kInvalidArgument));
}

TEST(ExitCodeTest, MapsStatusCodes) {
  EXPECT_EQ(ExitCodeFor(absl::OkStatus()), 0);
  EXPECT_EQ(ExitCodeFor(absl::InvalidArgumentError("")), 1);
  EXPECT_EQ(ExitCodeFor(absl::FailedPreconditionError("")), 1);
  EXPECT_EQ(ExitCodeFor(absl::ResourceExhaustedError("")), 2);
  EXPECT_EQ(ExitCodeFor(absl::InternalError("")), 3);
}

}  // namespace
}  // namespace stability_lab
