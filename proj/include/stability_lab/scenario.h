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

// Scenario files: a JSON description of a world and a task, run in memory
// and rendered to CSV tables and canonical JSON reports.

#ifndef STABILITY_LAB_SCENARIO_H_
#define STABILITY_LAB_SCENARIO_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace stability_lab {

enum class Task { kCertify, kImplication, kSeparation, kCompose, kMonitor };

std::string_view TaskName(Task task);

// Compose and monitor run under the experiment command; the rest under
// certify.
bool IsExperimentTask(Task task);

// Command-line values that replace the scenario's own.
struct ScenarioOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_tuples;
  std::optional<std::vector<double>> grid;
};

// File name to contents.
using ReportFiles = std::map<std::string, std::string>;

struct ScenarioResult {
  Task task = Task::kCertify;
  ReportFiles files;
  // Set when a checked transfer or bound failed. The reports are still
  // produced.
  std::optional<std::string> violation;
};

// Schema problems are InvalidArgument errors prefixed with the field path,
// e.g. "world.mechanism.scale: expected a number".
absl::StatusOr<ScenarioResult> RunScenario(std::string_view json_text,
                                           const ScenarioOverrides& overrides);

// "0,0.05,0.1" -> {0, 0.05, 0.1}.
absl::StatusOr<std::vector<double>> ParseGrid(std::string_view text);

enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 1,
  kExitBudgetExceeded = 2,
  kExitInternal = 3,
};

int ExitCodeFor(const absl::Status& status);

struct CommandOptions {
  // "certify" or "experiment".
  std::string command;
  std::string scenario_path;
  std::string out_dir;
  ScenarioOverrides overrides;
};

// Reads, validates and runs the scenario, then writes every report under
// out_dir. Nothing is written unless the run completed.
int RunCommand(const CommandOptions& options, std::ostream& log);

}  // namespace stability_lab

#endif  // STABILITY_LAB_SCENARIO_H_
