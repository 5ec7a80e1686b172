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

// stability_lab certify    --scenario <path> --out <dir> [--budget N] [--grid e1,e2]
// stability_lab experiment --scenario <path> --out <dir> [--seed S] [--budget N]

#include <cstddef>
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stability_lab/scenario.h"

namespace {

struct Flags {
  std::string scenario;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::string grid;
};

void AddFlags(CLI::App* command, Flags& flags) {
  command->add_option("--scenario", flags.scenario, "Scenario JSON file")
      ->required();
  command->add_option("--out", flags.out, "Directory for the reports")
      ->required();
  command->add_option("--seed", flags.seed,
                      "Seed for Monte Carlo tasks; overrides the scenario");
  command->add_option("--budget", flags.budget,
                      "Maximum number of enumerated tuples");
  command->add_option("--grid", flags.grid,
                      "Comma-separated epsilon grid; overrides the scenario");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certifies stability notions and runs adaptive experiments "
               "on finite worlds."};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* certify = app.add_subcommand(
      "certify", "Run a certify, implication or separation scenario");
  CLI::App* experiment =
      app.add_subcommand("experiment", "Run a compose or monitor scenario");
  AddFlags(certify, flags);
  AddFlags(experiment, flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? stability_lab::kExitOk : stability_lab::kExitInputError;
  }

  stability_lab::CommandOptions options;
  CLI::App* chosen = app.got_subcommand(certify) ? certify : experiment;
  options.command = chosen->get_name();
  options.scenario_path = flags.scenario;
  options.out_dir = flags.out;
  if (chosen->count("--seed") > 0) options.overrides.seed = flags.seed;
  if (chosen->count("--budget") > 0) options.overrides.max_tuples = flags.budget;
  if (chosen->count("--grid") > 0) {
    auto grid = stability_lab::ParseGrid(flags.grid);
    if (!grid.ok()) {
      std::cerr << "error: " << grid.status().message() << "\n";
      return stability_lab::kExitInputError;
    }
    options.overrides.grid = *std::move(grid);
  }
  return stability_lab::RunCommand(options, std::cerr);
}
