// SPDX-License-Identifier: Apache-2.0
//
// The `domaingame` command: generate-data, train, evaluate, ablate,
// report-plots and selftest. Exit codes: 0 success, 1 usage, 2 runtime failure.
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "domaingame/abi.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace domaingame
