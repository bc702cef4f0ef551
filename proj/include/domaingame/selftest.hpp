// SPDX-License-Identifier: Apache-2.0
//
// Quick built-in checks: metric functions against brute-force loops, and the
// group laws of the transform set. Run by `domaingame selftest`.
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "domaingame/abi.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct SelftestResult {
    int passed = 0;
    int failed = 0;
    std::vector<std::string> failures;
};

constexpr double kOracleTolerance = 1e-6;

/// Metric functions against brute-force loops on `trials` random inputs each.
SelftestResult run_metric_oracles(std::ostream& log, int trials = 100, std::uint64_t seed = 2024);

/// Closure, identity, inverse and round trips by pixel action on a 3x3 array of distinct values.
SelftestResult run_group_laws(std::ostream& log);

/// Both of the above; one line per check goes to `log`.
SelftestResult run_selftest(std::ostream& log, int trials = 100, std::uint64_t seed = 2024);

} // namespace domaingame
