// SPDX-License-Identifier: Apache-2.0
//
// Precision-neutral entry point into the double-precision gradient check.
#pragma once

#include <cstdint>

struct GradcheckSummary {
    int checked = 0;
    int failed = 0;
    int players_covered = 0;
    double worst_rel = 0;
    double tolerance = 0;
};

GradcheckSummary run_double_gradcheck(std::uint64_t seed, int per_player);
