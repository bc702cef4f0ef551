// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file: data, model, training and evaluation sections.
// Every field has a default; unknown keys anywhere are rejected.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "domaingame/game.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct DataSection {
    BenchmarkConfig benchmark;
    std::uint64_t seed = 1;
    std::string root = "data"; // overridden by DOMAINGAME_DATA
    bool operator==(const DataSection&) const = default;
};

struct EvaluationSection {
    std::string output_dir = "results";
    std::vector<std::uint64_t> seeds{0, 1, 2}; // ablation and acceptance seed set
    bool operator==(const EvaluationSection&) const = default;
};

struct RunConfig {
    DataSection data;
    NetConfig model = desk_net_config();
    TrainConfig training;
    EvaluationSection evaluation;

    static NetConfig desk_net_config();
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses and validates; errors name the file.
RunConfig load_run_config(const std::filesystem::path& file);

/// The desk preset shipped as configs/desk.json.
RunConfig desk_run_config();

/// DOMAINGAME_DATA if set, else `fallback`.
std::filesystem::path data_root(const std::filesystem::path& fallback);

} // namespace domaingame
