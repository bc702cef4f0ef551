// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container for a GameState: NetConfig, counters, the four
// parameter sets, optimizer moments and the RNG state.
#pragma once

#include <filesystem>

#include <json.hpp>

#include "domaingame/game.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// `meta` is stored verbatim as JSON text next to the state.
void save_checkpoint(const std::filesystem::path& file, const GameState& state, const nlohmann::json& meta = {});

struct LoadedCheckpoint {
    GameState state;
    nlohmann::json meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Accepts either a checkpoint file or a directory containing state.ckpt.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

} // namespace domaingame
