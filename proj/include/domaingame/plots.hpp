// SPDX-License-Identifier: Apache-2.0
//
// Static report figures: a per-domain Dice bar chart (SVG) and
// image/label/prediction triptychs (binary PPM).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "domaingame/evalbench.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // row-major RGB

    std::string ppm() const;
    bool operator==(const RgbImage&) const = default;
};

/// Bars are dice_mean with +-std whiskers; the source bar comes first.
std::string dice_bar_chart_svg(const MetricsReport& report);

/// Slice {H,W} in grey, then ground truth and prediction as class colours,
/// side by side, each pixel enlarged `scale` times.
RgbImage triptych(const Tensor& slice, const LabelTensor& truth, const LabelTensor& pred, int scale = 4);

/// Writes dice.svg and, when `bench` and `predict` are given, up to
/// `per_domain` triptychs per domain (centre slice of the first test volumes).
/// Returns the written files in order.
std::vector<std::filesystem::path> write_plots(const MetricsReport& report, const std::filesystem::path& out_dir,
                                               const Benchmark* bench = nullptr,
                                               const VolumePredictor* predict = nullptr, int per_domain = 3);

} // namespace domaingame
