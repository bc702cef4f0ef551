// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic multi-domain benchmark: nested-blob anatomies, a
// per-domain intensity renderer, 3-slice sliding windows and 70/10/20 splits.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "domaingame/array.hpp"
#include "domaingame/rng.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct DomainStyle {
    std::string domain_id;
    double gamma = 1.0;
    double contrast = 1.0;
    double brightness_bias = 0.0;
    double bias_field_amplitude = 0.0;
    double noise_sigma = 0.0;
    std::map<int, double> tissue_intensities;

    void validate(int num_classes) const;
    bool operator==(const DomainStyle&) const = default;
};

void to_json(nlohmann::json& j, const DomainStyle& s);
void from_json(const nlohmann::json& j, DomainStyle& s);

/// Clean tissue intensity per class used by generate_anatomy.
std::map<int, double> default_tissue_intensities(int num_classes);
/// Style that reproduces the clean template exactly.
DomainStyle identity_style(int num_classes, std::string domain_id = "identity");
/// Named presets: "source", "lowfield", "bright", "lowcontrast", "identity".
DomainStyle style_preset(const std::string& name, int num_classes);
std::vector<std::string> style_preset_names();

struct AnatomySample {
    Tensor volume;      // {D, H, W} clean tissue template in [0, 1]
    LabelTensor labels; // {D, H, W} class ids
    std::string sample_id;
};

struct AnatomyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kAnatomyMaxRetries = 64;

/// Nested smooth blobs: class k+1 sits strictly inside class k.
AnatomySample generate_anatomy(Rng& rng, int depth, int height, int width, int num_classes,
                               std::string sample_id = "");

/// clamp(((t * bias)^gamma - 0.5) * contrast + 0.5 + brightness + noise, 0, 1)
Tensor render_domain(const AnatomySample& anatomy, const DomainStyle& style, Rng& rng);

struct WindowSample {
    Tensor window;            // {3, H, W}: slices d-1, d, d+1 (edge-replicated)
    LabelTensor center_label; // {H, W}
    std::string source_sample;
    int center_index = 0;
};

std::vector<WindowSample> sliding_windows(const Tensor& volume, const LabelTensor& labels,
                                          const std::string& source_sample = "");

struct BenchmarkConfig {
    int image_size = 32;
    int depth = 8;
    int num_classes = 2;
    int source_samples = 20;
    int target_samples = 10;
    std::string source_style = "source";
    std::vector<std::string> target_styles{"lowfield", "bright", "lowcontrast"};
    /// Custom styles referenced by name; override presets of the same name.
    std::map<std::string, DomainStyle> custom_styles;
    /// Targets re-render the source test anatomies instead of fresh ones.
    bool paired_targets = false;

    bool operator==(const BenchmarkConfig&) const = default;
};

void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);

struct DomainSplit {
    std::string domain_id;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    bool operator==(const DomainSplit&) const = default;
};

struct SplitCounts {
    int train, val, test;
};

/// 70/10/20 by sample; throws std::invalid_argument when any part would be empty.
SplitCounts split_counts(int n);

struct BenchmarkManifest {
    std::uint64_t seed = 0;
    BenchmarkConfig config;
    DomainStyle source_domain;
    std::vector<DomainStyle> target_domains;
    DomainSplit source_split;
    std::vector<DomainSplit> target_splits; // test-only
    bool operator==(const BenchmarkManifest&) const = default;
};

void to_json(nlohmann::json& j, const BenchmarkManifest& m);
void from_json(const nlohmann::json& j, BenchmarkManifest& m);

struct VolumeRecord {
    std::string sample_id;
    std::string domain_id;
    Tensor image;       // rendered {D, H, W}
    LabelTensor labels; // {D, H, W}
    bool operator==(const VolumeRecord&) const = default;
};

struct Benchmark {
    BenchmarkManifest manifest;
    std::vector<VolumeRecord> volumes;

    const VolumeRecord& volume(const std::string& sample_id) const;
};

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

// On-disk layout: <dir>/manifest.json and <dir>/volumes/<sample_id>.dgv
constexpr std::uint32_t kVolumeFormatVersion = 1;
constexpr std::uint32_t kManifestFormatVersion = 1;

void write_volume(const std::filesystem::path& file, const VolumeRecord& v);
VolumeRecord read_volume(const std::filesystem::path& file);
void write_benchmark(const Benchmark& bench, const std::filesystem::path& dir);
std::string manifest_text(const BenchmarkManifest& m);
BenchmarkManifest read_manifest(const std::filesystem::path& dir);
std::filesystem::path volume_path(const std::filesystem::path& dir, const std::string& sample_id);
/// Loads every volume referenced by the manifest; missing files are named in the error.
Benchmark load_benchmark(const std::filesystem::path& dir);

} // namespace domaingame
