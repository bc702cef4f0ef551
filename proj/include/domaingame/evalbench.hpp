// SPDX-License-Identifier: Apache-2.0
//
// Cross-domain evaluation, reports, the single-encoder baseline and the
// ablation runner.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "domaingame/game.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

/// Per-volume scores on a 0..1 scale.
struct SampleMetrics {
    std::string sample_id;
    double dice = 0;
    double jaccard = 0;
    bool operator==(const SampleMetrics&) const = default;
};

/// Per-domain statistics on a 0..100 scale; std is the population std.
struct DomainMetrics {
    std::string domain_id;
    int n_samples = 0;
    double dice_mean = 0;
    double dice_std = 0;
    double jaccard_mean = 0;
    double jaccard_std = 0;
    bool is_source = false;
    bool operator==(const DomainMetrics&) const = default;
};

struct MetricsReport {
    std::vector<DomainMetrics> domains; // source first

    const DomainMetrics& source() const;
    std::vector<const DomainMetrics*> targets() const;
    /// Equal-weight mean of the target-domain means; 0 without targets.
    double target_average_dice() const;
    double target_average_jaccard() const;
    double drop_dice() const { return source().dice_mean - target_average_dice(); }
    double drop_jaccard() const { return source().jaccard_mean - target_average_jaccard(); }
    bool operator==(const MetricsReport&) const = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

/// Maps a volume to its predicted {D,H,W} label map. Tests inject oracles here.
using VolumePredictor = std::function<LabelTensor(const VolumeRecord&)>;

VolumePredictor network_predictor(const Networks& nets);

/// Scores `sample_ids` in order. Missing ids are named in the error.
std::vector<SampleMetrics> evaluate_domain(const VolumePredictor& predict, const Benchmark& bench,
                                           const std::vector<std::string>& sample_ids);

DomainMetrics summarize_domain(const std::string& domain_id, const std::vector<SampleMetrics>& samples,
                               bool is_source);

/// Source test split plus every target domain's test split.
MetricsReport cross_domain_report(const VolumePredictor& predict, const Benchmark& bench);
MetricsReport cross_domain_report(const Networks& nets, const Benchmark& bench);

std::string report_csv(const MetricsReport& r);
MetricsReport parse_report_csv(const std::string& text);
/// Aligned plain-text table with the target average and the drop.
std::string report_table(const MetricsReport& r);

/// Writes <stem>.csv, <stem>.txt and <stem>.json next to `out`; any extension on `out` is dropped.
void write_report(const MetricsReport& r, const std::filesystem::path& out);
MetricsReport read_report(const std::filesystem::path& file);

/// Plain segmentation control: no domain encoder, no lasso, identity transform only.
TrainConfig baseline_config(TrainConfig config);
TrainingResult train_baseline_single_encoder(const TrainConfig& config, const NetConfig& net, const Benchmark& bench,
                                             const std::filesystem::path& run_dir,
                                             const TrainingOptions& options = {});

/// Networks from the best checkpoint of a run directory.
Networks load_best_networks(const std::filesystem::path& run_dir);

enum class Ablation { kNone, kDomainEncoder, kSpaceConstraint, kRotation, kFlip };

const std::vector<Ablation>& all_ablations();
std::string ablation_name(Ablation a);  // "benchmark", "w/o domain encoder", ...
std::string ablation_slug(Ablation a);  // "benchmark", "domain-encoder", ...
Ablation parse_ablation(const std::string& slug);
TrainConfig ablated_config(TrainConfig config, Ablation a);

struct AblationRow {
    Ablation ablation = Ablation::kNone;
    std::vector<std::uint64_t> seeds;
    std::vector<double> target_dice;    // per seed, 0..100
    std::vector<double> target_jaccard; // per seed, 0..100
    std::vector<double> drop;           // per seed: benchmark target Dice minus this row's

    double median_dice() const;
    double median_jaccard() const;
    double median_drop() const;
};

struct AblationTable {
    std::vector<AblationRow> rows; // benchmark first
    const AblationRow& row(Ablation a) const;
};

std::string ablation_csv(const AblationTable& t);
std::string ablation_text(const AblationTable& t);

struct AblationOptions {
    std::function<void(const std::string&)> progress;
    /// Called after each row/seed with the wall time spent training it (0 when reused).
    std::function<void(Ablation, std::uint64_t seed, const std::filesystem::path& run_dir, double seconds)> on_run;
    /// Reuses finished runs instead of retraining.
    bool resume = true;
};

/// True when `run_dir` holds a finished run whose snapshot matches these settings.
bool reusable_run(const std::filesystem::path& run_dir, const TrainConfig& train, const NetConfig& net,
                  const Benchmark& bench);

/// Trains every row for every seed under <out_dir>/<slug>/seed_<s>/ and writes
/// ablation.csv and ablation.txt into `out_dir`.
AblationTable run_ablation_suite(const TrainConfig& config, const NetConfig& net, const Benchmark& bench,
                                 const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                                 const AblationOptions& options = {});

double median(std::vector<double> v);

} // namespace domaingame
