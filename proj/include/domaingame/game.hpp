// SPDX-License-Identifier: Apache-2.0
//
// The two-player training game: transform-set sampling, the total objective
// with its gradients, alternating AdamW updates of the anatomical player
// (D_X, P_Y) and the domain player (D_Delta, P_I), and the epoch loop.
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "domaingame/geometry.hpp"
#include "domaingame/nets.hpp"
#include "domaingame/objectives.hpp"
#include "domaingame/synthdata.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct TrainConfig {
    double lambda_lasso = 5.0;
    double omega = 0.05;
    double learning_rate = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    int epochs = 60;
    int cosine_period = 30;
    int n_transforms = 4;
    bool enable_rotation = true;
    bool enable_flip = true;
    bool disable_domain_encoder = false;
    bool disable_space_constraint = false;
    int batch_size = 8;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Cosine annealing with warm restarts every `cosine_period` epochs.
double lr_at(int epoch, const TrainConfig& config);

/// Player indices into GameState::optimizer and GameGradients::grads.
enum Player : int { kAnatomyEncoder = 0, kDomainEncoder = 1, kSegmenter = 2, kReconstructor = 3 };

struct AdamMoments {
    nn::ParamSet m;
    nn::ParamSet v;
    bool operator==(const AdamMoments&) const = default;
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

/// Decoupled weight decay Adam; `step` is 1-based.
void adamw_update(nn::ParamSet& params, const nn::ParamSet& grads, AdamMoments& moments, std::uint64_t step, double lr,
                  double weight_decay);

struct GameState {
    Networks nets;
    std::uint64_t t = 0; // completed train steps
    int epoch = 0;       // 0-based epoch used by the schedule
    std::array<AdamMoments, 4> optimizer;
    Rng rng;

    nn::ParamSet& params(Player p);
    const nn::ParamSet& params(Player p) const;
    bool operator==(const GameState& o) const;
};

GameState make_game_state(const NetConfig& net, const TrainConfig& train);

/// Inputs of one step with every random choice already made.
struct PreparedBatch {
    int batch = 0;                                   // B windows
    int views = 0;                                   // n transforms per window
    Tensor inputs;                                   // {3, B*(1+n), H, W}: originals, then views b*n+i
    std::vector<LabelTensor> view_labels;            // B*n transformed centre labels
    std::vector<std::vector<TransformSpec>> transforms; // per window
    int delta_index = 0;                             // s, shared by the whole batch

    int view_column(int b, int i) const { return batch + b * views + i; }
};

PreparedBatch prepare_batch(std::span<const WindowSample> windows, const TrainConfig& config, Rng& rng);

struct GameGradients {
    LossBundle loss;
    std::array<nn::ParamSet, 4> grads;
};

/// Objective of a prepared batch and, when requested, its parameter gradients.
/// The reconstructor receives X-hat as a constant unless `full_gradient` is set,
/// in which case U_Delta also flows back into D_X.
GameGradients compute_gradients(const Networks& nets, const PreparedBatch& batch, const TrainConfig& config,
                                bool full_gradient = false);
LossBundle evaluate_objective(const Networks& nets, const PreparedBatch& batch, const TrainConfig& config);

struct StepMetrics {
    LossBundle loss; // u_x_surrogate is the soft-Dice U_X, u_delta the PSNR U_Delta
    double learning_rate = 0;
    int delta_index = 0;
};

void to_json(nlohmann::json& j, const StepMetrics& m);
void to_json(nlohmann::json& j, const LossBundle& l);
void from_json(const nlohmann::json& j, LossBundle& l);

struct NonFiniteStep : std::runtime_error {
    NonFiniteStep(const std::string& what, StepMetrics m) : std::runtime_error(what), metrics(m) {}
    StepMetrics metrics;
};

/// Parameter hashes of the four players before the step, after Phase A and after Phase B.
struct PhaseAudit {
    std::array<std::uint64_t, 4> before{}, after_a{}, after_b{};
};

StepMetrics train_step(GameState& state, std::span<const WindowSample> windows, const TrainConfig& config,
                       PhaseAudit* audit = nullptr);

/// Argmax masks for every slice of a {D,H,W} volume using 3-slice windows.
LabelTensor predict_volume(const Networks& nets, const Tensor& volume);

/// Mean over foreground classes of the per-volume hard Dice / Jaccard.
double volume_dice(const LabelTensor& pred, const LabelTensor& truth, int num_classes);
double volume_jaccard(const LabelTensor& pred, const LabelTensor& truth, int num_classes);

struct PullDiagnostics {
    double pull_x = 0;
    double pull_delta = 0;
};

/// Mean pull_loss_x / pull_loss_delta over the windows of `volumes`, each
/// with four views from the full group drawn from `seed` (identical across calls).
PullDiagnostics measure_pull(const Networks& nets, const std::vector<const VolumeRecord*>& volumes, std::uint64_t seed);

struct EpochRecord {
    int epoch = 0; // 1-based
    int steps = 0;
    double learning_rate = 0;
    LossBundle train; // per-step means
    double val_dice = 0;
    double val_pull_x = 0;
    double val_pull_delta = 0;
    bool operator==(const EpochRecord&) const = default;
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);

/// Highest val Dice; ties resolve to the earliest epoch. Returns the 1-based epoch.
int select_best_checkpoint(const std::vector<EpochRecord>& history);

struct TrainingResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    PullDiagnostics initial_pull;
    std::filesystem::path run_dir;
};

struct TrainingOptions {
    bool keep_epoch_weights = false; // full state under ckpt/epoch_<n>/ as well
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains on the source-train windows of `bench` and writes the run directory:
///   config.snapshot, history.jsonl, summary.json, ckpt/epoch_<n>/meta.json,
///   ckpt/best/{meta.json,state.ckpt}, ckpt/last/state.ckpt
TrainingResult run_training(const TrainConfig& train, const NetConfig& net, const Benchmark& bench,
                            const std::filesystem::path& run_dir, const TrainingOptions& options = {});

std::vector<EpochRecord> read_history(const std::filesystem::path& run_dir);

} // namespace domaingame
