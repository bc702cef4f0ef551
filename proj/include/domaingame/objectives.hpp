// SPDX-License-Identifier: Apache-2.0
//
// Losses, utilities and evaluation metrics. Every differentiable term can
// optionally return gradients with respect to its tensor inputs.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "domaingame/array.hpp"
#include "domaingame/geometry.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

constexpr double kSoftDiceEpsilon = 1e-5;
constexpr double kPsnrCapDb = 100.0;

struct NonFiniteLoss : std::runtime_error {
    NonFiniteLoss(const std::string& term, double value)
        : std::runtime_error("non-finite loss term '" + term + "' (" + std::to_string(value) + ")"), term(term)
    {
    }
    std::string term;
};

/// total = lambda*lasso + pull_x + pull_delta + repel - (u_x_surrogate + omega*u_delta)
struct LossBundle {
    double pull_x = 0;
    double pull_delta = 0;
    double repel = 0;
    double lasso = 0;
    double u_x_surrogate = 0;
    double u_delta = 0;
    double total = 0;
    bool operator==(const LossBundle&) const = default;
};

/// Mean squared misalignment between each transformed reference map and the
/// map encoded from the transformed input, averaged over the set.
double pull_loss_x(const Tensor& x_ref, std::span<const Tensor> x_set, std::span<const TransformSpec> transforms,
                   Tensor* dx_ref = nullptr, std::vector<Tensor>* dx_set = nullptr);

/// Mean squared distance over all ordered pairs (i != j) of domain vectors.
double pull_loss_delta(std::span<const Tensor> delta_set, std::vector<Tensor>* ddelta_set = nullptr);

/// Mean over the set of cos^2 between the spatially pooled anatomical map
/// (first Cd channels) and the domain vector. Zero vectors give cos = 0.
double repel_loss(std::span<const Tensor> x_set, std::span<const Tensor> delta_set,
                  std::vector<Tensor>* dx_set = nullptr, std::vector<Tensor>* ddelta_set = nullptr);

/// mean|x_map| + mean|delta_vec|
double lasso_penalty(const Tensor& x_map, const Tensor& delta_vec, Tensor* dx = nullptr, Tensor* ddelta = nullptr);

/// Hard-mask overlap for one class; both-empty gives 1.
double dice_score(const LabelTensor& pred, const LabelTensor& truth, int class_id);
double jaccard_score(const LabelTensor& pred, const LabelTensor& truth, int class_id);

/// Soft Dice over foreground classes with p = softmax(logits), logits {K,H,W}.
double soft_dice_utility(const Tensor& logits, const LabelTensor& truth, Tensor* dlogits = nullptr);

/// 10*log10(max^2 / MSE), capped at 100 dB.
double psnr(const Tensor& reference, const Tensor& estimate, double max_value = 1.0, Tensor* destimate = nullptr);

/// Fills `total`; rejects negative weights and non-finite terms.
LossBundle total_objective(LossBundle parts, double lambda, double omega);

/// Per-pixel argmax over the class axis of {K,H,W} logits.
LabelTensor argmax_classes(const Tensor& logits);

} // namespace domaingame
