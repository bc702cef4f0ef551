// SPDX-License-Identifier: Apache-2.0
//
// The four parametric functions of the game: anatomical encoder, domain
// encoder, segmentation decoder and delta-conditioned reconstruction decoder.
// All operate on channel-major batches {C, N, H, W}; single-sample helpers
// wrap a batch of one.
#pragma once

#include <json.hpp>

#include "domaingame/layers.hpp"
#include "domaingame/rng.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

struct NetConfig {
    int base_channels = 16;
    int depth = 3;
    int x_channels = 32;
    int delta_dim = 16;
    int num_classes = 2;
    int in_channels = 3;

    /// Throws if any field is non-positive or `image_size` is not divisible by 2^depth.
    void validate(int image_size = 0) const;
    int stage_channels(int stage) const { return base_channels << stage; }
    int latent_size(int image_size) const { return image_size >> depth; }
    bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// x_map {Cx, H', W'} and the pooled delta_vec {Cd}.
struct FeaturePair {
    Tensor x_map;
    Tensor delta_vec;
};

struct ForwardTape {
    std::vector<nn::ConvCache> conv;
    std::vector<Tensor> act;
    std::vector<Tensor> aux; // transposed-conv inputs, FiLM inputs and coefficients
    std::vector<int> pre_pool_shape;
    Tensor cond; // conditioning vector of a modulated decoder
};

/// Strided-conv encoder with normalization-free residual blocks. When
/// `pooled` is set the head output is globally averaged to {Cout, N}.
class Encoder {
public:
    Encoder() = default;
    Encoder(const NetConfig& cfg, int out_channels, bool pooled, Rng& rng);

    Tensor forward(const Tensor& x, ForwardTape* tape = nullptr) const;
    /// Accumulates parameter gradients into `grads`; the input gradient is not needed.
    void backward(const ForwardTape& tape, const Tensor& dy, nn::ParamSet& grads) const;

    nn::ParamSet params;

private:
    NetConfig cfg_{};
    int out_channels_ = 0;
    bool pooled_ = false;
};

/// Decoder from the anatomical map back to full resolution. With
/// `conditioned` set, each up-stage is modulated channel-wise by
/// (scale, shift) predicted from the delta vector.
class Decoder {
public:
    Decoder() = default;
    Decoder(const NetConfig& cfg, int out_channels, bool conditioned, Rng& rng);

    Tensor forward(const Tensor& x_map, const Tensor* delta, ForwardTape* tape = nullptr) const;
    /// Returns dx_map when need_dx is set; writes ddelta when conditioned and ddelta is non-null.
    Tensor backward(const ForwardTape& tape, const Tensor& dy, nn::ParamSet& grads, bool need_dx,
                    Tensor* ddelta = nullptr) const;

    /// Zero the (scale, shift) mapping heads.
    void zero_modulation();

    nn::ParamSet params;

private:
    NetConfig cfg_{};
    int out_channels_ = 0;
    bool conditioned_ = false;
};

/// The four networks together.
struct Networks {
    NetConfig config;
    Encoder anatomy_encoder; // D_X
    Encoder domain_encoder;  // D_Delta
    Decoder segmenter;       // P_Y
    Decoder reconstructor;   // P_I

    Networks() = default;
    Networks(const NetConfig& cfg, std::uint64_t seed);
    std::size_t parameter_count() const;
};

// Single-window operations. `window` is {in_channels, H, W}.
Tensor encode_x(const Networks& nets, const Tensor& window);
Tensor encode_delta(const Networks& nets, const Tensor& window);
Tensor decode_segmentation(const Networks& nets, const Tensor& x_map);
Tensor decode_reconstruction(const Networks& nets, const Tensor& delta_vec, const Tensor& x_map);
FeaturePair encode(const Networks& nets, const Tensor& window);

} // namespace domaingame
