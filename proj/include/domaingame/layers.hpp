// SPDX-License-Identifier: Apache-2.0
//
// Layer kernels with explicit backward passes. Feature batches use a
// channel-major layout {C, N, H, W} so that every convolution is a single
// GEMM over all samples in the batch.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domaingame/array.hpp"

namespace domaingame::inline DOMAINGAME_ABI::nn {

constexpr Real kLeakySlope = Real(0.2);

/// Named parameter tensors of one network; gradients use the same layout.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t add(std::string name, std::vector<int> shape);
    std::size_t parameter_count() const;
    ParamSet zeros_like() const;
    void set_zero();
    /// FNV-1a over names, shapes and raw values.
    std::uint64_t hash() const;

    Tensor& operator[](std::size_t i) { return tensors[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors[i]; }
    std::size_t size() const { return tensors.size(); }
    bool operator==(const ParamSet&) const = default;
};

struct ConvCache {
    std::vector<int> in_shape;
    Tensor col; // im2col matrix (or the input itself for 1x1 convolutions)
};

/// weight {Cout, Cin, k, k}, bias {Cout}, x {Cin, N, H, W}; padding k/2.
Tensor conv2d(const Tensor& weight, const Tensor& bias, const Tensor& x, int stride, ConvCache* cache);
/// Accumulates into dweight/dbias. Returns dx when need_dx is set.
Tensor conv2d_backward(const Tensor& weight, int stride, const ConvCache& cache, const Tensor& dy, Tensor& dweight,
                       Tensor& dbias, bool need_dx);

/// 2x2 stride-2 transposed convolution: weight {Cin, Cout, 2, 2}, bias {Cout}.
Tensor conv_transpose2x2(const Tensor& weight, const Tensor& bias, const Tensor& x);
Tensor conv_transpose2x2_backward(const Tensor& weight, const Tensor& x, const Tensor& dy, Tensor& dweight,
                                  Tensor& dbias);

void leaky_relu_inplace(Tensor& x);
/// Uses the activation's output (sign-preserving) to gate dy in place.
void leaky_relu_backward_inplace(const Tensor& y, Tensor& dy);

/// {C, N, H, W} -> {C, N}
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const std::vector<int>& in_shape, const Tensor& dy);

/// weight {Out, In}, bias {Out}, x {In, N} -> {Out, N}
Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x);
Tensor linear_backward(const Tensor& weight, const Tensor& x, const Tensor& dy, Tensor& dweight, Tensor& dbias);

/// out = x * (1 + scale) + shift with scale/shift {C, N} broadcast over space.
Tensor film(const Tensor& x, const Tensor& scale, const Tensor& shift);
/// Returns dx; writes dscale/dshift ({C, N}).
Tensor film_backward(const Tensor& x, const Tensor& scale, const Tensor& dy, Tensor& dscale, Tensor& dshift);

void add_inplace(Tensor& a, const Tensor& b);

/// Sample n of a {C, N, H, W} batch as a {C, H, W} tensor, and the reverse.
Tensor take_sample(const Tensor& batch, int n);
void put_sample(Tensor& batch, int n, const Tensor& sample);
/// Stacks {C, H, W} samples into {C, N, H, W}.
Tensor stack_samples(const std::vector<const Tensor*>& samples);

/// Samples [begin, begin+count) of a channel-major batch {C, N, ...}.
Tensor slice_samples(const Tensor& batch, int begin, int count);
/// batch[:, begin:begin+count] += part
void add_slice(Tensor& batch, int begin, const Tensor& part);

} // namespace domaingame::nn
