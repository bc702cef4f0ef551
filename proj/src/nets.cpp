// SPDX-License-Identifier: Apache-2.0
#include "domaingame/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace domaingame::inline DOMAINGAME_ABI {

using nn::ConvCache;
using nn::ParamSet;

namespace {

constexpr Real kResidualInitScale = Real(0.25);

void init_normal(Tensor& t, Rng& rng, double stddev)
{
    for (auto& v : t.values()) v = static_cast<Real>(rng.normal() * stddev);
}

double fan_in(const Tensor& w)
{
    double f = 1;
    for (int i = 1; i < w.rank(); ++i) f *= w.dim(i);
    return f;
}

void he_init(Tensor& w, Rng& rng, double gain = 1.0) { init_normal(w, rng, gain * std::sqrt(2.0 / fan_in(w))); }

void split_rows(const Tensor& ab, int c, Tensor& a, Tensor& b)
{
    const int n = ab.dim(1);
    a = Tensor({c, n});
    b = Tensor({c, n});
    const std::size_t half = static_cast<std::size_t>(c) * static_cast<std::size_t>(n);
    std::copy(ab.data(), ab.data() + half, a.data());
    std::copy(ab.data() + half, ab.data() + 2 * half, b.data());
}

Tensor join_rows(const Tensor& a, const Tensor& b)
{
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

Tensor as_batch(const Tensor& sample)
{
    if (sample.rank() != 3) throw ShapeError("expected a {C,H,W} tensor, got " + shape_string(sample.shape()));
    return nn::stack_samples({&sample});
}

} // namespace

void NetConfig::validate(int image_size) const
{
    if (base_channels <= 0 || depth <= 0 || x_channels <= 0 || delta_dim <= 0 || num_classes < 2 || in_channels <= 0) {
        throw std::invalid_argument("NetConfig: all sizes must be positive and num_classes >= 2");
    }
    if (image_size > 0 && (image_size % (1 << depth)) != 0) {
        throw std::invalid_argument("NetConfig: image size " + std::to_string(image_size) +
                                    " is not divisible by 2^depth = " + std::to_string(1 << depth));
    }
}

void to_json(nlohmann::json& j, const NetConfig& c)
{
    j = nlohmann::json{{"base_channels", c.base_channels}, {"depth", c.depth},
                       {"x_channels", c.x_channels},       {"delta_dim", c.delta_dim},
                       {"num_classes", c.num_classes},     {"in_channels", c.in_channels}};
}

void from_json(const nlohmann::json& j, NetConfig& c)
{
    c.base_channels = j.at("base_channels").get<int>();
    c.depth = j.at("depth").get<int>();
    c.x_channels = j.at("x_channels").get<int>();
    c.delta_dim = j.at("delta_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.in_channels = j.value("in_channels", 3);
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(const NetConfig& cfg, int out_channels, bool pooled, Rng& rng)
    : cfg_(cfg), out_channels_(out_channels), pooled_(pooled)
{
    cfg.validate();
    const int b = cfg.base_channels;
    he_init(params[params.add("stem.w", {b, cfg.in_channels, 3, 3})], rng);
    params.add("stem.b", {b});
    for (int s = 0; s < cfg.depth; ++s) {
        const int cin = cfg.stage_channels(s), cout = cfg.stage_channels(s + 1);
        he_init(params[params.add("down" + std::to_string(s) + ".w", {cout, cin, 3, 3})], rng);
        params.add("down" + std::to_string(s) + ".b", {cout});
        he_init(params[params.add("res" + std::to_string(s) + ".w", {cout, cout, 3, 3})], rng, kResidualInitScale);
        params.add("res" + std::to_string(s) + ".b", {cout});
    }
    auto& head = params[params.add("head.w", {out_channels, cfg.stage_channels(cfg.depth), 1, 1})];
    init_normal(head, rng, std::sqrt(1.0 / fan_in(head)));
    params.add("head.b", {out_channels});
}

Tensor Encoder::forward(const Tensor& x, ForwardTape* tape) const
{
    if (x.rank() != 4 || x.dim(0) != cfg_.in_channels) {
        throw ShapeError("encoder input: expected {" + std::to_string(cfg_.in_channels) + ",N,H,W}, got " +
                         shape_string(x.shape()));
    }
    if (x.dim(2) != x.dim(3) || (x.dim(2) % (1 << cfg_.depth)) != 0) {
        throw ShapeError("encoder input: spatial size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                         " must be square and divisible by " + std::to_string(1 << cfg_.depth));
    }
    if (tape) {
        tape->conv.assign(static_cast<std::size_t>(2 * cfg_.depth + 2), ConvCache{});
        tape->act.clear();
    }
    auto cache = [&](std::size_t i) { return tape ? &tape->conv[i] : nullptr; };

    Tensor a = nn::conv2d(params[0], params[1], x, 1, cache(0));
    nn::leaky_relu_inplace(a);
    if (tape) tape->act.push_back(a);
    for (int s = 0; s < cfg_.depth; ++s) {
        const std::size_t p = 2 + 4 * static_cast<std::size_t>(s);
        a = nn::conv2d(params[p], params[p + 1], a, 2, cache(1 + 2 * s));
        nn::leaky_relu_inplace(a);
        if (tape) tape->act.push_back(a);
        Tensor r = nn::conv2d(params[p + 2], params[p + 3], a, 1, cache(2 + 2 * s));
        nn::add_inplace(r, a);
        nn::leaky_relu_inplace(r);
        a = std::move(r);
        if (tape) tape->act.push_back(a);
    }
    const std::size_t h = params.size() - 2;
    Tensor y = nn::conv2d(params[h], params[h + 1], a, 1, cache(static_cast<std::size_t>(2 * cfg_.depth + 1)));
    if (!pooled_) return y;
    if (tape) tape->pre_pool_shape = y.shape();
    return nn::global_avg_pool(y);
}

void Encoder::backward(const ForwardTape& tape, const Tensor& dy, ParamSet& grads) const
{
    const std::size_t h = params.size() - 2;
    Tensor g = pooled_ ? nn::global_avg_pool_backward(tape.pre_pool_shape, dy) : dy;
    g = nn::conv2d_backward(params[h], 1, tape.conv[static_cast<std::size_t>(2 * cfg_.depth + 1)], g, grads[h],
                            grads[h + 1], true);
    for (int s = cfg_.depth - 1; s >= 0; --s) {
        const std::size_t p = 2 + 4 * static_cast<std::size_t>(s);
        const Tensor& a_res = tape.act[static_cast<std::size_t>(2 + 2 * s)];
        const Tensor& a_down = tape.act[static_cast<std::size_t>(1 + 2 * s)];
        nn::leaky_relu_backward_inplace(a_res, g);
        Tensor through = nn::conv2d_backward(params[p + 2], 1, tape.conv[static_cast<std::size_t>(2 + 2 * s)], g,
                                             grads[p + 2], grads[p + 3], true);
        nn::add_inplace(g, through);
        nn::leaky_relu_backward_inplace(a_down, g);
        g = nn::conv2d_backward(params[p], 2, tape.conv[static_cast<std::size_t>(1 + 2 * s)], g, grads[p],
                                grads[p + 1], true);
    }
    nn::leaky_relu_backward_inplace(tape.act[0], g);
    nn::conv2d_backward(params[0], 1, tape.conv[0], g, grads[0], grads[1], false);
}

// ---------------------------------------------------------------- Decoder

Decoder::Decoder(const NetConfig& cfg, int out_channels, bool conditioned, Rng& rng)
    : cfg_(cfg), out_channels_(out_channels), conditioned_(conditioned)
{
    cfg.validate();
    he_init(params[params.add("in.w", {cfg.stage_channels(cfg.depth), cfg.x_channels, 1, 1})], rng);
    params.add("in.b", {cfg.stage_channels(cfg.depth)});
    for (int s = cfg.depth - 1; s >= 0; --s) {
        const int cin = cfg.stage_channels(s + 1), cout = cfg.stage_channels(s);
        const std::string tag = std::to_string(s);
        auto& up = params[params.add("up" + tag + ".w", {cin, cout, 2, 2})];
        init_normal(up, rng, std::sqrt(2.0 / cin));
        params.add("up" + tag + ".b", {cout});
        if (conditioned) {
            params.add("mod" + tag + ".w", {2 * cout, cfg.delta_dim}); // zero-init: starts as a pure x_map decode
            params.add("mod" + tag + ".b", {2 * cout});
        }
        he_init(params[params.add("res" + tag + ".w", {cout, cout, 3, 3})], rng, kResidualInitScale);
        params.add("res" + tag + ".b", {cout});
    }
    auto& head = params[params.add("head.w", {out_channels, cfg.base_channels, 1, 1})];
    init_normal(head, rng, std::sqrt(1.0 / fan_in(head)));
    params.add("head.b", {out_channels});
}

void Decoder::zero_modulation()
{
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params.names[i].rfind("mod", 0) == 0) params[i].fill(Real(0));
    }
}

Tensor Decoder::forward(const Tensor& x_map, const Tensor* delta, ForwardTape* tape) const
{
    if (x_map.rank() != 4 || x_map.dim(0) != cfg_.x_channels) {
        throw ShapeError("decoder input: expected {" + std::to_string(cfg_.x_channels) + ",N,h,w}, got " +
                         shape_string(x_map.shape()));
    }
    if (conditioned_) {
        if (!delta) throw std::invalid_argument("conditioned decoder requires a delta vector");
        require_shape(delta->shape(), {cfg_.delta_dim, x_map.dim(1)}, "decoder delta");
    }
    const int stride = conditioned_ ? 6 : 4;
    if (tape) {
        tape->conv.assign(static_cast<std::size_t>(cfg_.depth + 2), ConvCache{});
        tape->act.clear();
        tape->aux.clear();
        if (conditioned_) tape->cond = *delta;
    }
    auto cache = [&](std::size_t i) { return tape ? &tape->conv[i] : nullptr; };

    Tensor a = nn::conv2d(params[0], params[1], x_map, 1, cache(0));
    nn::leaky_relu_inplace(a);
    if (tape) tape->act.push_back(a);
    for (int j = 0; j < cfg_.depth; ++j) {
        const int s = cfg_.depth - 1 - j;
        const std::size_t p = 2 + static_cast<std::size_t>(stride * j);
        if (tape) tape->aux.push_back(a);
        Tensor u = nn::conv_transpose2x2(params[p], params[p + 1], a);
        nn::leaky_relu_inplace(u);
        if (tape) tape->act.push_back(u);
        std::size_t q = p + 2;
        if (conditioned_) {
            Tensor scale, shift;
            split_rows(nn::linear(params[q], params[q + 1], *delta), cfg_.stage_channels(s), scale, shift);
            u = nn::film(u, scale, shift);
            if (tape) {
                tape->aux.push_back(std::move(scale));
                tape->aux.push_back(std::move(shift));
            }
            q += 2;
        }
        Tensor r = nn::conv2d(params[q], params[q + 1], u, 1, cache(static_cast<std::size_t>(1 + j)));
        nn::add_inplace(r, u);
        nn::leaky_relu_inplace(r);
        a = std::move(r);
        if (tape) tape->act.push_back(a);
    }
    const std::size_t h = params.size() - 2;
    return nn::conv2d(params[h], params[h + 1], a, 1, cache(static_cast<std::size_t>(cfg_.depth + 1)));
}

Tensor Decoder::backward(const ForwardTape& tape, const Tensor& dy, ParamSet& grads, bool need_dx,
                         Tensor* ddelta) const
{
    const int stride = conditioned_ ? 6 : 4;
    const std::size_t h = params.size() - 2;
    Tensor g = nn::conv2d_backward(params[h], 1, tape.conv[static_cast<std::size_t>(cfg_.depth + 1)], dy, grads[h],
                                   grads[h + 1], true);
    Tensor dmod_total;
    const std::size_t aux_per_stage = conditioned_ ? 3 : 1;
    for (int j = cfg_.depth - 1; j >= 0; --j) {
        const std::size_t p = 2 + static_cast<std::size_t>(stride * j);
        const Tensor& a_res = tape.act[static_cast<std::size_t>(2 + 2 * j)];
        const Tensor& a_up = tape.act[static_cast<std::size_t>(1 + 2 * j)];
        const std::size_t aux0 = aux_per_stage * static_cast<std::size_t>(j);
        nn::leaky_relu_backward_inplace(a_res, g);
        const std::size_t q = p + (conditioned_ ? 4 : 2);
        Tensor through = nn::conv2d_backward(params[q], 1, tape.conv[static_cast<std::size_t>(1 + j)], g, grads[q],
                                             grads[q + 1], true);
        nn::add_inplace(g, through);
        if (conditioned_) {
            const Tensor& scale = tape.aux[aux0 + 1];
            Tensor dscale, dshift;
            g = nn::film_backward(a_up, scale, g, dscale, dshift);
            // every stage reads the same delta, so its gradients accumulate
            Tensor dd = nn::linear_backward(params[p + 2], tape.cond, join_rows(dscale, dshift), grads[p + 2],
                                            grads[p + 3]);
            if (dmod_total.empty()) {
                dmod_total = std::move(dd);
            } else {
                nn::add_inplace(dmod_total, dd);
            }
        }
        nn::leaky_relu_backward_inplace(a_up, g);
        g = nn::conv_transpose2x2_backward(params[p], tape.aux[aux0], g, grads[p], grads[p + 1]);
    }
    if (ddelta && conditioned_) *ddelta = std::move(dmod_total);
    nn::leaky_relu_backward_inplace(tape.act[0], g);
    return nn::conv2d_backward(params[0], 1, tape.conv[0], g, grads[0], grads[1], need_dx);
}

// ---------------------------------------------------------------- Networks

Networks::Networks(const NetConfig& cfg, std::uint64_t seed) : config(cfg)
{
    cfg.validate();
    Rng rx(derive_seed(seed, 1)), rd(derive_seed(seed, 2)), ry(derive_seed(seed, 3)), ri(derive_seed(seed, 4));
    anatomy_encoder = Encoder(cfg, cfg.x_channels, false, rx);
    domain_encoder = Encoder(cfg, cfg.delta_dim, true, rd);
    segmenter = Decoder(cfg, cfg.num_classes, false, ry);
    reconstructor = Decoder(cfg, cfg.in_channels, true, ri);
}

std::size_t Networks::parameter_count() const
{
    return anatomy_encoder.params.parameter_count() + domain_encoder.params.parameter_count() +
           segmenter.params.parameter_count() + reconstructor.params.parameter_count();
}

Tensor encode_x(const Networks& nets, const Tensor& window)
{
    return nn::take_sample(nets.anatomy_encoder.forward(as_batch(window)), 0);
}

Tensor encode_delta(const Networks& nets, const Tensor& window)
{
    const Tensor d = nets.domain_encoder.forward(as_batch(window));
    Tensor out({d.dim(0)});
    std::copy(d.data(), d.data() + d.size(), out.data());
    return out;
}

Tensor decode_segmentation(const Networks& nets, const Tensor& x_map)
{
    return nn::take_sample(nets.segmenter.forward(as_batch(x_map), nullptr), 0);
}

Tensor decode_reconstruction(const Networks& nets, const Tensor& delta_vec, const Tensor& x_map)
{
    require_shape(delta_vec.shape(), {nets.config.delta_dim}, "decode_reconstruction delta_vec");
    Tensor d({nets.config.delta_dim, 1});
    std::copy(delta_vec.data(), delta_vec.data() + delta_vec.size(), d.data());
    return nn::take_sample(nets.reconstructor.forward(as_batch(x_map), &d), 0);
}

FeaturePair encode(const Networks& nets, const Tensor& window) { return {encode_x(nets, window), encode_delta(nets, window)}; }

} // namespace domaingame
