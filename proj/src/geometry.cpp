// SPDX-License-Identifier: Apache-2.0
#include "domaingame/geometry.hpp"

#include <stdexcept>

namespace domaingame::inline DOMAINGAME_ABI {

namespace {

int mod4(int r) { return ((r % 4) + 4) % 4; }

} // namespace

TransformSpec canonicalize(TransformSpec t)
{
    int r = mod4(t.rotation_quarter_turns);
    bool f = t.flip_horizontal;
    if (t.flip_vertical) {
        // flip_v after flip_h is rot180; flip_v alone is rot180 . flip_h.
        r = mod4(r + 2);
        f = !f;
    }
    return {r, f, false};
}

bool same_element(const TransformSpec& a, const TransformSpec& b) { return canonicalize(a) == canonicalize(b); }

bool is_identity(const TransformSpec& t) { return canonicalize(t) == TransformSpec{}; }

TransformSpec compose(const TransformSpec& t1, const TransformSpec& t2)
{
    // Elements are R^r F^f; F R = R^-1 F.
    const auto a = canonicalize(t1);
    const auto b = canonicalize(t2);
    const int r = a.flip_horizontal ? a.rotation_quarter_turns - b.rotation_quarter_turns
                                    : a.rotation_quarter_turns + b.rotation_quarter_turns;
    return {mod4(r), a.flip_horizontal != b.flip_horizontal, false};
}

TransformSpec invert(const TransformSpec& t)
{
    const auto c = canonicalize(t);
    if (c.flip_horizontal) return c; // reflections are involutions
    return {mod4(-c.rotation_quarter_turns), false, false};
}

std::array<TransformSpec, 8> all_transforms()
{
    std::array<TransformSpec, 8> out{};
    for (int f = 0; f < 2; ++f) {
        for (int r = 0; r < 4; ++r) out[static_cast<std::size_t>(f * 4 + r)] = {r, f == 1, false};
    }
    return out;
}

std::vector<TransformSpec> sample_transform_set(int n, Rng& rng, bool enable_rotation, bool enable_flip)
{
    if (n < 1) throw std::invalid_argument("sample_transform_set: n must be >= 1, got " + std::to_string(n));
    std::vector<TransformSpec> pool;
    if (enable_rotation && enable_flip) {
        const auto all = all_transforms();
        pool.assign(all.begin(), all.end());
    } else if (enable_rotation) {
        pool = {TransformSpec::rot90(0), TransformSpec::rot90(1), TransformSpec::rot90(2), TransformSpec::rot90(3)};
    } else if (enable_flip) {
        pool = {TransformSpec{}, canonicalize(TransformSpec::flip_h()), canonicalize(TransformSpec::flip_v()),
                canonicalize({0, true, true})};
    } else {
        return std::vector<TransformSpec>(static_cast<std::size_t>(n), TransformSpec{});
    }
    std::vector<TransformSpec> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(pool[rng.below(pool.size())]);
    return out;
}

std::string to_string(const TransformSpec& t)
{
    return "rot" + std::to_string(t.rotation_quarter_turns * 90) + (t.flip_horizontal ? "+fh" : "") +
           (t.flip_vertical ? "+fv" : "");
}

void to_json(nlohmann::json& j, const TransformSpec& t)
{
    j = nlohmann::json{{"rotation_quarter_turns", t.rotation_quarter_turns},
                       {"flip_horizontal", t.flip_horizontal},
                       {"flip_vertical", t.flip_vertical}};
}

void from_json(const nlohmann::json& j, TransformSpec& t)
{
    t.rotation_quarter_turns = j.at("rotation_quarter_turns").get<int>();
    t.flip_horizontal = j.at("flip_horizontal").get<bool>();
    t.flip_vertical = j.at("flip_vertical").get<bool>();
}

namespace detail {

SpatialMap spatial_map(const TransformSpec& t, int h, int w)
{
    const auto c = canonicalize(t);
    if ((c.rotation_quarter_turns % 2) == 1 && h != w) {
        throw ShapeError("odd quarter-turn rotation requires square trailing dims, got " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    const bool odd = (c.rotation_quarter_turns % 2) == 1;
    return {odd ? w : h, odd ? h : w, h, w, c};
}

void SpatialMap::source(int i, int j, int& si, int& sj) const
{
    // Undo the quarter turns one at a time: output (i, j) of a turn applied to
    // an hh x ww array came from input (j, ww-1-i).
    int ci = i, cj = j;
    int hh = out_h, ww = out_w;
    for (int k = 0; k < canon.rotation_quarter_turns; ++k) {
        // before this turn the array was ww x hh
        const int pi = cj;
        const int pj = hh - 1 - ci;
        const int ph = ww, pw = hh;
        ci = pi;
        cj = pj;
        hh = ph;
        ww = pw;
    }
    if (canon.flip_horizontal) cj = in_w - 1 - cj;
    si = ci;
    sj = cj;
}

} // namespace detail

} // namespace domaingame
