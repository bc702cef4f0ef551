// SPDX-License-Identifier: Apache-2.0
//
// Exact symmetries of the square (quarter turns and axis flips) acting on the
// two trailing axes of an array. These are the geometric transforms under
// which anatomical features must be equivariant and domain features invariant.
#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "domaingame/array.hpp"
#include "domaingame/rng.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

/// Action: a' = rot90^rotation_quarter_turns( flip_v( flip_h(a) ) ), i.e. the
/// flips are applied first. One counterclockwise quarter turn maps
/// result[i][j] = input[j][W-1-i].
struct TransformSpec {
    int rotation_quarter_turns = 0;
    bool flip_horizontal = false;
    bool flip_vertical = false;

    static TransformSpec identity() { return {}; }
    static TransformSpec rot90(int turns = 1) { return {turns, false, false}; }
    static TransformSpec flip_h() { return {0, true, false}; }
    static TransformSpec flip_v() { return {0, false, true}; }

    bool operator==(const TransformSpec&) const = default;
};

/// Canonical form: rotation in [0,4), flip_vertical folded into the rotation
/// (flip_v == rot180 . flip_h), so exactly 8 distinct canonical values exist.
TransformSpec canonicalize(TransformSpec t);
bool same_element(const TransformSpec& a, const TransformSpec& b);
bool is_identity(const TransformSpec& t);

/// Result acts as t1 after t2.
TransformSpec compose(const TransformSpec& t1, const TransformSpec& t2);
TransformSpec invert(const TransformSpec& t);

/// The 8 canonical elements of the dihedral group of the square.
std::array<TransformSpec, 8> all_transforms();

std::vector<TransformSpec> sample_transform_set(int n, Rng& rng, bool enable_rotation, bool enable_flip);

std::string to_string(const TransformSpec& t);

void to_json(nlohmann::json& j, const TransformSpec& t);
void from_json(const nlohmann::json& j, TransformSpec& t);

namespace detail {

/// Source (row, col) in an h x w input for output position (i, j).
struct SpatialMap {
    int out_h, out_w;
    int in_h, in_w;
    TransformSpec canon;
    void source(int i, int j, int& si, int& sj) const;
};

SpatialMap spatial_map(const TransformSpec& t, int h, int w);

} // namespace detail

/// Pure index permutation over the last two axes. Odd rotations require H == W.
template <class T>
Array<T> apply_transform(const TransformSpec& t, const Array<T>& a)
{
    if (a.rank() < 2) throw ShapeError("apply_transform needs at least 2 dimensions, got " + shape_string(a.shape()));
    const int h = a.dim(-2);
    const int w = a.dim(-1);
    const auto map = detail::spatial_map(t, h, w);
    if (is_identity(map.canon)) return a;

    Array<T> out(a.shape());
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    const std::size_t planes = plane == 0 ? 0 : a.size() / plane;
    std::vector<std::size_t> index(plane);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            int si, sj;
            map.source(i, j, si, sj);
            index[static_cast<std::size_t>(i * w + j)] = static_cast<std::size_t>(si * w + sj);
        }
    }
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = a.data() + p * plane;
        T* dst = out.data() + p * plane;
        for (std::size_t k = 0; k < plane; ++k) dst[k] = src[index[k]];
    }
    return out;
}

} // namespace domaingame
