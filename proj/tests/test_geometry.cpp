// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>

#include "domaingame/geometry.hpp"

using namespace domaingame;

namespace {

// Independent reference: step-by-step pixel loops following the documented
// convention (flips first, then counterclockwise quarter turns).
Array<int> oracle_rot90(const Array<int>& a)
{
    const int n = a.dim(0);
    Array<int> out({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = a.at(j, n - 1 - i);
    return out;
}

Array<int> oracle_apply(const TransformSpec& t, Array<int> a)
{
    const int h = a.dim(0), w = a.dim(1);
    if (t.flip_horizontal) {
        Array<int> o({h, w});
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) o.at(i, j) = a.at(i, w - 1 - j);
        a = o;
    }
    if (t.flip_vertical) {
        Array<int> o({h, w});
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) o.at(i, j) = a.at(h - 1 - i, j);
        a = o;
    }
    for (int k = 0; k < ((t.rotation_quarter_turns % 4) + 4) % 4; ++k) a = oracle_rot90(a);
    return a;
}

Array<int> distinct(int n)
{
    Array<int> a({n, n});
    for (int i = 0; i < n * n; ++i) a[static_cast<std::size_t>(i)] = i + 1;
    return a;
}

std::vector<TransformSpec> all_raw_specs()
{
    std::vector<TransformSpec> v;
    for (int r = -4; r < 8; ++r)
        for (int fh = 0; fh < 2; ++fh)
            for (int fv = 0; fv < 2; ++fv) v.push_back({r, fh == 1, fv == 1});
    return v;
}

} // namespace

TEST_CASE("apply_transform matches the fixed conventions on 2x2", "[geometry]")
{
    Array<int> a({2, 2}, std::vector<int>{1, 2, 3, 4});
    CHECK(apply_transform(TransformSpec::rot90(), a) == Array<int>({2, 2}, std::vector<int>{2, 4, 1, 3}));
    CHECK(apply_transform(TransformSpec::flip_h(), a) == Array<int>({2, 2}, std::vector<int>{2, 1, 4, 3}));
    CHECK(apply_transform(TransformSpec::identity(), a) == a);
}

TEST_CASE("apply_transform agrees with the pixel-loop oracle for every spec", "[geometry]")
{
    const auto a = distinct(5);
    for (const auto& t : all_raw_specs()) {
        INFO(to_string(t));
        CHECK(apply_transform(t, a) == oracle_apply(t, a));
    }
}

TEST_CASE("identity leaves real tensors bit-exact and leading dims are untouched", "[geometry]")
{
    Rng rng(3);
    Tensor a({2, 3, 4, 4});
    for (auto& v : a.values()) v = static_cast<Real>(rng.normal());
    CHECK(apply_transform(TransformSpec{}, a) == a);

    const auto t = TransformSpec{1, true, false};
    const auto out = apply_transform(t, a);
    REQUIRE(out.shape() == a.shape());
    for (int p = 0; p < 6; ++p) {
        Array<int> plane_idx({4, 4});
        for (int k = 0; k < 16; ++k) plane_idx[static_cast<std::size_t>(k)] = p * 16 + k;
        const auto moved = oracle_apply(t, plane_idx);
        for (int k = 0; k < 16; ++k)
            CHECK(out[static_cast<std::size_t>(p * 16 + k)] == a[static_cast<std::size_t>(moved[static_cast<std::size_t>(k)])]);
    }
}

TEST_CASE("odd rotation of non-square input is a shape error", "[geometry]")
{
    Tensor a({3, 4});
    CHECK_THROWS_AS(apply_transform(TransformSpec::rot90(), a), ShapeError);
    CHECK_NOTHROW(apply_transform(TransformSpec::rot90(2), a));
    CHECK_NOTHROW(apply_transform(TransformSpec::flip_v(), a));
    CHECK_THROWS_AS(apply_transform(TransformSpec{}, Tensor({5})), ShapeError);
}

TEST_CASE("canonicalization yields exactly 8 elements, equal iff actions equal", "[geometry]")
{
    const auto probe = distinct(3);
    std::set<std::tuple<int, bool, bool>> canon;
    const auto specs = all_raw_specs();
    for (const auto& t : specs) {
        const auto c = canonicalize(t);
        canon.insert({c.rotation_quarter_turns, c.flip_horizontal, c.flip_vertical});
    }
    CHECK(canon.size() == 8);
    for (const auto& a : specs) {
        for (const auto& b : specs) {
            const bool same_action = oracle_apply(a, probe) == oracle_apply(b, probe);
            CHECK(same_action == (canonicalize(a) == canonicalize(b)));
        }
    }
}

TEST_CASE("group laws hold by exhaustive pixel action", "[geometry]")
{
    const auto probe = distinct(3);
    const auto all = all_transforms();
    const std::set<std::vector<int>> actions = [&] {
        std::set<std::vector<int>> s;
        for (const auto& t : all) s.insert(oracle_apply(t, probe).storage());
        return s;
    }();
    REQUIRE(actions.size() == 8);

    for (const auto& a : all) {
        for (const auto& b : all) {
            const auto ab = compose(a, b);
            CHECK(canonicalize(ab) == ab);
            CHECK(actions.count(oracle_apply(ab, probe).storage()) == 1); // closure
            CHECK(oracle_apply(ab, probe) == oracle_apply(a, oracle_apply(b, probe)));
            for (const auto& c : all) {
                CHECK(compose(compose(a, b), c) == compose(a, compose(b, c)));
            }
        }
        CHECK(compose(a, TransformSpec{}) == a);
        CHECK(compose(TransformSpec{}, a) == a);
        CHECK(is_identity(compose(invert(a), a)));
        CHECK(is_identity(compose(a, invert(a))));
    }
}

TEST_CASE("compose examples", "[geometry]")
{
    const auto r = TransformSpec::rot90();
    CHECK(is_identity(compose(r, compose(r, compose(r, r)))));
    CHECK_FALSE(is_identity(compose(r, compose(r, r))));
    CHECK(is_identity(compose(TransformSpec::flip_h(), TransformSpec::flip_h())));
    CHECK_FALSE(compose(r, TransformSpec::flip_h()) == compose(TransformSpec::flip_h(), r));
    // 3x3 brute force: the two orders act differently.
    const auto probe = distinct(3);
    CHECK(oracle_apply(r, oracle_apply(TransformSpec::flip_h(), probe)) !=
          oracle_apply(TransformSpec::flip_h(), oracle_apply(r, probe)));
}

TEST_CASE("invert round-trips all 8 elements on a random 5x5 array", "[geometry]")
{
    CHECK(invert(TransformSpec{}) == TransformSpec{});
    CHECK(invert(TransformSpec::rot90()) == TransformSpec::rot90(3));
    Rng rng(11);
    Tensor a({5, 5});
    for (auto& v : a.values()) v = static_cast<Real>(rng.normal());
    for (const auto& t : all_transforms()) {
        CHECK(apply_transform(invert(t), apply_transform(t, a)) == a);
    }
}

TEST_CASE("transforms preserve label multisets and commute with pointwise maps", "[geometry][property]")
{
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(6));
        LabelTensor y({2, n, n});
        Tensor x({n, n});
        for (auto& v : y.values()) v = static_cast<std::int32_t>(rng.below(3));
        for (auto& v : x.values()) v = static_cast<Real>(rng.normal());
        const auto t = all_transforms()[rng.below(8)];
        auto before = y.storage();
        auto after = apply_transform(t, y).storage();
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        CHECK(before == after);

        auto pointwise = [](Tensor v) {
            for (auto& e : v.values()) e = std::tanh(e) * e + Real(1);
            return v;
        };
        CHECK(apply_transform(t, pointwise(x)) == pointwise(apply_transform(t, x)));
    }
}

TEST_CASE("sample_transform_set", "[geometry]")
{
    Rng a(42), b(42);
    const auto s1 = sample_transform_set(4, a, true, true);
    const auto s2 = sample_transform_set(4, b, true, true);
    CHECK(s1 == s2);
    for (const auto& t : s1) CHECK(canonicalize(t) == t);

    Rng c(1);
    for (const auto& t : sample_transform_set(7, c, false, false)) CHECK(t == TransformSpec{});

    CHECK_THROWS_AS(sample_transform_set(0, c, true, true), std::invalid_argument);

    Rng d(2);
    for (const auto& t : sample_transform_set(200, d, true, false)) CHECK_FALSE(t.flip_horizontal);
    Rng e(2);
    for (const auto& t : sample_transform_set(200, e, false, true)) {
        const bool in_flip_group = canonicalize(t) == TransformSpec{} ||
                                   same_element(t, TransformSpec::flip_h()) ||
                                   same_element(t, TransformSpec::flip_v()) ||
                                   same_element(t, TransformSpec{0, true, true});
        CHECK(in_flip_group);
    }
}

TEST_CASE("sample_transform_set is uniform over the 8 elements", "[geometry]")
{
    Rng rng(2024);
    const auto draws = sample_transform_set(10000, rng, true, true);
    std::map<std::pair<int, bool>, int> counts;
    for (const auto& t : draws) counts[{t.rotation_quarter_turns, t.flip_horizontal}]++;
    REQUIRE(counts.size() == 8);
    for (const auto& [k, v] : counts) CHECK(std::abs(v / 10000.0 - 0.125) < 0.02);
}
