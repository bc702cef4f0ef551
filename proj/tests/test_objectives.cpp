// SPDX-License-Identifier: Apache-2.0
// Built against the double-precision library so finite differences are meaningful.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "domaingame/objectives.hpp"
#include "domaingame/rng.hpp"

using namespace domaingame;
using Catch::Approx;

namespace {

Tensor random_tensor(Rng& r, std::vector<int> shape, double scale = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = scale * r.normal();
    return t;
}

LabelTensor random_labels(Rng& r, std::vector<int> shape, int k)
{
    LabelTensor t(std::move(shape));
    for (auto& v : t.values()) v = int(r.below(std::uint64_t(k)));
    return t;
}

// ---- naive oracles -------------------------------------------------------

double oracle_pull_x(const Tensor& ref, const std::vector<Tensor>& xs, const std::vector<TransformSpec>& ts)
{
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto a = apply_transform(ts[i], ref);
        double m = 0;
        for (std::size_t k = 0; k < a.size(); ++k) m += (a[k] - xs[i][k]) * (a[k] - xs[i][k]);
        s += m / a.size();
    }
    return s / xs.size();
}

double oracle_pull_delta(const std::vector<Tensor>& ds)
{
    double s = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (i == j) continue;
            ++pairs;
            double m = 0;
            for (std::size_t k = 0; k < ds[i].size(); ++k) m += std::pow(ds[j][k] - ds[i][k], 2);
            s += m / ds[i].size();
        }
    return pairs ? s / pairs : 0.0;
}

double oracle_repel(const std::vector<Tensor>& xs, const std::vector<Tensor>& ds)
{
    double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const int cd = int(ds[i].size());
        const int h = xs[i].dim(1), w = xs[i].dim(2);
        double dot = 0, na = 0, nb = 0;
        for (int c = 0; c < cd; ++c) {
            double p = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) p += xs[i].at(c, y, x);
            p /= h * w;
            dot += p * ds[i][std::size_t(c)];
            na += p * p;
            nb += ds[i][std::size_t(c)] * ds[i][std::size_t(c)];
        }
        if (na > 0 && nb > 0) s += dot * dot / (na * nb);
    }
    return s / xs.size();
}

double oracle_soft_dice(const Tensor& logits, const LabelTensor& y)
{
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    double u = 0;
    for (int c = 1; c < k; ++c) {
        double inter = 0, ps = 0, ys = 0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double z = 0;
                for (int q = 0; q < k; ++q) z += std::exp(logits.at(q, i, j));
                const double p = std::exp(logits.at(c, i, j)) / z;
                const double t = y.at(i, j) == c;
                inter += p * t;
                ps += p;
                ys += t;
            }
        u += (2 * inter + 1e-5) / (ps + ys + 1e-5);
    }
    return u / (k - 1);
}

// central-difference check of an analytic gradient, relative error with a floor
void check_gradient(Tensor& input, const Tensor& analytic, const std::function<double()>& f, double tol = 1e-6)
{
    REQUIRE(analytic.shape() == input.shape());
    const double h = 1e-6;
    for (std::size_t k = 0; k < input.size(); ++k) {
        const double keep = input[k];
        input[k] = keep + h;
        const double fp = f();
        input[k] = keep - h;
        const double fm = f();
        input[k] = keep;
        const double fd = (fp - fm) / (2 * h);
        const double err = std::abs(fd - analytic[k]) / std::max(1.0, std::abs(fd) + std::abs(analytic[k]));
        INFO("element " << k << " fd=" << fd << " analytic=" << analytic[k]);
        REQUIRE(err < tol);
    }
}

} // namespace

TEST_CASE("pull_loss_x examples")
{
    Rng r(1);
    const auto ref = random_tensor(r, {2, 4, 4});
    const auto ts = all_transforms();
    std::vector<Tensor> xs;
    for (const auto& t : ts) xs.push_back(apply_transform(t, ref));
    CHECK(pull_loss_x(ref, xs, ts) == 0.0);

    Tensor shifted = ref;
    for (auto& v : shifted.values()) v += 1;
    const std::vector<Tensor> one{shifted};
    const std::vector<TransformSpec> id{TransformSpec::identity()};
    CHECK(pull_loss_x(ref, one, id) == Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(pull_loss_x(ref, one, std::vector<TransformSpec>{}), std::invalid_argument);
    const std::vector<Tensor> wrong{Tensor({2, 4, 3})};
    CHECK_THROWS_AS(pull_loss_x(ref, wrong, id), ShapeError);
}

TEST_CASE("pull_loss_x is zero only for exact alignment")
{
    Rng r(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ref = random_tensor(r, {2, 3, 3});
        auto ts = sample_transform_set(3, r, true, true);
        std::vector<Tensor> xs;
        for (const auto& t : ts) xs.push_back(apply_transform(t, ref));
        REQUIRE(pull_loss_x(ref, xs, ts) == 0.0);
        const auto which = r.below(3);
        xs[which][r.below(xs[which].size())] += 1e-3;
        REQUIRE(pull_loss_x(ref, xs, ts) > 0.0);
    }
}

TEST_CASE("pull_loss_delta examples")
{
    const std::vector<Tensor> three{Tensor({1}, {0.0}), Tensor({1}, {1.0}), Tensor({1}, {2.0})};
    CHECK(pull_loss_delta(three) == Approx(2.0).margin(1e-12));
    CHECK(pull_loss_delta(std::vector<Tensor>{Tensor({3}, {1.0, 2.0, 3.0})}) == 0.0);
    const std::vector<Tensor> same(4, Tensor({3}, {1.0, -2.0, 0.5}));
    CHECK(pull_loss_delta(same) == 0.0);
    CHECK_THROWS_AS(pull_loss_delta(std::vector<Tensor>{}), std::invalid_argument);
    CHECK_THROWS_AS(pull_loss_delta(std::vector<Tensor>{Tensor({2}), Tensor({3})}), ShapeError);
}

TEST_CASE("repel_loss examples")
{
    auto map_with_pool = [](std::vector<double> pooled) {
        Tensor x({int(pooled.size()) + 1, 2, 2});
        for (std::size_t c = 0; c < pooled.size(); ++c)
            for (int k = 0; k < 4; ++k) x[c * 4 + std::size_t(k)] = pooled[c];
        // the extra channel lies outside the projection and must be ignored
        for (int k = 0; k < 4; ++k) x[pooled.size() * 4 + std::size_t(k)] = 7.0;
        return x;
    };
    auto one = [&](std::vector<double> p, std::vector<double> d) {
        const std::vector<Tensor> xs{map_with_pool(p)};
        const std::vector<Tensor> ds{Tensor({int(d.size())}, d)};
        return repel_loss(xs, ds);
    };
    CHECK(one({1, 0}, {0, 3}) == Approx(0.0).margin(1e-12));
    CHECK(one({1, 2}, {-2, -4}) == Approx(1.0).margin(1e-12));
    CHECK(one({1, 0}, {1, 1}) == Approx(0.5).margin(1e-12));
    CHECK(one({0, 0}, {1, 1}) == 0.0);
    CHECK(one({1, 1}, {0, 0}) == 0.0);
    const std::vector<Tensor> xs{Tensor({2, 2, 2})};
    const std::vector<Tensor> ds{Tensor({3})};
    CHECK_THROWS_AS(repel_loss(xs, ds), std::invalid_argument);
}

TEST_CASE("lasso examples")
{
    CHECK(lasso_penalty(Tensor({2, 2, 2}), Tensor({3})) == 0.0);
    CHECK(lasso_penalty(Tensor({3, 5, 2}, 1.0), Tensor({4})) == Approx(1.0));
    CHECK(lasso_penalty(Tensor({1, 1, 2}, {-1.0, 3.0}), Tensor({2}, {0.5, -0.5})) == Approx(2.5));
}

TEST_CASE("dice and jaccard examples")
{
    LabelTensor a({3, 3}), b({3, 3});
    for (int i = 0; i < 4; ++i) a[std::size_t(i)] = 1; // |A| = 4
    b[0] = 1;
    b[1] = 1; // |B| = 2, |A n B| = 2
    CHECK(dice_score(a, b, 1) == Approx(2.0 * 2 / 6).margin(1e-6));
    CHECK(jaccard_score(a, b, 1) == Approx(0.5).margin(1e-12));
    CHECK(dice_score(a, a, 1) == 1.0);
    CHECK(jaccard_score(a, a, 1) == 1.0);
    LabelTensor c({3, 3});
    c[8] = 1;
    CHECK(dice_score(a, c, 1) == 0.0);
    CHECK(jaccard_score(a, c, 1) == 0.0);
    CHECK(dice_score(LabelTensor({2, 2}), LabelTensor({2, 2}), 1) == 1.0);
    CHECK(jaccard_score(LabelTensor({2, 2}), LabelTensor({2, 2}), 1) == 1.0);
    CHECK_THROWS_AS(dice_score(a, LabelTensor({2, 3}), 1), ShapeError);
}

TEST_CASE("metric properties on random masks")
{
    Rng r(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_labels(r, {4, 4}, 3);
        const auto t = random_labels(r, {4, 4}, 3);
        for (int c = 0; c < 3; ++c) {
            std::size_t na = 0, nb = 0, both = 0, uni = 0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                na += p[k] == c;
                nb += t[k] == c;
                both += p[k] == c && t[k] == c;
                uni += p[k] == c || t[k] == c;
            }
            const double d = dice_score(p, t, c), j = jaccard_score(p, t, c);
            REQUIRE(d == Approx(na + nb ? 2.0 * both / double(na + nb) : 1.0).margin(1e-12));
            REQUIRE(j == Approx(uni ? double(both) / double(uni) : 1.0).margin(1e-12));
            REQUIRE(d == dice_score(t, p, c));
            REQUIRE(j == jaccard_score(t, p, c));
            REQUIRE((d >= 0 && d <= 1 && j >= 0 && j <= 1));
        }
    }
}

TEST_CASE("losses match naive oracles on random inputs")
{
    Rng r(4);
    for (int trial = 0; trial < 100; ++trial) {
        const int c = 2 + int(r.below(3)), s = 2 + int(r.below(3));
        const int n = 1 + int(r.below(4));
        const int cd = 1 + int(r.below(std::uint64_t(c)));
        const auto ref = random_tensor(r, {c, s, s});
        std::vector<Tensor> xs, ds;
        const auto ts = sample_transform_set(n, r, true, true);
        for (int i = 0; i < n; ++i) {
            xs.push_back(random_tensor(r, {c, s, s}));
            ds.push_back(random_tensor(r, {cd}));
        }
        const double px = pull_loss_x(ref, xs, ts), pd = pull_loss_delta(ds), rp = repel_loss(xs, ds);
        REQUIRE(px == Approx(oracle_pull_x(ref, xs, ts)).margin(1e-6));
        REQUIRE(pd == Approx(oracle_pull_delta(ds)).margin(1e-6));
        REQUIRE(rp == Approx(oracle_repel(xs, ds)).margin(1e-6));
        REQUIRE((px >= 0 && pd >= 0 && rp >= 0 && rp <= 1 + 1e-12));

        double l1x = 0, l1d = 0;
        for (auto v : xs[0].values()) l1x += std::abs(v);
        for (auto v : ds[0].values()) l1d += std::abs(v);
        REQUIRE(lasso_penalty(xs[0], ds[0]) == Approx(l1x / xs[0].size() + l1d / ds[0].size()).margin(1e-6));

        const auto logits = random_tensor(r, {c, s, s}, 2.0);
        const auto truth = random_labels(r, {s, s}, c);
        REQUIRE(soft_dice_utility(logits, truth) == Approx(oracle_soft_dice(logits, truth)).margin(1e-6));
    }
}

TEST_CASE("soft dice saturates to hard dice and stays finite")
{
    Rng r(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto truth = random_labels(r, {4, 4}, 3);
        const auto pred = random_labels(r, {4, 4}, 3);
        Tensor logits({3, 4, 4}, -20.0);
        for (std::size_t k = 0; k < pred.size(); ++k) logits[std::size_t(pred[k]) * 16 + k] = 20.0;
        double hard = 0;
        for (int c = 1; c < 3; ++c) hard += dice_score(pred, truth, c) / 2;
        REQUIRE(soft_dice_utility(logits, truth) == Approx(hard).margin(1e-3));
    }
    const double u = soft_dice_utility(Tensor({2, 4, 4}), LabelTensor({4, 4}));
    CHECK(std::isfinite(u));
    CHECK(u < 1e-5);
}

TEST_CASE("psnr examples and monotonicity")
{
    Tensor ref({4, 4}, 0.5);
    CHECK(psnr(ref, ref) == 100.0);
    Tensor est = ref;
    for (auto& v : est.values()) v += 0.1; // MSE 0.01
    CHECK(psnr(ref, est) == Approx(20.0).margin(1e-9));
    for (auto& v : est.values()) v += 0.9; // MSE 1
    CHECK(psnr(ref, est) == Approx(0.0).margin(1e-9));
    Tensor tiny = ref;
    tiny[0] += 1e-9;
    CHECK(psnr(ref, tiny) == 100.0);

    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 60; ++k) {
        Tensor e = ref;
        const double offset = 0.01 * k;
        for (auto& v : e.values()) v += offset;
        const double p = psnr(ref, e);
        REQUIRE(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS(psnr(ref, Tensor({4, 3})), ShapeError);
    CHECK_THROWS_AS(psnr(ref, ref, 0.0), std::invalid_argument);
}

TEST_CASE("total objective composition")
{
    LossBundle z;
    CHECK(total_objective(z, 5, 0.05).total == 0.0);
    LossBundle l;
    l.lasso = 1;
    CHECK(total_objective(l, 5, 0.05).total == Approx(5.0));
    LossBundle u;
    u.u_delta = 20;
    CHECK(total_objective(u, 5, 0.05).total == Approx(-1.0));
    LossBundle all{0.1, 0.2, 0.3, 0.4, 0.5, 30, 0};
    CHECK(total_objective(all, 2, 0.1).total == Approx(2 * 0.4 + 0.1 + 0.2 + 0.3 - 0.5 - 3.0));
    CHECK_THROWS_AS(total_objective(z, -1, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(total_objective(z, 5, -0.05), std::invalid_argument);
    LossBundle bad;
    bad.repel = std::nan("");
    try {
        total_objective(bad, 5, 0.05);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(e.term == "repel");
    }
}

TEST_CASE("argmax picks the largest logit")
{
    Tensor logits({3, 1, 2}, {0.0, 5.0, 1.0, 2.0, 3.0, -1.0});
    const auto m = argmax_classes(logits);
    CHECK(m[0] == 2);
    CHECK(m[1] == 0);
}

TEST_CASE("analytic gradients match finite differences")
{
    Rng r(6);
    for (int trial = 0; trial < 5; ++trial) {
        auto ref = random_tensor(r, {3, 3, 3});
        const auto ts = sample_transform_set(3, r, true, true);
        std::vector<Tensor> xs{random_tensor(r, {3, 3, 3}), random_tensor(r, {3, 3, 3}), random_tensor(r, {3, 3, 3})};
        std::vector<Tensor> ds{random_tensor(r, {2}), random_tensor(r, {2}), random_tensor(r, {2})};

        Tensor dref;
        std::vector<Tensor> dxs, dds, rdx, rdd;
        pull_loss_x(ref, xs, ts, &dref, &dxs);
        check_gradient(ref, dref, [&] { return pull_loss_x(ref, xs, ts); });
        check_gradient(xs[1], dxs[1], [&] { return pull_loss_x(ref, xs, ts); });

        pull_loss_delta(ds, &dds);
        for (std::size_t i = 0; i < 3; ++i) check_gradient(ds[i], dds[i], [&] { return pull_loss_delta(ds); });

        repel_loss(xs, ds, &rdx, &rdd);
        for (std::size_t i = 0; i < 3; ++i) {
            check_gradient(xs[i], rdx[i], [&] { return repel_loss(xs, ds); });
            check_gradient(ds[i], rdd[i], [&] { return repel_loss(xs, ds); });
        }

        Tensor lx, ld;
        lasso_penalty(xs[0], ds[0], &lx, &ld);
        check_gradient(xs[0], lx, [&] { return lasso_penalty(xs[0], ds[0]); });
        check_gradient(ds[0], ld, [&] { return lasso_penalty(xs[0], ds[0]); });

        auto logits = random_tensor(r, {3, 4, 4});
        const auto truth = random_labels(r, {4, 4}, 3);
        Tensor dl;
        soft_dice_utility(logits, truth, &dl);
        check_gradient(logits, dl, [&] { return soft_dice_utility(logits, truth); });

        const auto img = random_tensor(r, {3, 4, 4}, 0.3);
        auto est = random_tensor(r, {3, 4, 4}, 0.3);
        Tensor de;
        psnr(img, est, 1.0, &de);
        check_gradient(est, de, [&] { return psnr(img, est); }, 1e-5);
    }
}
