// SPDX-License-Identifier: Apache-2.0
#include "domaingame/selftest.hpp"

#include <cmath>
#include <functional>

#include "domaingame/geometry.hpp"
#include "domaingame/objectives.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

namespace {

// rotate-after-flip written out coordinate by coordinate
Tensor naive_transform(const TransformSpec& t, const Tensor& a)
{
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor cur = a;
    if (t.flip_horizontal) {
        Tensor o(cur.shape());
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) o.at(k, i, j) = cur.at(k, i, w - 1 - j);
        cur = o;
    }
    if (t.flip_vertical) {
        Tensor o(cur.shape());
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) o.at(k, i, j) = cur.at(k, h - 1 - i, j);
        cur = o;
    }
    const int turns = ((t.rotation_quarter_turns % 4) + 4) % 4;
    for (int r = 0; r < turns; ++r) {
        Tensor o(cur.shape());
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) o.at(k, i, j) = cur.at(k, j, w - 1 - i);
        cur = o;
    }
    return cur;
}

struct Checker {
    std::ostream& log;
    SelftestResult result;

    void check(const std::string& name, bool ok)
    {
        if (ok) {
            ++result.passed;
        } else {
            ++result.failed;
            result.failures.push_back(name);
        }
        log << (ok ? "PASS " : "FAIL ") << name << "\n";
    }
};

Tensor random_tensor(std::vector<int> shape, Rng& rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
    return t;
}

LabelTensor random_labels(int h, int w, int classes, Rng& rng)
{
    LabelTensor t({h, w});
    for (auto& v : t.values()) v = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(classes)));
    return t;
}

} // namespace

SelftestResult run_metric_oracles(std::ostream& log, int trials, std::uint64_t seed)
{
    Checker ck{log, {}};
    Rng rng(seed);
    const double tol = kOracleTolerance;

    double worst_dice = 0, worst_jac = 0, worst_psnr = 0, worst_px = 0, worst_pd = 0, worst_lasso = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const int h = 2 + static_cast<int>(rng.below(7)), w = h;
        const auto pred = random_labels(h, w, 3, rng), truth = random_labels(h, w, 3, rng);
        for (int c = 0; c < 3; ++c) {
            double inter = 0, a = 0, b = 0;
            for (std::size_t k = 0; k < pred.size(); ++k) {
                inter += pred[k] == c && truth[k] == c;
                a += pred[k] == c;
                b += truth[k] == c;
            }
            const double d = a + b == 0 ? 1.0 : 2 * inter / (a + b);
            const double j = a + b - inter == 0 ? 1.0 : inter / (a + b - inter);
            worst_dice = std::max(worst_dice, std::abs(dice_score(pred, truth, c) - d));
            worst_jac = std::max(worst_jac, std::abs(jaccard_score(pred, truth, c) - j));
        }

        Tensor ref({h, w}), est({h, w});
        for (auto& v : ref.values()) v = static_cast<Real>(rng.uniform());
        for (std::size_t k = 0; k < est.size(); ++k) est[k] = ref[k] + static_cast<Real>(rng.uniform(-0.2, 0.2));
        double mse = 0;
        for (std::size_t k = 0; k < ref.size(); ++k) mse += (double(ref[k]) - est[k]) * (double(ref[k]) - est[k]);
        mse /= static_cast<double>(ref.size());
        const double p = mse == 0 ? 100.0 : std::min(100.0, 10 * std::log10(1.0 / mse));
        worst_psnr = std::max(worst_psnr, std::abs(psnr(ref, est) - p) / std::max(1.0, std::abs(p)));

        const int n = 1 + static_cast<int>(rng.below(4)), ch = 1 + static_cast<int>(rng.below(3));
        const auto x_ref = random_tensor({ch, h, w}, rng);
        std::vector<Tensor> xs;
        std::vector<TransformSpec> ts;
        double px = 0;
        for (int i = 0; i < n; ++i) {
            ts.push_back(all_transforms()[rng.below(8)]);
            xs.push_back(random_tensor({ch, h, w}, rng));
            const auto moved = naive_transform(ts.back(), x_ref);
            double s = 0;
            for (std::size_t k = 0; k < moved.size(); ++k) s += (double(moved[k]) - xs.back()[k]) * (double(moved[k]) - xs.back()[k]);
            px += s / static_cast<double>(moved.size());
        }
        px /= n;
        worst_px = std::max(worst_px, std::abs(pull_loss_x(x_ref, xs, ts) - px));

        std::vector<Tensor> ds;
        for (int i = 0; i < n; ++i) ds.push_back(random_tensor({4}, rng));
        double pd = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                double s = 0;
                for (int k = 0; k < 4; ++k) s += (double(ds[j][k]) - ds[i][k]) * (double(ds[j][k]) - ds[i][k]);
                pd += s / 4.0;
            }
        pd /= std::max(1, n * (n - 1));
        worst_pd = std::max(worst_pd, std::abs(pull_loss_delta(ds) - pd));

        double la = 0, lb = 0;
        for (auto v : x_ref.values()) la += std::abs(double(v));
        for (auto v : ds[0].values()) lb += std::abs(double(v));
        const double lasso = la / static_cast<double>(x_ref.size()) + lb / 4.0;
        worst_lasso = std::max(worst_lasso, std::abs(lasso_penalty(x_ref, ds[0]) - lasso));
    }
    const std::string suffix = " matches brute force on " + std::to_string(trials) + " inputs";
    ck.check("dice_score" + suffix, worst_dice < tol);
    ck.check("jaccard_score" + suffix, worst_jac < tol);
    ck.check("psnr" + suffix, worst_psnr < tol);
    ck.check("pull_loss_x" + suffix, worst_px < tol);
    ck.check("pull_loss_delta" + suffix, worst_pd < tol);
    ck.check("lasso_penalty" + suffix, worst_lasso < tol);

    return ck.result;
}

SelftestResult run_group_laws(std::ostream& log)
{
    Checker ck{log, {}};
    const auto g = all_transforms();
    Tensor probe({1, 3, 3});
    for (std::size_t k = 0; k < probe.size(); ++k) probe[k] = static_cast<Real>(k + 1);

    // distinct elements act distinctly, so pixel actions identify them
    std::vector<Tensor> actions;
    for (const auto& t : g) actions.push_back(naive_transform(t, probe));
    auto index_of = [&](const Tensor& a) {
        for (std::size_t i = 0; i < actions.size(); ++i)
            if (actions[i] == a) return static_cast<int>(i);
        return -1;
    };
    bool distinct = true;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) distinct = distinct && !(actions[i] == actions[j]);
    ck.check("8 canonical elements with distinct actions", g.size() == 8 && distinct);

    bool matches = true, closure = true, ident = true, inverse = true, round_trip = true, canon = true;
    const auto id = TransformSpec::identity();
    for (const auto& a : g) {
        const auto pa = apply_transform(a, probe);
        matches = matches && pa == naive_transform(a, probe);
        canon = canon && canonicalize(a) == a;
        ident = ident && apply_transform(compose(a, id), probe) == pa && apply_transform(compose(id, a), probe) == pa;
        inverse = inverse && apply_transform(compose(invert(a), a), probe) == probe &&
                  apply_transform(compose(a, invert(a)), probe) == probe;
        round_trip = round_trip && apply_transform(invert(a), pa) == probe;
        for (const auto& b : g) {
            const auto ab = apply_transform(compose(a, b), probe);
            closure = closure && ab == apply_transform(a, apply_transform(b, probe)) && index_of(ab) >= 0;
        }
    }
    ck.check("apply_transform matches explicit coordinates", matches);
    ck.check("enumerated elements are canonical", canon);
    ck.check("composition is closed", closure);
    ck.check("identity is neutral", ident);
    ck.check("every element has an inverse", inverse);
    ck.check("inverse round trips are bit-exact", round_trip);
    bool assoc = true;
    for (const auto& a : g)
        for (const auto& b : g)
            for (const auto& c : g) assoc = assoc && same_element(compose(compose(a, b), c), compose(a, compose(b, c)));
    ck.check("composition is associative", assoc);
    ck.check("rot90^4 is the identity", is_identity(TransformSpec::rot90(4)));
    ck.check("flip_v equals rot180 after flip_h",
             same_element(TransformSpec::flip_v(), compose(TransformSpec::rot90(2), TransformSpec::flip_h())));
    return ck.result;
}

SelftestResult run_selftest(std::ostream& log, int trials, std::uint64_t seed)
{
    auto r = run_metric_oracles(log, trials, seed);
    const auto g = run_group_laws(log);
    r.passed += g.passed;
    r.failed += g.failed;
    r.failures.insert(r.failures.end(), g.failures.begin(), g.failures.end());
    return r;
}

} // namespace domaingame
