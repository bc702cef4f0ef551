// SPDX-License-Identifier: Apache-2.0
#include "domaingame/objectives.hpp"

#include <cmath>

namespace domaingame::inline DOMAINGAME_ABI {

namespace {

void check_same(const std::vector<int>& a, const std::vector<int>& b, const char* what)
{
    if (a != b) throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

void require_finite(const char* term, double v)
{
    if (!std::isfinite(v)) throw NonFiniteLoss(term, v);
}

} // namespace

double pull_loss_x(const Tensor& x_ref, std::span<const Tensor> x_set, std::span<const TransformSpec> transforms,
                   Tensor* dx_ref, std::vector<Tensor>* dx_set)
{
    const std::size_t n = x_set.size();
    if (n == 0 || transforms.size() != n) {
        throw std::invalid_argument("pull_loss_x: need n >= 1 maps and as many transforms (got " + std::to_string(n) +
                                    " and " + std::to_string(transforms.size()) + ")");
    }
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(x_ref.size()));
    if (dx_ref) *dx_ref = Tensor(x_ref.shape());
    if (dx_set) dx_set->assign(n, Tensor{});
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        check_same(x_ref.shape(), x_set[i].shape(), "pull_loss_x");
        const Tensor aligned = apply_transform(transforms[i], x_ref);
        Tensor diff(aligned.shape());
        for (std::size_t k = 0; k < aligned.size(); ++k) {
            const double d = static_cast<double>(aligned[k]) - static_cast<double>(x_set[i][k]);
            total += d * d;
            diff[k] = static_cast<Real>(2.0 * scale * d);
        }
        if (dx_set) {
            Tensor g(diff.shape());
            for (std::size_t k = 0; k < g.size(); ++k) g[k] = -diff[k];
            (*dx_set)[i] = std::move(g);
        }
        if (dx_ref) {
            // adjoint of a permutation is its inverse
            const Tensor back = apply_transform(invert(transforms[i]), diff);
            for (std::size_t k = 0; k < back.size(); ++k) (*dx_ref)[k] += back[k];
        }
    }
    return total * scale;
}

double pull_loss_delta(std::span<const Tensor> delta_set, std::vector<Tensor>* ddelta_set)
{
    const std::size_t n = delta_set.size();
    if (n == 0) throw std::invalid_argument("pull_loss_delta: empty set");
    const std::size_t dim = delta_set[0].size();
    for (const auto& d : delta_set) check_same(delta_set[0].shape(), d.shape(), "pull_loss_delta");
    const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, n * (n - 1)));
    const double per_elem = 1.0 / static_cast<double>(dim);
    if (ddelta_set) ddelta_set->assign(n, Tensor(delta_set[0].shape()));
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = static_cast<double>(delta_set[j][k]) - static_cast<double>(delta_set[i][k]);
                total += d * d * per_elem;
                if (ddelta_set) {
                    const double g = 2.0 * d * per_elem * norm;
                    (*ddelta_set)[j][k] += static_cast<Real>(g);
                    (*ddelta_set)[i][k] -= static_cast<Real>(g);
                }
            }
        }
    }
    return total * norm;
}

double repel_loss(std::span<const Tensor> x_set, std::span<const Tensor> delta_set, std::vector<Tensor>* dx_set,
                  std::vector<Tensor>* ddelta_set)
{
    const std::size_t n = x_set.size();
    if (n == 0 || delta_set.size() != n) throw std::invalid_argument("repel_loss: sets must be nonempty and equal length");
    if (dx_set) dx_set->assign(n, Tensor{});
    if (ddelta_set) ddelta_set->assign(n, Tensor{});
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& x = x_set[i];
        const Tensor& d = delta_set[i];
        if (x.rank() != 3) throw ShapeError("repel_loss: x_map must be {Cx,H,W}, got " + shape_string(x.shape()));
        const int cd = static_cast<int>(d.size());
        if (cd > x.dim(0)) {
            throw std::invalid_argument("repel_loss: delta_dim " + std::to_string(cd) + " exceeds x channels " +
                                        std::to_string(x.dim(0)));
        }
        const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * static_cast<std::size_t>(x.dim(2));
        std::vector<double> p(static_cast<std::size_t>(cd), 0.0);
        for (int c = 0; c < cd; ++c) {
            double s = 0;
            for (std::size_t k = 0; k < hw; ++k) s += x[static_cast<std::size_t>(c) * hw + k];
            p[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
        }
        double pp = 0, dd = 0, pd = 0;
        for (int c = 0; c < cd; ++c) {
            const double a = p[static_cast<std::size_t>(c)], b = d[static_cast<std::size_t>(c)];
            pp += a * a;
            dd += b * b;
            pd += a * b;
        }
        if (dx_set) (*dx_set)[i] = Tensor(x.shape());
        if (ddelta_set) (*ddelta_set)[i] = Tensor(d.shape());
        if (pp == 0.0 || dd == 0.0) continue;
        const double np = std::sqrt(pp), nd = std::sqrt(dd);
        const double cosv = pd / (np * nd);
        total += cosv * cosv;
        const double w = 2.0 * cosv / static_cast<double>(n);
        for (int c = 0; c < cd; ++c) {
            const double a = p[static_cast<std::size_t>(c)], b = d[static_cast<std::size_t>(c)];
            if (dx_set) {
                const double gp = w * (b / (np * nd) - cosv * a / pp) / static_cast<double>(hw);
                Real* dst = (*dx_set)[i].data() + static_cast<std::size_t>(c) * hw;
                for (std::size_t k = 0; k < hw; ++k) dst[k] = static_cast<Real>(gp);
            }
            if (ddelta_set) {
                (*ddelta_set)[i][static_cast<std::size_t>(c)] = static_cast<Real>(w * (a / (np * nd) - cosv * b / dd));
            }
        }
    }
    return total / static_cast<double>(n);
}

double lasso_penalty(const Tensor& x_map, const Tensor& delta_vec, Tensor* dx, Tensor* ddelta)
{
    auto mean_abs = [](const Tensor& t, Tensor* g) {
        if (t.empty()) {
            if (g) *g = Tensor(t.shape());
            return 0.0;
        }
        const double inv = 1.0 / static_cast<double>(t.size());
        double s = 0;
        if (g) *g = Tensor(t.shape());
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double v = t[k];
            s += std::abs(v);
            if (g) (*g)[k] = static_cast<Real>(v > 0 ? inv : (v < 0 ? -inv : 0.0));
        }
        return s * inv;
    };
    return mean_abs(x_map, dx) + mean_abs(delta_vec, ddelta);
}

double dice_score(const LabelTensor& pred, const LabelTensor& truth, int class_id)
{
    check_same(pred.shape(), truth.shape(), "dice_score");
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const bool p = pred[k] == class_id, t = truth[k] == class_id;
        a += p;
        b += t;
        both += p && t;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double jaccard_score(const LabelTensor& pred, const LabelTensor& truth, int class_id)
{
    check_same(pred.shape(), truth.shape(), "jaccard_score");
    std::size_t uni = 0, both = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const bool p = pred[k] == class_id, t = truth[k] == class_id;
        uni += p || t;
        both += p && t;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(both) / static_cast<double>(uni);
}

double soft_dice_utility(const Tensor& logits, const LabelTensor& truth, Tensor* dlogits)
{
    if (logits.rank() != 3) throw ShapeError("soft_dice_utility: logits must be {K,H,W}, got " + shape_string(logits.shape()));
    const int k_classes = logits.dim(0);
    check_same({logits.dim(1), logits.dim(2)}, truth.shape(), "soft_dice_utility");
    if (k_classes < 2) throw std::invalid_argument("soft_dice_utility: need at least 2 classes");
    const std::size_t hw = truth.size();

    std::vector<double> prob(static_cast<std::size_t>(k_classes) * hw);
    for (std::size_t px = 0; px < hw; ++px) {
        double mx = logits[px];
        for (int c = 1; c < k_classes; ++c) mx = std::max(mx, static_cast<double>(logits[static_cast<std::size_t>(c) * hw + px]));
        double z = 0;
        for (int c = 0; c < k_classes; ++c) {
            const double e = std::exp(static_cast<double>(logits[static_cast<std::size_t>(c) * hw + px]) - mx);
            prob[static_cast<std::size_t>(c) * hw + px] = e;
            z += e;
        }
        for (int c = 0; c < k_classes; ++c) prob[static_cast<std::size_t>(c) * hw + px] /= z;
    }

    const double nfg = static_cast<double>(k_classes - 1);
    std::vector<double> dprob(prob.size(), 0.0);
    double utility = 0;
    for (int c = 1; c < k_classes; ++c) {
        double inter = 0, psum = 0, ysum = 0;
        for (std::size_t px = 0; px < hw; ++px) {
            const double p = prob[static_cast<std::size_t>(c) * hw + px];
            const double y = truth[px] == c ? 1.0 : 0.0;
            inter += p * y;
            psum += p;
            ysum += y;
        }
        const double num = 2.0 * inter + kSoftDiceEpsilon;
        const double den = psum + ysum + kSoftDiceEpsilon;
        utility += num / den / nfg;
        if (dlogits) {
            for (std::size_t px = 0; px < hw; ++px) {
                const double y = truth[px] == c ? 1.0 : 0.0;
                dprob[static_cast<std::size_t>(c) * hw + px] = (2.0 * y / den - num / (den * den)) / nfg;
            }
        }
    }
    if (dlogits) {
        *dlogits = Tensor(logits.shape());
        for (std::size_t px = 0; px < hw; ++px) {
            double dot = 0;
            for (int c = 0; c < k_classes; ++c) {
                const std::size_t i = static_cast<std::size_t>(c) * hw + px;
                dot += prob[i] * dprob[i];
            }
            for (int c = 0; c < k_classes; ++c) {
                const std::size_t i = static_cast<std::size_t>(c) * hw + px;
                (*dlogits)[i] = static_cast<Real>(prob[i] * (dprob[i] - dot));
            }
        }
    }
    return utility;
}

double psnr(const Tensor& reference, const Tensor& estimate, double max_value, Tensor* destimate)
{
    check_same(reference.shape(), estimate.shape(), "psnr");
    if (!(max_value > 0)) throw std::invalid_argument("psnr: max_value must be positive");
    if (destimate) *destimate = Tensor(estimate.shape());
    if (reference.empty()) return kPsnrCapDb;
    double sse = 0;
    for (std::size_t k = 0; k < reference.size(); ++k) {
        const double d = static_cast<double>(estimate[k]) - static_cast<double>(reference[k]);
        sse += d * d;
    }
    const double m = static_cast<double>(reference.size());
    const double mse = sse / m;
    if (mse == 0.0) return kPsnrCapDb;
    const double value = 10.0 * std::log10(max_value * max_value / mse);
    if (value >= kPsnrCapDb) return kPsnrCapDb;
    if (destimate) {
        const double coeff = -10.0 / (std::log(10.0) * mse) * (2.0 / m);
        for (std::size_t k = 0; k < reference.size(); ++k) {
            (*destimate)[k] =
                static_cast<Real>(coeff * (static_cast<double>(estimate[k]) - static_cast<double>(reference[k])));
        }
    }
    return value;
}

LossBundle total_objective(LossBundle parts, double lambda, double omega)
{
    if (!(lambda >= 0) || !(omega >= 0)) throw std::invalid_argument("total_objective: weights must be >= 0");
    require_finite("pull_x", parts.pull_x);
    require_finite("pull_delta", parts.pull_delta);
    require_finite("repel", parts.repel);
    require_finite("lasso", parts.lasso);
    require_finite("u_x", parts.u_x_surrogate);
    require_finite("u_delta", parts.u_delta);
    parts.total = lambda * parts.lasso + parts.pull_x + parts.pull_delta + parts.repel -
                  (parts.u_x_surrogate + omega * parts.u_delta);
    require_finite("total", parts.total);
    return parts;
}

LabelTensor argmax_classes(const Tensor& logits)
{
    if (logits.rank() != 3) throw ShapeError("argmax_classes: expected {K,H,W}, got " + shape_string(logits.shape()));
    const int k_classes = logits.dim(0);
    const std::size_t hw = static_cast<std::size_t>(logits.dim(1)) * static_cast<std::size_t>(logits.dim(2));
    LabelTensor out({logits.dim(1), logits.dim(2)});
    for (std::size_t px = 0; px < hw; ++px) {
        int best = 0;
        Real bv = logits[px];
        for (int c = 1; c < k_classes; ++c) {
            const Real v = logits[static_cast<std::size_t>(c) * hw + px];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out[px] = best;
    }
    return out;
}

} // namespace domaingame
