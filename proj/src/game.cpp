// SPDX-License-Identifier: Apache-2.0
#include "domaingame/game.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "domaingame/checkpoint.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const
{
    auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
    if (!(lambda_lasso >= 0)) fail("lambda_lasso must be >= 0");
    if (!(omega >= 0)) fail("omega must be >= 0");
    if (!(learning_rate > 0)) fail("learning_rate must be > 0");
    if (!(lr_min >= 0) || lr_min > learning_rate) fail("lr_min must be in [0, learning_rate]");
    if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (cosine_period < 1) fail("cosine_period must be >= 1");
    if (n_transforms < 1) fail("n_transforms must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = nlohmann::json{{"lambda_lasso", c.lambda_lasso},
                       {"omega", c.omega},
                       {"learning_rate", c.learning_rate},
                       {"lr_min", c.lr_min},
                       {"weight_decay", c.weight_decay},
                       {"epochs", c.epochs},
                       {"cosine_period", c.cosine_period},
                       {"n_transforms", c.n_transforms},
                       {"enable_rotation", c.enable_rotation},
                       {"enable_flip", c.enable_flip},
                       {"disable_domain_encoder", c.disable_domain_encoder},
                       {"disable_space_constraint", c.disable_space_constraint},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    const nlohmann::json defaults = TrainConfig{};
    for (const auto& [k, v] : j.items()) {
        if (!defaults.contains(k)) throw std::invalid_argument("unknown training key '" + k + "'");
    }
    c = TrainConfig{};
    c.lambda_lasso = j.value("lambda_lasso", c.lambda_lasso);
    c.omega = j.value("omega", c.omega);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.cosine_period = j.value("cosine_period", c.cosine_period);
    c.n_transforms = j.value("n_transforms", c.n_transforms);
    c.enable_rotation = j.value("enable_rotation", c.enable_rotation);
    c.enable_flip = j.value("enable_flip", c.enable_flip);
    c.disable_domain_encoder = j.value("disable_domain_encoder", c.disable_domain_encoder);
    c.disable_space_constraint = j.value("disable_space_constraint", c.disable_space_constraint);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
}

double lr_at(int epoch, const TrainConfig& c)
{
    if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
    if (c.cosine_period < 1) throw std::invalid_argument("lr_at: cosine_period must be >= 1");
    const double phase = static_cast<double>(epoch % c.cosine_period) / c.cosine_period;
    return c.lr_min + (c.learning_rate - c.lr_min) * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

// ---------------------------------------------------------------- optimizer

void adamw_update(nn::ParamSet& params, const nn::ParamSet& grads, AdamMoments& mo, std::uint64_t step, double lr,
                  double weight_decay)
{
    if (step == 0) throw std::invalid_argument("adamw_update: step is 1-based");
    if (grads.size() != params.size() || mo.m.size() != params.size() || mo.v.size() != params.size()) {
        throw std::invalid_argument("adamw_update: parameter/gradient/moment sets differ in size");
    }
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    const double decay = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        Tensor& m = mo.m[i];
        Tensor& v = mo.v[i];
        require_shape(g.shape(), p.shape(), "adamw gradient");
        require_shape(m.shape(), p.shape(), "adamw moment");
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k];
            const double mk = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
            const double vk = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * gk * gk;
            m[k] = static_cast<Real>(mk);
            v[k] = static_cast<Real>(vk);
            const double update = (mk / c1) / (std::sqrt(vk / c2) + kAdamEpsilon);
            p[k] = static_cast<Real>(static_cast<double>(p[k]) * decay - lr * update);
        }
    }
}

// ---------------------------------------------------------------- state

nn::ParamSet& GameState::params(Player p)
{
    switch (p) {
    case kAnatomyEncoder: return nets.anatomy_encoder.params;
    case kDomainEncoder: return nets.domain_encoder.params;
    case kSegmenter: return nets.segmenter.params;
    case kReconstructor: return nets.reconstructor.params;
    }
    throw std::invalid_argument("unknown player");
}

const nn::ParamSet& GameState::params(Player p) const { return const_cast<GameState*>(this)->params(p); }

bool GameState::operator==(const GameState& o) const
{
    for (int p = 0; p < 4; ++p) {
        if (!(params(Player(p)) == o.params(Player(p)))) return false;
    }
    return nets.config == o.nets.config && t == o.t && epoch == o.epoch && optimizer == o.optimizer && rng == o.rng;
}

GameState make_game_state(const NetConfig& net, const TrainConfig& train)
{
    GameState s;
    s.nets = Networks(net, derive_seed(train.seed, 0x4E455453ULL));
    for (int p = 0; p < 4; ++p) {
        s.optimizer[static_cast<std::size_t>(p)].m = s.params(Player(p)).zeros_like();
        s.optimizer[static_cast<std::size_t>(p)].v = s.params(Player(p)).zeros_like();
    }
    s.rng = Rng(derive_seed(train.seed, 0x52554E47ULL));
    return s;
}

// ---------------------------------------------------------------- step

PreparedBatch prepare_batch(std::span<const WindowSample> windows, const TrainConfig& c, Rng& rng)
{
    if (windows.empty()) throw std::invalid_argument("prepare_batch: empty batch");
    c.validate();
    PreparedBatch pb;
    pb.batch = static_cast<int>(windows.size());
    pb.views = c.n_transforms;
    const auto& shape = windows.front().window.shape();
    if (shape.size() != 3) throw ShapeError("prepare_batch: windows must be {C,H,W}, got " + shape_string(shape));
    pb.inputs = Tensor({shape[0], pb.batch * (1 + pb.views), shape[1], shape[2]});
    for (int b = 0; b < pb.batch; ++b) {
        const auto& w = windows[static_cast<std::size_t>(b)];
        require_shape(w.window.shape(), shape, "prepare_batch window");
        require_shape(w.center_label.shape(), {shape[1], shape[2]}, "prepare_batch label");
        nn::put_sample(pb.inputs, b, w.window);
        auto ts = sample_transform_set(pb.views, rng, c.enable_rotation, c.enable_flip);
        for (int i = 0; i < pb.views; ++i) {
            const auto& t = ts[static_cast<std::size_t>(i)];
            nn::put_sample(pb.inputs, pb.view_column(b, i), apply_transform(t, w.window));
            pb.view_labels.push_back(apply_transform(t, w.center_label));
        }
        pb.transforms.push_back(std::move(ts));
    }
    pb.delta_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(pb.views)));
    return pb;
}

namespace {

Tensor column(const Tensor& m, int col)
{
    const int rows = m.dim(0), cols = m.dim(1);
    Tensor v({rows});
    for (int r = 0; r < rows; ++r) v[static_cast<std::size_t>(r)] = m[static_cast<std::size_t>(r * cols + col)];
    return v;
}

void add_column(Tensor& m, int col, const Tensor& v, double scale)
{
    const int rows = m.dim(0), cols = m.dim(1);
    for (int r = 0; r < rows; ++r) {
        m[static_cast<std::size_t>(r * cols + col)] += static_cast<Real>(scale * v[static_cast<std::size_t>(r)]);
    }
}

void add_sample(Tensor& batch, int n, const Tensor& sample, double scale)
{
    const int c = batch.dim(0), count = batch.dim(1);
    const std::size_t hw = static_cast<std::size_t>(batch.dim(2)) * static_cast<std::size_t>(batch.dim(3));
    for (int ch = 0; ch < c; ++ch) {
        Real* dst = batch.data() + (static_cast<std::size_t>(ch) * count + n) * hw;
        const Real* src = sample.data() + static_cast<std::size_t>(ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) dst[k] += static_cast<Real>(scale * src[k]);
    }
}

void set_sample_scaled(Tensor& batch, int n, const Tensor& sample, double scale)
{
    const int c = batch.dim(0), count = batch.dim(1);
    const std::size_t hw = static_cast<std::size_t>(batch.dim(2)) * static_cast<std::size_t>(batch.dim(3));
    for (int ch = 0; ch < c; ++ch) {
        Real* dst = batch.data() + (static_cast<std::size_t>(ch) * count + n) * hw;
        const Real* src = sample.data() + static_cast<std::size_t>(ch) * hw;
        for (std::size_t k = 0; k < hw; ++k) dst[k] = static_cast<Real>(scale * src[k]);
    }
}

GameGradients objective(const Networks& nets, const PreparedBatch& pb, const TrainConfig& c, bool want_grads,
                        bool full_gradient)
{
    const int B = pb.batch, n = pb.views, nv = B * n;
    const bool use_delta = !c.disable_domain_encoder;
    const bool use_lasso = !c.disable_space_constraint;
    const double inv_b = 1.0 / B, inv_v = 1.0 / nv;

    ForwardTape tx, td, ty, tr;
    const Tensor X = nets.anatomy_encoder.forward(pb.inputs, want_grads ? &tx : nullptr);
    Tensor D;
    if (use_delta) D = nets.domain_encoder.forward(pb.inputs, want_grads ? &td : nullptr);
    const Tensor Xv = nn::slice_samples(X, B, nv);

    GameGradients out;
    LossBundle& L = out.loss;
    Tensor dX, dD;
    if (want_grads) {
        out.grads = {nets.anatomy_encoder.params.zeros_like(), nets.domain_encoder.params.zeros_like(),
                     nets.segmenter.params.zeros_like(), nets.reconstructor.params.zeros_like()};
        dX = Tensor(X.shape());
        if (use_delta) dD = Tensor(D.shape());
    }

    // pull, repel and lasso terms, averaged over windows
    for (int b = 0; b < B; ++b) {
        const Tensor x0 = nn::take_sample(X, b);
        std::vector<Tensor> xs, ds;
        for (int i = 0; i < n; ++i) {
            xs.push_back(nn::take_sample(X, pb.view_column(b, i)));
            if (use_delta) ds.push_back(column(D, pb.view_column(b, i)));
        }
        Tensor g0;
        std::vector<Tensor> gx, gd;
        L.pull_x += inv_b * pull_loss_x(x0, xs, pb.transforms[static_cast<std::size_t>(b)],
                                        want_grads ? &g0 : nullptr, want_grads ? &gx : nullptr);
        if (want_grads) {
            add_sample(dX, b, g0, inv_b);
            for (int i = 0; i < n; ++i) add_sample(dX, pb.view_column(b, i), gx[static_cast<std::size_t>(i)], inv_b);
        }
        if (use_delta) {
            L.pull_delta += inv_b * pull_loss_delta(ds, want_grads ? &gd : nullptr);
            if (want_grads) {
                for (int i = 0; i < n; ++i) add_column(dD, pb.view_column(b, i), gd[static_cast<std::size_t>(i)], inv_b);
            }
            L.repel += inv_b * repel_loss(xs, ds, want_grads ? &gx : nullptr, want_grads ? &gd : nullptr);
            if (want_grads) {
                for (int i = 0; i < n; ++i) {
                    add_sample(dX, pb.view_column(b, i), gx[static_cast<std::size_t>(i)], inv_b);
                    add_column(dD, pb.view_column(b, i), gd[static_cast<std::size_t>(i)], inv_b);
                }
            }
        }
        if (use_lasso) {
            Tensor lx, ld;
            const Tensor d0 = use_delta ? column(D, b) : Tensor{};
            L.lasso += inv_b * lasso_penalty(x0, d0, want_grads ? &lx : nullptr, want_grads ? &ld : nullptr);
            if (want_grads) {
                add_sample(dX, b, lx, c.lambda_lasso * inv_b);
                if (use_delta) add_column(dD, b, ld, c.lambda_lasso * inv_b);
            }
        }
    }

    // U_X: soft Dice of the segmenter on every transformed view
    const Tensor logits = nets.segmenter.forward(Xv, nullptr, want_grads ? &ty : nullptr);
    Tensor dlogits;
    if (want_grads) dlogits = Tensor(logits.shape());
    for (int j = 0; j < nv; ++j) {
        Tensor g;
        L.u_x_surrogate += inv_v * soft_dice_utility(nn::take_sample(logits, j), pb.view_labels[static_cast<std::size_t>(j)],
                                                     want_grads ? &g : nullptr);
        if (want_grads) set_sample_scaled(dlogits, j, g, -inv_v);
    }
    if (want_grads) {
        const Tensor dXv = nets.segmenter.backward(ty, dlogits, out.grads[kSegmenter], true);
        nn::add_slice(dX, B, dXv);
    }

    // U_Delta: reconstruct every view from its X-hat and the shared Delta_s
    if (use_delta) {
        Tensor cond({D.dim(0), nv});
        for (int b = 0; b < B; ++b) {
            const Tensor ds = column(D, pb.view_column(b, pb.delta_index));
            for (int i = 0; i < n; ++i) add_column(cond, b * n + i, ds, 1.0);
        }
        const Tensor recon = nets.reconstructor.forward(Xv, &cond, want_grads ? &tr : nullptr);
        Tensor drecon;
        if (want_grads) drecon = Tensor(recon.shape());
        for (int j = 0; j < nv; ++j) {
            Tensor g;
            L.u_delta += inv_v * psnr(nn::take_sample(pb.inputs, B + j), nn::take_sample(recon, j), 1.0,
                                      want_grads ? &g : nullptr);
            if (want_grads) set_sample_scaled(drecon, j, g, -c.omega * inv_v);
        }
        if (want_grads) {
            Tensor dcond;
            const Tensor dXr = nets.reconstructor.backward(tr, drecon, out.grads[kReconstructor], full_gradient, &dcond);
            for (int b = 0; b < B; ++b) {
                for (int i = 0; i < n; ++i) {
                    add_column(dD, pb.view_column(b, pb.delta_index), column(dcond, b * n + i), 1.0);
                }
            }
            if (full_gradient) nn::add_slice(dX, B, dXr);
        }
    }

    try {
        L = total_objective(L, use_lasso ? c.lambda_lasso : 0.0, c.omega);
    } catch (const NonFiniteLoss& e) {
        throw NonFiniteStep(e.what(), StepMetrics{L, 0.0, pb.delta_index});
    }

    if (want_grads) {
        nets.anatomy_encoder.backward(tx, dX, out.grads[kAnatomyEncoder]);
        if (use_delta) nets.domain_encoder.backward(td, dD, out.grads[kDomainEncoder]);
    }
    return out;
}

bool all_finite(const nn::ParamSet& s)
{
    for (const auto& t : s.tensors) {
        for (auto v : t.values()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

} // namespace

GameGradients compute_gradients(const Networks& nets, const PreparedBatch& batch, const TrainConfig& config,
                                bool full_gradient)
{
    return objective(nets, batch, config, true, full_gradient);
}

LossBundle evaluate_objective(const Networks& nets, const PreparedBatch& batch, const TrainConfig& config)
{
    return objective(nets, batch, config, false, false).loss;
}

StepMetrics train_step(GameState& state, std::span<const WindowSample> windows, const TrainConfig& c, PhaseAudit* audit)
{
    const PreparedBatch pb = prepare_batch(windows, c, state.rng);
    GameGradients g = compute_gradients(state.nets, pb, c);
    StepMetrics metrics{g.loss, lr_at(state.epoch, c), pb.delta_index};
    for (const auto& set : g.grads) {
        if (!all_finite(set)) throw NonFiniteStep("non-finite gradient", metrics);
    }
    auto snapshot = [&](std::array<std::uint64_t, 4>& h) {
        for (int p = 0; p < 4; ++p) h[static_cast<std::size_t>(p)] = state.params(Player(p)).hash();
    };
    if (audit) snapshot(audit->before);
    const std::uint64_t step = state.t + 1;
    auto update = [&](Player p) {
        adamw_update(state.params(p), g.grads[p], state.optimizer[p], step, metrics.learning_rate, c.weight_decay);
    };
    // Phase A: anatomical player; the domain player is frozen
    update(kAnatomyEncoder);
    update(kSegmenter);
    if (audit) snapshot(audit->after_a);
    // Phase B: domain player, from the same D^t utilities
    if (!c.disable_domain_encoder) {
        update(kDomainEncoder);
        update(kReconstructor);
    }
    if (audit) snapshot(audit->after_b);
    state.t += 1;
    return metrics;
}

void to_json(nlohmann::json& j, const LossBundle& l)
{
    j = nlohmann::json{{"pull_x", l.pull_x},   {"pull_delta", l.pull_delta},       {"repel", l.repel},
                       {"lasso", l.lasso},     {"u_x", l.u_x_surrogate},           {"u_delta", l.u_delta},
                       {"total", l.total}};
}

void from_json(const nlohmann::json& j, LossBundle& l)
{
    l.pull_x = j.at("pull_x").get<double>();
    l.pull_delta = j.at("pull_delta").get<double>();
    l.repel = j.at("repel").get<double>();
    l.lasso = j.at("lasso").get<double>();
    l.u_x_surrogate = j.at("u_x").get<double>();
    l.u_delta = j.at("u_delta").get<double>();
    l.total = j.at("total").get<double>();
}

void to_json(nlohmann::json& j, const StepMetrics& m)
{
    j = nlohmann::json(m.loss);
    j["learning_rate"] = m.learning_rate;
    j["delta_index"] = m.delta_index;
}

// ---------------------------------------------------------------- inference

LabelTensor predict_volume(const Networks& nets, const Tensor& volume)
{
    const auto windows = sliding_windows(volume, LabelTensor(volume.shape()));
    std::vector<const Tensor*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w.window);
    const Tensor logits = nets.segmenter.forward(nets.anatomy_encoder.forward(nn::stack_samples(ptrs)), nullptr);
    const int d = volume.dim(0);
    const std::size_t plane = static_cast<std::size_t>(volume.dim(1)) * static_cast<std::size_t>(volume.dim(2));
    LabelTensor out(volume.shape());
    for (int z = 0; z < d; ++z) {
        const LabelTensor m = argmax_classes(nn::take_sample(logits, z));
        std::copy(m.data(), m.data() + plane, out.data() + static_cast<std::size_t>(z) * plane);
    }
    return out;
}

double volume_dice(const LabelTensor& pred, const LabelTensor& truth, int num_classes)
{
    double s = 0;
    for (int k = 1; k < num_classes; ++k) s += dice_score(pred, truth, k);
    return s / (num_classes - 1);
}

double volume_jaccard(const LabelTensor& pred, const LabelTensor& truth, int num_classes)
{
    double s = 0;
    for (int k = 1; k < num_classes; ++k) s += jaccard_score(pred, truth, k);
    return s / (num_classes - 1);
}

PullDiagnostics measure_pull(const Networks& nets, const std::vector<const VolumeRecord*>& volumes, std::uint64_t seed)
{
    // a fixed yardstick: four views from the full group, whatever the training pool
    constexpr int kViews = 4;
    PullDiagnostics out;
    std::size_t count = 0;
    Rng rng(seed);
    for (const auto* v : volumes) {
        for (const auto& w : sliding_windows(v->image, v->labels)) {
            const auto ts = sample_transform_set(kViews, rng, true, true);
            std::vector<Tensor> views{w.window};
            for (const auto& t : ts) views.push_back(apply_transform(t, w.window));
            std::vector<const Tensor*> ptrs;
            for (const auto& t : views) ptrs.push_back(&t);
            const Tensor batch = nn::stack_samples(ptrs);
            const Tensor X = nets.anatomy_encoder.forward(batch);
            const Tensor D = nets.domain_encoder.forward(batch);
            std::vector<Tensor> xs, ds;
            for (int i = 0; i < kViews; ++i) {
                xs.push_back(nn::take_sample(X, 1 + i));
                ds.push_back(column(D, 1 + i));
            }
            out.pull_x += pull_loss_x(nn::take_sample(X, 0), xs, ts);
            out.pull_delta += pull_loss_delta(ds);
            ++count;
        }
    }
    if (count > 0) {
        out.pull_x /= static_cast<double>(count);
        out.pull_delta /= static_cast<double>(count);
    }
    return out;
}

// ---------------------------------------------------------------- training loop

void to_json(nlohmann::json& j, const EpochRecord& r)
{
    j = nlohmann::json{{"epoch", r.epoch},           {"steps", r.steps},
                       {"learning_rate", r.learning_rate}, {"train", r.train},
                       {"val_dice", r.val_dice},     {"val_pull_x", r.val_pull_x},
                       {"val_pull_delta", r.val_pull_delta}};
}

void from_json(const nlohmann::json& j, EpochRecord& r)
{
    r.epoch = j.at("epoch").get<int>();
    r.steps = j.at("steps").get<int>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.train = j.at("train").get<LossBundle>();
    r.val_dice = j.at("val_dice").get<double>();
    r.val_pull_x = j.at("val_pull_x").get<double>();
    r.val_pull_delta = j.at("val_pull_delta").get<double>();
}

int select_best_checkpoint(const std::vector<EpochRecord>& history)
{
    if (history.empty()) throw std::invalid_argument("select_best_checkpoint: empty history");
    const EpochRecord* best = &history.front();
    for (const auto& r : history) {
        if (r.val_dice > best->val_dice) best = &r;
    }
    return best->epoch;
}

namespace {

class RunLock {
public:
    explicit RunLock(fs::path file) : file_(std::move(file))
    {
        const int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST) {
                throw std::runtime_error("run directory is locked by another process: " + file_.string() +
                                         " exists (remove it if stale)");
            }
            throw std::runtime_error("cannot create lock file " + file_.string() + ": " + std::strerror(errno));
        }
        ::close(fd);
    }
    ~RunLock()
    {
        std::error_code ec;
        fs::remove(file_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path file_;
};

void write_text(const fs::path& file, const std::string& text)
{
    fs::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + file.string());
}

LossBundle& operator+=(LossBundle& a, const LossBundle& b)
{
    a.pull_x += b.pull_x;
    a.pull_delta += b.pull_delta;
    a.repel += b.repel;
    a.lasso += b.lasso;
    a.u_x_surrogate += b.u_x_surrogate;
    a.u_delta += b.u_delta;
    a.total += b.total;
    return a;
}

LossBundle scaled(LossBundle a, double s)
{
    a.pull_x *= s;
    a.pull_delta *= s;
    a.repel *= s;
    a.lasso *= s;
    a.u_x_surrogate *= s;
    a.u_delta *= s;
    a.total *= s;
    return a;
}

} // namespace

TrainingResult run_training(const TrainConfig& train, const NetConfig& net, const Benchmark& bench,
                            const fs::path& run_dir, const TrainingOptions& options)
{
    train.validate();
    const auto& data = bench.manifest.config;
    net.validate(data.image_size);
    if (net.num_classes != data.num_classes) {
        throw std::invalid_argument("model num_classes " + std::to_string(net.num_classes) +
                                    " does not match the benchmark's " + std::to_string(data.num_classes));
    }
    if (net.in_channels != 3) throw std::invalid_argument("model in_channels must be 3 (slice windows)");

    fs::create_directories(run_dir / "ckpt");
    RunLock lock(run_dir / "lock");

    nlohmann::json snapshot{{"training", train},
                            {"model", net},
                            {"data", data},
                            {"data_seed", bench.manifest.seed}};
    write_text(run_dir / "config.snapshot", snapshot.dump(2) + "\n");

    std::vector<WindowSample> windows;
    for (const auto& id : bench.manifest.source_split.train) {
        const auto& v = bench.volume(id);
        for (auto& w : sliding_windows(v.image, v.labels, id)) windows.push_back(std::move(w));
    }
    std::vector<const VolumeRecord*> val;
    for (const auto& id : bench.manifest.source_split.val) val.push_back(&bench.volume(id));

    GameState state = make_game_state(net, train);
    const std::uint64_t diag_seed = derive_seed(train.seed, 0xD1A6ULL);

    TrainingResult result;
    result.run_dir = run_dir;
    result.initial_pull = measure_pull(state.nets, val, diag_seed);

    std::ofstream history(run_dir / "history.jsonl", std::ios::binary | std::ios::trunc);
    if (!history) throw std::runtime_error("cannot write " + (run_dir / "history.jsonl").string());

    double best_dice = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(windows.size());
    for (int e = 0; e < train.epochs; ++e) {
        state.epoch = e;
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle(derive_seed(train.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(e)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.learning_rate = lr_at(e, train);
        LossBundle sum;
        std::vector<WindowSample> batch;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
            batch.clear();
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
            for (std::size_t i = start; i < stop; ++i) batch.push_back(windows[order[i]]);
            try {
                sum += train_step(state, batch, train).loss;
            } catch (const NonFiniteStep& err) {
                const auto dir = run_dir / "ckpt" / "failed";
                fs::create_directories(dir);
                save_checkpoint(dir / "state.ckpt", state,
                                {{"epoch", e + 1}, {"t", state.t}, {"metrics", err.metrics}});
                throw std::runtime_error("epoch " + std::to_string(e + 1) + ": " + err.what() +
                                         " (state saved to " + dir.string() + ")");
            }
            ++rec.steps;
        }
        rec.train = scaled(sum, 1.0 / std::max(1, rec.steps));

        double dice = 0;
        for (const auto* v : val) dice += volume_dice(predict_volume(state.nets, v->image), v->labels, net.num_classes);
        rec.val_dice = val.empty() ? 0.0 : dice / static_cast<double>(val.size());
        const auto pull = measure_pull(state.nets, val, diag_seed);
        rec.val_pull_x = pull.pull_x;
        rec.val_pull_delta = pull.pull_delta;

        try {
            history << nlohmann::json(rec).dump() << '\n';
            history.flush();
            if (!history) throw std::runtime_error("cannot append to " + (run_dir / "history.jsonl").string());
            const nlohmann::json meta{{"epoch", rec.epoch},
                                      {"t", state.t},
                                      {"val_dice", rec.val_dice},
                                      {"parameter_hashes",
                                       {state.params(kAnatomyEncoder).hash(), state.params(kDomainEncoder).hash(),
                                        state.params(kSegmenter).hash(), state.params(kReconstructor).hash()}}};
            const auto epoch_dir = run_dir / "ckpt" / ("epoch_" + std::to_string(rec.epoch));
            write_text(epoch_dir / "meta.json", meta.dump(2) + "\n");
            if (options.keep_epoch_weights) save_checkpoint(epoch_dir / "state.ckpt", state, meta);
            if (rec.val_dice > best_dice) {
                best_dice = rec.val_dice;
                result.best_epoch = rec.epoch;
                write_text(run_dir / "ckpt" / "best" / "meta.json", meta.dump(2) + "\n");
                save_checkpoint(run_dir / "ckpt" / "best" / "state.ckpt", state, meta);
            }
        } catch (const std::exception& err) {
            throw std::runtime_error("epoch " + std::to_string(rec.epoch) + ": " + err.what());
        }
        result.history.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
    }

    save_checkpoint(run_dir / "ckpt" / "last" / "state.ckpt", state, {{"epoch", train.epochs}, {"t", state.t}});
    const nlohmann::json summary{{"best_epoch", result.best_epoch},
                                 {"best_val_dice", best_dice},
                                 {"epochs", train.epochs},
                                 {"steps", state.t},
                                 {"parameter_count", state.nets.parameter_count()},
                                 {"initial_val_pull_x", result.initial_pull.pull_x},
                                 {"initial_val_pull_delta", result.initial_pull.pull_delta}};
    write_text(run_dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

std::vector<EpochRecord> read_history(const fs::path& run_dir)
{
    const auto file = run_dir / "history.jsonl";
    std::ifstream is(file);
    if (!is) throw std::runtime_error("missing history " + file.string());
    std::vector<EpochRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) out.push_back(nlohmann::json::parse(line).get<EpochRecord>());
    }
    return out;
}

} // namespace domaingame
