// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "domaingame/config.hpp"
#include "domaingame/evalbench.hpp"

using namespace domaingame;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

BenchmarkConfig tiny_bench()
{
    BenchmarkConfig b;
    b.image_size = 16;
    b.depth = 4;
    b.source_samples = 10;
    b.target_samples = 3;
    b.target_styles = {"lowfield", "bright"};
    return b;
}

NetConfig tiny_net()
{
    NetConfig n;
    n.base_channels = 4;
    n.depth = 2;
    n.x_channels = 8;
    n.delta_dim = 4;
    return n;
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("domaingame_eval_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("oracle predictors bound the metrics")
{
    const auto bench = make_benchmark(tiny_bench(), 3);
    const auto& ids = bench.manifest.source_split.test;
    SECTION("ground truth scores 1")
    {
        const VolumePredictor truth = [](const VolumeRecord& v) { return v.labels; };
        for (const auto& s : evaluate_domain(truth, bench, ids)) {
            CHECK(s.dice == 1.0);
            CHECK(s.jaccard == 1.0);
        }
        const auto r = cross_domain_report(truth, bench);
        CHECK(r.drop_dice() == 0.0);
        CHECK(r.source().dice_mean == 100.0);
        CHECK(r.source().dice_std == 0.0);
    }
    SECTION("all background scores 0")
    {
        const VolumePredictor empty = [](const VolumeRecord& v) { return LabelTensor(v.labels.shape()); };
        for (const auto& s : evaluate_domain(empty, bench, ids)) {
            CHECK(s.dice == 0.0);
            CHECK(s.jaccard == 0.0);
        }
    }
    SECTION("per-volume scores match pixel counts")
    {
        Rng rng(8);
        std::map<std::string, LabelTensor> preds;
        const VolumePredictor noisy = [&](const VolumeRecord& v) {
            LabelTensor p = v.labels;
            for (auto& x : p.values())
                if (rng.uniform() < 0.2) x = static_cast<std::uint8_t>(1 - x);
            preds[v.sample_id] = p;
            return p;
        };
        const auto& train_ids = bench.manifest.source_split.train;
        const std::vector<std::string> three(train_ids.begin(), train_ids.begin() + 3);
        const auto scores = evaluate_domain(noisy, bench, three);
        REQUIRE(scores.size() == 3);
        for (const auto& s : scores) {
            const auto& truth = bench.volume(s.sample_id).labels;
            const auto& pred = preds.at(s.sample_id);
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t k = 0; k < truth.size(); ++k) {
                tp += pred[k] == 1 && truth[k] == 1;
                fp += pred[k] == 1 && truth[k] == 0;
                fn += pred[k] == 0 && truth[k] == 1;
            }
            CHECK(s.dice == Approx(2 * tp / (2 * tp + fp + fn)).margin(1e-12));
            CHECK(s.jaccard == Approx(tp / (tp + fp + fn)).margin(1e-12));
        }
    }
    SECTION("missing samples are named")
    {
        const VolumePredictor truth = [](const VolumeRecord& v) { return v.labels; };
        CHECK_THROWS_WITH(evaluate_domain(truth, bench, {ids[0], "ghost_001", "ghost_002"}),
                          Catch::Matchers::ContainsSubstring("ghost_001, ghost_002"));
        CHECK_THROWS_AS(evaluate_domain(truth, bench, {}), std::invalid_argument);
    }
    SECTION("shape mismatches are rejected")
    {
        const VolumePredictor bad = [](const VolumeRecord&) { return LabelTensor({1, 2, 2}); };
        CHECK_THROWS_AS(evaluate_domain(bad, bench, ids), ShapeError);
    }
}

TEST_CASE("domain statistics use the population std on a x100 scale")
{
    Rng rng(4);
    std::vector<SampleMetrics> s;
    for (int i = 0; i < 7; ++i) s.push_back({"v" + std::to_string(i), rng.uniform(), rng.uniform()});
    const auto d = summarize_domain("dom", s, false);
    double m = 0, v = 0;
    for (const auto& x : s) m += x.dice;
    m /= 7;
    for (const auto& x : s) v += (x.dice - m) * (x.dice - m);
    CHECK(d.n_samples == 7);
    CHECK(d.dice_mean == Approx(100 * m).margin(1e-9));
    CHECK(d.dice_std == Approx(100 * std::sqrt(v / 7)).margin(1e-9));
    CHECK_FALSE(d.is_source);
}

TEST_CASE("report invariants and serialisation")
{
    MetricsReport r;
    r.domains = {{"src", 4, 90.0, 2.0, 82.0, 3.0, true},
                 {"a", 10, 80.0, 5.0, 70.0, 4.0, false},
                 {"b", 10, 60.1234567890123, 7.25, 50.5, 1.0 / 3.0, false}};
    CHECK(r.target_average_dice() == Approx((80.0 + 60.1234567890123) / 2).margin(1e-9));
    CHECK(r.drop_dice() == Approx(r.source().dice_mean - r.target_average_dice()).margin(1e-9));
    CHECK(r.drop_jaccard() == Approx(82.0 - (70.0 + 50.5) / 2).margin(1e-9));
    CHECK(parse_report_csv(report_csv(r)) == r);
    CHECK(nlohmann::json(r).get<MetricsReport>() == r);
    CHECK(report_csv(r).rfind("domain_id,n_samples,dice_mean,dice_std,jaccard_mean,jaccard_std,is_source\n", 0) == 0);
    const auto table = report_table(r);
    CHECK(table.find("Avg. on target") != std::string::npos);
    CHECK(table.find("v 19.94") != std::string::npos);

    const auto dir = scratch("report");
    write_report(r, dir / "report.csv");
    CHECK(fs::exists(dir / "report.txt"));
    CHECK(read_report(dir / "report.csv") == r);
    CHECK(read_report(dir / "report.json") == r);

    CHECK_THROWS(parse_report_csv("nope\n"));
    CHECK_THROWS(parse_report_csv(report_csv(r) + "x,1,2\n"));
    CHECK_THROWS(parse_report_csv(report_csv(r) + "x,1,2,3,4,5,yes\n"));

    MetricsReport only_source;
    only_source.domains = {r.domains[0]};
    CHECK(only_source.target_average_dice() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("ablation plumbing")
{
    const TrainConfig base;
    CHECK(ablated_config(base, Ablation::kNone) == base);
    CHECK(ablated_config(base, Ablation::kDomainEncoder).disable_domain_encoder);
    CHECK(ablated_config(base, Ablation::kSpaceConstraint).disable_space_constraint);
    CHECK_FALSE(ablated_config(base, Ablation::kRotation).enable_rotation);
    CHECK_FALSE(ablated_config(base, Ablation::kFlip).enable_flip);
    for (Ablation a : all_ablations()) CHECK(parse_ablation(ablation_slug(a)) == a);
    CHECK_THROWS_AS(parse_ablation("lasso"), std::invalid_argument);
    CHECK(all_ablations().size() == 5);

    const auto b = baseline_config(base);
    CHECK(b.disable_domain_encoder);
    CHECK(b.disable_space_constraint);
    CHECK_FALSE(b.enable_rotation);
    CHECK_FALSE(b.enable_flip);
    CHECK(b.n_transforms == 1);

    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK_THROWS(median({}));
}

TEST_CASE("baseline and ablation suite on a tiny benchmark")
{
    const auto bench = make_benchmark(tiny_bench(), 12);
    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = 1e-3;

    const auto run = scratch("baseline");
    const auto res = train_baseline_single_encoder(tc, tiny_net(), bench, run);
    CHECK(res.history.size() == 1);
    for (const char* f : {"config.snapshot", "history.jsonl", "summary.json", "ckpt/best/state.ckpt"})
        CHECK(fs::exists(run / f));
    const auto nets = load_best_networks(run);
    const auto r1 = cross_domain_report(nets, bench), r2 = cross_domain_report(nets, bench);
    CHECK(r1 == r2);
    CHECK(r1.domains.size() == 3);

    const auto out = scratch("ablation");
    std::vector<std::string> progress;
    AblationOptions opts;
    opts.progress = [&](const std::string& m) { progress.push_back(m); };
    const auto table = run_ablation_suite(tc, tiny_net(), bench, {5}, out, opts);
    REQUIRE(table.rows.size() == 5);
    CHECK(table.rows[0].ablation == Ablation::kNone);
    CHECK(table.row(Ablation::kNone).median_drop() == 0.0);
    CHECK(fs::exists(out / "ablation.csv"));
    CHECK(fs::exists(out / "ablation.txt"));
    CHECK(fs::exists(out / "flip" / "seed_5" / "report.csv"));
    CHECK(progress.size() == 5);
    CHECK(progress[0].rfind("training", 0) == 0);
    const auto csv = slurp(out / "ablation.csv");

    progress.clear();
    const auto again = run_ablation_suite(tc, tiny_net(), bench, {5}, out, opts);
    CHECK(progress[0].rfind("reusing", 0) == 0);
    CHECK(slurp(out / "ablation.csv") == csv);
    fs::remove_all(run);
    fs::remove_all(out);
}

TEST_CASE("identical source and target styles show no drop", "[slow]")
{
    // control: the target is the source style re-rendered on unseen anatomies
    auto cfg = desk_run_config();
    auto bc = cfg.data.benchmark;
    DomainStyle twin = style_preset(bc.source_style, bc.num_classes);
    twin.domain_id = "twin";
    bc.custom_styles["twin"] = twin;
    bc.target_styles = {"twin"};
    TrainConfig tc = cfg.training;
    tc.epochs = 20;
    double sum = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto bench = make_benchmark(bc, seed);
        tc.seed = seed;
        const auto run = scratch("twin_" + std::to_string(seed));
        train_baseline_single_encoder(tc, cfg.model, bench, run);
        const auto r = cross_domain_report(load_best_networks(run), bench);
        INFO("seed " << seed << " source " << r.source().dice_mean << " twin " << r.target_average_dice());
        CHECK(r.source().dice_mean > 70.0);
        CHECK(std::abs(r.drop_dice()) < 3.0);
        sum += r.drop_dice();
        fs::remove_all(run);
    }
    CHECK(std::abs(sum / 3) < 3.0);
}
