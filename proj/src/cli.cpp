// SPDX-License-Identifier: Apache-2.0
#include "domaingame/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "domaingame/checkpoint.hpp"
#include "domaingame/config.hpp"
#include "domaingame/evalbench.hpp"
#include "domaingame/plots.hpp"
#include "domaingame/selftest.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

RunConfig config_or_desk(const std::string& path)
{
    return path.empty() ? desk_run_config() : load_run_config(path);
}

fs::path resolve_data(const std::string& flag, const std::string& config_root)
{
    if (!flag.empty()) return flag;
    return data_root(config_root);
}

Benchmark load_matching_benchmark(const fs::path& dir, const RunConfig& cfg)
{
    if (!fs::exists(dir / "manifest.json"))
        throw std::runtime_error("no benchmark at " + dir.string() + " (run generate-data first)");
    auto bench = load_benchmark(dir);
    if (!(bench.manifest.config == cfg.data.benchmark) || bench.manifest.seed != cfg.data.seed) {
        throw std::runtime_error("benchmark at " + dir.string() +
                                 " was generated from a different data section; regenerate it or fix the config");
    }
    return bench;
}

// the one file allowed to carry wall-clock times
void write_run_info(const fs::path& dir, const std::string& command, const std::string& started)
{
    fs::create_directories(dir);
    std::ofstream os(dir / "run_info.json", std::ios::trunc);
    os << nlohmann::json{{"command", command}, {"started", started}, {"finished", utc_now()}}.dump(2) << "\n";
}

fs::path resolve_run_checkpoint(const fs::path& p)
{
    if (fs::is_directory(p) && !fs::exists(p / "state.ckpt") && fs::exists(p / "ckpt" / "best" / "state.ckpt"))
        return p / "ckpt" / "best" / "state.ckpt";
    return resolve_checkpoint(p);
}

void print_epoch(std::ostream& out, const EpochRecord& r)
{
    out << "epoch " << std::setw(3) << r.epoch << "  lr " << std::scientific << std::setprecision(2)
        << r.learning_rate << std::fixed << std::setprecision(4) << "  loss " << r.train.total << "  val dice "
        << r.val_dice << "  pull_x " << std::scientific << std::setprecision(3) << r.val_pull_x << "  pull_delta "
        << r.val_pull_delta << std::defaultfloat << "\n";
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Two-player feature game for segmentation under domain shift", "domaingame"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "domaingame 1.0");

    std::string config_path, data_dir, out_path, ckpt_path, report_path, ablate_slug;
    bool force = false, baseline = false, keep_weights = false;
    std::vector<std::uint64_t> seeds;
    std::int64_t seed_override = -1;
    int epochs_override = 0, per_domain = -1, trials = 100;

    auto* gen = app.add_subcommand("generate-data", "render the synthetic multi-domain benchmark");
    gen->add_option("--config", config_path, "run config (JSON); desk preset if omitted");
    gen->add_option("--data", data_dir, "output directory (default: data.root or $DOMAINGAME_DATA)");
    gen->add_flag("--force", force, "overwrite an existing benchmark");

    auto* train = app.add_subcommand("train", "train on the source domain");
    train->add_option("--config", config_path, "run config (JSON); desk preset if omitted");
    train->add_option("--data", data_dir, "benchmark directory");
    train->add_option("--out", out_path, "run directory")->required();
    train->add_option("--ablate", ablate_slug, "remove one module")
        ->check(CLI::IsMember({"domain-encoder", "space-constraint", "rotation", "flip"}));
    train->add_flag("--baseline", baseline, "single-encoder control (no domain encoder, lasso or transforms)")
        ->excludes("--ablate");
    train->add_option("--seed", seed_override, "override training.seed");
    train->add_option("--epochs", epochs_override, "override training.epochs")->check(CLI::PositiveNumber);
    train->add_flag("--keep-epoch-weights", keep_weights, "store full state for every epoch");

    auto* eval = app.add_subcommand("evaluate", "cross-domain report for a checkpoint");
    eval->add_option("--ckpt", ckpt_path, "checkpoint file, checkpoint directory or run directory")->required();
    eval->add_option("--data", data_dir, "benchmark directory (default: $DOMAINGAME_DATA or ./data)");
    eval->add_option("--out", out_path, "report path; .csv, .txt and .json are written")->required();

    auto* abl = app.add_subcommand("ablate", "benchmark plus four ablations over the seed set");
    abl->add_option("--config", config_path, "run config (JSON); desk preset if omitted");
    abl->add_option("--data", data_dir, "benchmark directory");
    abl->add_option("--out", out_path, "output directory (default: <evaluation.output_dir>/ablation)");
    abl->add_option("--seeds", seeds, "override evaluation.seeds")->delimiter(',');

    auto* plots = app.add_subcommand("report-plots", "bar chart and example triptychs for a report");
    plots->add_option("--report", report_path, "report .csv or .json")->required()->check(CLI::ExistingFile);
    plots->add_option("--out", out_path, "output directory")->required();
    plots->add_option("--ckpt", ckpt_path, "checkpoint for triptychs");
    plots->add_option("--data", data_dir, "benchmark directory for triptychs");
    plots->add_option("--per-domain", per_domain, "triptychs per domain")->check(CLI::NonNegativeNumber);

    auto* self = app.add_subcommand("selftest", "metric oracles and transform group laws");
    self->add_option("--trials", trials, "random inputs per metric")->check(CLI::PositiveNumber);

    // the order in which CLI11 expects arguments
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    const std::string started = utc_now();
    try {
        if (*gen) {
            const auto cfg = config_or_desk(config_path);
            const fs::path dir = resolve_data(data_dir, cfg.data.root);
            if (fs::exists(dir / "manifest.json") && !force) {
                const auto existing = read_manifest(dir);
                if (existing.config == cfg.data.benchmark && existing.seed == cfg.data.seed) {
                    out << "benchmark at " << dir.string() << " is up to date\n";
                    return kExitOk;
                }
                throw std::runtime_error("a different benchmark exists at " + dir.string() + " (use --force)");
            }
            const auto bench = make_benchmark(cfg.data.benchmark, cfg.data.seed);
            write_benchmark(bench, dir);
            out << "wrote " << bench.volumes.size() << " volumes to " << dir.string() << "\n";
        } else if (*train) {
            auto cfg = config_or_desk(config_path);
            if (seed_override >= 0) cfg.training.seed = static_cast<std::uint64_t>(seed_override);
            if (epochs_override > 0) cfg.training.epochs = epochs_override;
            TrainConfig tc = cfg.training;
            if (baseline) tc = baseline_config(tc);
            if (!ablate_slug.empty()) tc = ablated_config(tc, parse_ablation(ablate_slug));
            const auto bench = load_matching_benchmark(resolve_data(data_dir, cfg.data.root), cfg);
            TrainingOptions opts;
            opts.keep_epoch_weights = keep_weights;
            opts.on_epoch = [&](const EpochRecord& r) { print_epoch(out, r); };
            const auto res = run_training(tc, cfg.model, bench, out_path, opts);
            write_run_info(out_path, "train", started);
            out << "best epoch " << res.best_epoch << " (val dice "
                << res.history[static_cast<std::size_t>(res.best_epoch - 1)].val_dice << "), run directory "
                << out_path << "\n";
        } else if (*eval) {
            const fs::path dir = resolve_data(data_dir, "data");
            const auto bench = load_benchmark(dir);
            const auto ckpt = load_checkpoint(resolve_run_checkpoint(ckpt_path));
            const auto report = cross_domain_report(ckpt.state.nets, bench);
            write_report(report, out_path);
            out << report_table(report);
        } else if (*abl) {
            const auto cfg = config_or_desk(config_path);
            const auto bench = load_matching_benchmark(resolve_data(data_dir, cfg.data.root), cfg);
            AblationOptions opts;
            opts.progress = [&](const std::string& msg) { out << msg << "\n" << std::flush; };
            const fs::path dir = out_path.empty() ? fs::path(cfg.evaluation.output_dir) / "ablation" : fs::path(out_path);
            const auto table = run_ablation_suite(cfg.training, cfg.model, bench,
                                                  seeds.empty() ? cfg.evaluation.seeds : seeds, dir, opts);
            write_run_info(dir, "ablate", started);
            out << ablation_text(table);
        } else if (*plots) {
            const auto report = read_report(report_path);
            std::vector<fs::path> files;
            if (!ckpt_path.empty()) {
                const auto bench = load_benchmark(resolve_data(data_dir, "data"));
                const auto ckpt = load_checkpoint(resolve_run_checkpoint(ckpt_path));
                const auto predict = network_predictor(ckpt.state.nets);
                files = write_plots(report, out_path, &bench, &predict, per_domain < 0 ? 3 : per_domain);
            } else {
                if (!data_dir.empty()) throw UsageError("--data needs --ckpt");
                files = write_plots(report, out_path);
            }
            for (const auto& f : files) out << f.string() << "\n";
        } else if (*self) {
            const auto r = run_selftest(out, trials);
            out << r.passed << " passed, " << r.failed << " failed\n";
            return r.failed == 0 ? kExitOk : kExitRuntime;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace domaingame
