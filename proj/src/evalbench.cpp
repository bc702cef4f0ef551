// SPDX-License-Identifier: Apache-2.0
#include "domaingame/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "domaingame/checkpoint.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw std::runtime_error("cannot write " + file.string());
}

// shortest text that parses back to the same double
std::string exact(double v)
{
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string fixed(double v, int digits)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string pad(const std::string& s, std::size_t width, bool left = true)
{
    if (s.size() >= width) return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

} // namespace

// ---------------------------------------------------------------- reports

const DomainMetrics& MetricsReport::source() const
{
    for (const auto& d : domains)
        if (d.is_source) return d;
    throw std::logic_error("report has no source domain");
}

std::vector<const DomainMetrics*> MetricsReport::targets() const
{
    std::vector<const DomainMetrics*> out;
    for (const auto& d : domains)
        if (!d.is_source) out.push_back(&d);
    return out;
}

double MetricsReport::target_average_dice() const
{
    const auto t = targets();
    double s = 0;
    for (const auto* d : t) s += d->dice_mean;
    return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

double MetricsReport::target_average_jaccard() const
{
    const auto t = targets();
    double s = 0;
    for (const auto* d : t) s += d->jaccard_mean;
    return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

void to_json(nlohmann::json& j, const MetricsReport& r)
{
    auto domains = nlohmann::json::array();
    for (const auto& d : r.domains) {
        domains.push_back({{"domain_id", d.domain_id},
                           {"n_samples", d.n_samples},
                           {"dice_mean", d.dice_mean},
                           {"dice_std", d.dice_std},
                           {"jaccard_mean", d.jaccard_mean},
                           {"jaccard_std", d.jaccard_std},
                           {"is_source", d.is_source}});
    }
    j = {{"domains", domains},
         {"target_average_dice", r.target_average_dice()},
         {"target_average_jaccard", r.target_average_jaccard()},
         {"drop_dice", r.drop_dice()},
         {"drop_jaccard", r.drop_jaccard()},
         {"scale", 100}};
}

void from_json(const nlohmann::json& j, MetricsReport& r)
{
    r.domains.clear();
    for (const auto& d : j.at("domains")) {
        DomainMetrics m;
        m.domain_id = d.at("domain_id").get<std::string>();
        m.n_samples = d.at("n_samples").get<int>();
        m.dice_mean = d.at("dice_mean").get<double>();
        m.dice_std = d.at("dice_std").get<double>();
        m.jaccard_mean = d.at("jaccard_mean").get<double>();
        m.jaccard_std = d.at("jaccard_std").get<double>();
        m.is_source = d.at("is_source").get<bool>();
        r.domains.push_back(m);
    }
}

VolumePredictor network_predictor(const Networks& nets)
{
    return [&nets](const VolumeRecord& v) { return predict_volume(nets, v.image); };
}

std::vector<SampleMetrics> evaluate_domain(const VolumePredictor& predict, const Benchmark& bench,
                                           const std::vector<std::string>& sample_ids)
{
    if (sample_ids.empty()) throw std::invalid_argument("evaluate_domain: empty split");
    std::vector<std::string> missing;
    for (const auto& id : sample_ids) {
        const bool found = std::any_of(bench.volumes.begin(), bench.volumes.end(),
                                       [&](const VolumeRecord& v) { return v.sample_id == id; });
        if (!found) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        throw std::runtime_error("missing samples: " + names);
    }
    const int classes = bench.manifest.config.num_classes;
    std::vector<SampleMetrics> out;
    for (const auto& id : sample_ids) {
        const auto& v = bench.volume(id);
        const auto pred = predict(v);
        if (pred.shape() != v.labels.shape()) {
            throw ShapeError("prediction for " + id + " has shape " + shape_string(pred.shape()) + ", expected " +
                             shape_string(v.labels.shape()));
        }
        out.push_back({id, volume_dice(pred, v.labels, classes), volume_jaccard(pred, v.labels, classes)});
    }
    return out;
}

DomainMetrics summarize_domain(const std::string& domain_id, const std::vector<SampleMetrics>& samples, bool is_source)
{
    DomainMetrics d;
    d.domain_id = domain_id;
    d.is_source = is_source;
    d.n_samples = static_cast<int>(samples.size());
    if (samples.empty()) return d;
    const double n = static_cast<double>(samples.size());
    for (const auto& s : samples) {
        d.dice_mean += s.dice;
        d.jaccard_mean += s.jaccard;
    }
    d.dice_mean /= n;
    d.jaccard_mean /= n;
    for (const auto& s : samples) {
        d.dice_std += (s.dice - d.dice_mean) * (s.dice - d.dice_mean);
        d.jaccard_std += (s.jaccard - d.jaccard_mean) * (s.jaccard - d.jaccard_mean);
    }
    d.dice_std = std::sqrt(d.dice_std / n) * 100.0;
    d.jaccard_std = std::sqrt(d.jaccard_std / n) * 100.0;
    d.dice_mean *= 100.0;
    d.jaccard_mean *= 100.0;
    return d;
}

MetricsReport cross_domain_report(const VolumePredictor& predict, const Benchmark& bench)
{
    const auto& m = bench.manifest;
    MetricsReport r;
    r.domains.push_back(
        summarize_domain(m.source_split.domain_id, evaluate_domain(predict, bench, m.source_split.test), true));
    for (const auto& t : m.target_splits)
        r.domains.push_back(summarize_domain(t.domain_id, evaluate_domain(predict, bench, t.test), false));
    return r;
}

MetricsReport cross_domain_report(const Networks& nets, const Benchmark& bench)
{
    return cross_domain_report(network_predictor(nets), bench);
}

std::string report_csv(const MetricsReport& r)
{
    std::string out = "domain_id,n_samples,dice_mean,dice_std,jaccard_mean,jaccard_std,is_source\n";
    for (const auto& d : r.domains) {
        if (d.domain_id.find_first_of(",\n") != std::string::npos)
            throw std::invalid_argument("domain id not representable in CSV: " + d.domain_id);
        out += d.domain_id + "," + std::to_string(d.n_samples) + "," + exact(d.dice_mean) + "," + exact(d.dice_std) +
               "," + exact(d.jaccard_mean) + "," + exact(d.jaccard_std) + "," + (d.is_source ? "1" : "0") + "\n";
    }
    return out;
}

MetricsReport parse_report_csv(const std::string& text)
{
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "domain_id,n_samples,dice_mean,dice_std,jaccard_mean,jaccard_std,is_source")
        throw std::runtime_error("unexpected report CSV header");
    MetricsReport r;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 7) throw std::runtime_error("report CSV line " + std::to_string(lineno) + ": expected 7 cells");
        try {
            DomainMetrics d;
            d.domain_id = cells[0];
            d.n_samples = std::stoi(cells[1]);
            d.dice_mean = std::stod(cells[2]);
            d.dice_std = std::stod(cells[3]);
            d.jaccard_mean = std::stod(cells[4]);
            d.jaccard_std = std::stod(cells[5]);
            if (cells[6] != "0" && cells[6] != "1") throw std::invalid_argument("is_source");
            d.is_source = cells[6] == "1";
            r.domains.push_back(d);
        } catch (const std::logic_error& e) {
            throw std::runtime_error("report CSV line " + std::to_string(lineno) + ": bad value (" + e.what() + ")");
        }
    }
    return r;
}

std::string report_table(const MetricsReport& r)
{
    std::size_t w = std::string("Avg. on target").size();
    for (const auto& d : r.domains) w = std::max(w, d.domain_id.size() + 9);
    auto cell = [](double mean, double sd) { return fixed(mean, 2) + " +- " + fixed(sd, 2); };
    std::string out = pad("domain", w) + "  " + pad("n", 3, false) + "  " + pad("Dice", 16, false) + "  " +
                      pad("Jaccard", 16, false) + "\n";
    for (const auto& d : r.domains) {
        const std::string name = d.is_source && d.domain_id != "source" ? d.domain_id + " (source)" : d.domain_id;
        out += pad(name, w) + "  " + pad(std::to_string(d.n_samples), 3, false) + "  " +
               pad(cell(d.dice_mean, d.dice_std), 16, false) + "  " + pad(cell(d.jaccard_mean, d.jaccard_std), 16, false) +
               "\n";
    }
    if (!r.targets().empty()) {
        out += pad("Avg. on target", w) + "  " + pad("", 3) + "  " + pad(fixed(r.target_average_dice(), 2), 16, false) +
               "  " + pad(fixed(r.target_average_jaccard(), 2), 16, false) + "\n";
        out += pad("drop vs source", w) + "  " + pad("", 3) + "  " +
               pad("v " + fixed(r.drop_dice(), 2), 16, false) + "  " + pad("v " + fixed(r.drop_jaccard(), 2), 16, false) +
               "\n";
    }
    out += "scores x100\n";
    return out;
}

void write_report(const MetricsReport& r, const fs::path& out)
{
    fs::path stem = out;
    stem.replace_extension();
    write_text(fs::path(stem.string() + ".csv"), report_csv(r));
    write_text(fs::path(stem.string() + ".txt"), report_table(r));
    write_text(fs::path(stem.string() + ".json"), nlohmann::json(r).dump(2) + "\n");
}

MetricsReport read_report(const fs::path& file)
{
    if (file.extension() == ".json") return nlohmann::json::parse(read_text(file)).get<MetricsReport>();
    return parse_report_csv(read_text(file));
}

// ---------------------------------------------------------------- baseline and ablations

TrainConfig baseline_config(TrainConfig c)
{
    c.disable_domain_encoder = true;
    c.disable_space_constraint = true;
    c.enable_rotation = false;
    c.enable_flip = false;
    c.n_transforms = 1;
    return c;
}

TrainingResult train_baseline_single_encoder(const TrainConfig& config, const NetConfig& net, const Benchmark& bench,
                                             const fs::path& run_dir, const TrainingOptions& options)
{
    return run_training(baseline_config(config), net, bench, run_dir, options);
}

Networks load_best_networks(const fs::path& run_dir)
{
    return load_checkpoint(resolve_checkpoint(run_dir / "ckpt" / "best")).state.nets;
}

const std::vector<Ablation>& all_ablations()
{
    static const std::vector<Ablation> all{Ablation::kNone, Ablation::kDomainEncoder, Ablation::kSpaceConstraint,
                                           Ablation::kRotation, Ablation::kFlip};
    return all;
}

std::string ablation_name(Ablation a)
{
    switch (a) {
    case Ablation::kNone: return "benchmark";
    case Ablation::kDomainEncoder: return "w/o domain encoder";
    case Ablation::kSpaceConstraint: return "w/o space constraint";
    case Ablation::kRotation: return "w/o rotation";
    case Ablation::kFlip: return "w/o flip";
    }
    throw std::logic_error("bad ablation");
}

std::string ablation_slug(Ablation a)
{
    switch (a) {
    case Ablation::kNone: return "benchmark";
    case Ablation::kDomainEncoder: return "domain-encoder";
    case Ablation::kSpaceConstraint: return "space-constraint";
    case Ablation::kRotation: return "rotation";
    case Ablation::kFlip: return "flip";
    }
    throw std::logic_error("bad ablation");
}

Ablation parse_ablation(const std::string& slug)
{
    for (Ablation a : all_ablations())
        if (ablation_slug(a) == slug) return a;
    throw std::invalid_argument("unknown ablation '" + slug +
                                "' (expected domain-encoder, space-constraint, rotation or flip)");
}

TrainConfig ablated_config(TrainConfig c, Ablation a)
{
    switch (a) {
    case Ablation::kNone: break;
    case Ablation::kDomainEncoder: c.disable_domain_encoder = true; break;
    case Ablation::kSpaceConstraint: c.disable_space_constraint = true; break;
    case Ablation::kRotation: c.enable_rotation = false; break;
    case Ablation::kFlip: c.enable_flip = false; break;
    }
    return c;
}

double median(std::vector<double> v)
{
    if (v.empty()) throw std::invalid_argument("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double AblationRow::median_dice() const { return median(target_dice); }
double AblationRow::median_jaccard() const { return median(target_jaccard); }
double AblationRow::median_drop() const { return median(drop); }

const AblationRow& AblationTable::row(Ablation a) const
{
    for (const auto& r : rows)
        if (r.ablation == a) return r;
    throw std::out_of_range("ablation table has no row '" + ablation_name(a) + "'");
}

std::string ablation_csv(const AblationTable& t)
{
    std::string out = "row,n_seeds,target_dice_median,target_jaccard_median,drop_median,target_dice_per_seed\n";
    for (const auto& r : t.rows) {
        std::string per;
        for (double d : r.target_dice) per += (per.empty() ? "" : ";") + exact(d);
        out += ablation_slug(r.ablation) + "," + std::to_string(r.seeds.size()) + "," + exact(r.median_dice()) + "," +
               exact(r.median_jaccard()) + "," + exact(r.median_drop()) + "," + per + "\n";
    }
    return out;
}

std::string ablation_text(const AblationTable& t)
{
    std::string out = pad("method", 22) + pad("target Dice", 13, false) + pad("Jaccard", 10, false) +
                      pad("drop", 9, false) + "\n";
    for (const auto& r : t.rows) {
        out += pad(ablation_name(r.ablation), 22) + pad(fixed(r.median_dice(), 2), 13, false) +
               pad(fixed(r.median_jaccard(), 2), 10, false) +
               pad(r.ablation == Ablation::kNone ? "-" : "v " + fixed(r.median_drop(), 2), 9, false) + "\n";
    }
    out += "medians over " + std::to_string(t.rows.empty() ? 0 : t.rows.front().seeds.size()) +
           " seeds, scores x100\n";
    return out;
}

bool reusable_run(const fs::path& run_dir, const TrainConfig& train, const NetConfig& net, const Benchmark& bench)
{
    if (!fs::exists(run_dir / "summary.json") || !fs::exists(run_dir / "config.snapshot") ||
        !fs::exists(run_dir / "ckpt" / "best" / "state.ckpt") || fs::exists(run_dir / "lock"))
        return false;
    const nlohmann::json expected{
        {"training", train}, {"model", net}, {"data", bench.manifest.config}, {"data_seed", bench.manifest.seed}};
    try {
        return nlohmann::json::parse(read_text(run_dir / "config.snapshot")) == expected;
    } catch (const nlohmann::json::exception&) {
        return false;
    }
}

AblationTable run_ablation_suite(const TrainConfig& config, const NetConfig& net, const Benchmark& bench,
                                 const std::vector<std::uint64_t>& seeds, const fs::path& out_dir,
                                 const AblationOptions& options)
{
    if (seeds.empty()) throw std::invalid_argument("run_ablation_suite: no seeds");
    AblationTable table;
    for (Ablation a : all_ablations()) {
        AblationRow row;
        row.ablation = a;
        row.seeds = seeds;
        for (std::uint64_t seed : seeds) {
            TrainConfig tc = ablated_config(config, a);
            tc.seed = seed;
            const auto run_dir = out_dir / ablation_slug(a) / ("seed_" + std::to_string(seed));
            const bool reuse = options.resume && reusable_run(run_dir, tc, net, bench);
            if (options.progress)
                options.progress((reuse ? "reusing " : "training ") + ablation_name(a) + " seed " + std::to_string(seed));
            const auto t0 = std::chrono::steady_clock::now();
            if (!reuse) run_training(tc, net, bench, run_dir);
            const std::chrono::duration<double> spent = std::chrono::steady_clock::now() - t0;
            if (options.on_run) options.on_run(a, seed, run_dir, reuse ? 0.0 : spent.count());
            const auto report = cross_domain_report(load_best_networks(run_dir), bench);
            write_report(report, run_dir / "report");
            row.target_dice.push_back(report.target_average_dice());
            row.target_jaccard.push_back(report.target_average_jaccard());
        }
        table.rows.push_back(std::move(row));
    }
    const auto& bench_row = table.rows.front();
    for (auto& r : table.rows) {
        r.drop.clear();
        for (std::size_t i = 0; i < r.target_dice.size(); ++i) r.drop.push_back(bench_row.target_dice[i] - r.target_dice[i]);
    }
    write_text(out_dir / "ablation.csv", ablation_csv(table));
    write_text(out_dir / "ablation.txt", ablation_text(table));
    return table;
}

} // namespace domaingame
