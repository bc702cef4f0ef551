// SPDX-License-Identifier: Apache-2.0
#include "domaingame/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& defaults, const std::string& where)
{
    if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!defaults.contains(k)) throw std::invalid_argument("unknown key '" + k + "' in " + where);
    }
}

// defaults overlaid with the given keys
template <class T>
T overlay(const nlohmann::json& j, const T& defaults, const std::string& where)
{
    nlohmann::json merged = defaults;
    reject_unknown(j, merged, where);
    for (const auto& [k, v] : j.items()) merged[k] = v;
    return merged.get<T>();
}

} // namespace

NetConfig RunConfig::desk_net_config()
{
    NetConfig n;
    n.base_channels = 8;
    n.depth = 2;
    n.x_channels = 32;
    n.delta_dim = 16;
    return n;
}

void RunConfig::validate() const
{
    training.validate();
    model.validate(data.benchmark.image_size);
    if (model.num_classes != data.benchmark.num_classes)
        throw std::invalid_argument("model.num_classes must equal data.num_classes");
    split_counts(data.benchmark.source_samples);
    if (evaluation.seeds.empty()) throw std::invalid_argument("evaluation.seeds must not be empty");
}

void to_json(nlohmann::json& j, const RunConfig& c)
{
    nlohmann::json data = c.data.benchmark;
    data["seed"] = c.data.seed;
    data["root"] = c.data.root;
    j = {{"data", data},
         {"model", c.model},
         {"training", c.training},
         {"evaluation",
          {{"output_dir", c.evaluation.output_dir},
           {"seeds", c.evaluation.seeds}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c)
{
    const RunConfig d;
    reject_unknown(j, nlohmann::json(d), "config");
    c = d;
    if (j.contains("data")) {
        const auto& s = j.at("data");
        nlohmann::json bench_keys = d.data.benchmark;
        bench_keys["seed"] = 0;
        bench_keys["root"] = "";
        bench_keys["custom_styles"] = nlohmann::json::object();
        reject_unknown(s, bench_keys, "data");
        nlohmann::json bench = s;
        bench.erase("seed");
        bench.erase("root");
        c.data.benchmark = overlay(bench, d.data.benchmark, "data");
        c.data.seed = s.value("seed", d.data.seed);
        c.data.root = s.value("root", d.data.root);
    }
    if (j.contains("model")) c.model = overlay(j.at("model"), d.model, "model");
    if (j.contains("training")) c.training = j.at("training").get<TrainConfig>();
    if (j.contains("evaluation")) {
        const auto& s = j.at("evaluation");
        reject_unknown(s, nlohmann::json(d).at("evaluation"), "evaluation");
        c.evaluation.output_dir = s.value("output_dir", d.evaluation.output_dir);
        c.evaluation.seeds = s.value("seeds", d.evaluation.seeds);
    }
}

RunConfig load_run_config(const fs::path& file)
{
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot open config file " + file.string());
    try {
        const auto j = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
        auto c = j.get<RunConfig>();
        c.validate();
        return c;
    } catch (const std::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

RunConfig desk_run_config()
{
    RunConfig c;
    // 60 epochs instead of 1200: a 10x larger step keeps the segmenter from stalling
    c.training.learning_rate = 1e-3;
    return c;
}

fs::path data_root(const fs::path& fallback)
{
    if (const char* env = std::getenv("DOMAINGAME_DATA"); env && *env) return env;
    return fallback;
}

} // namespace domaingame
