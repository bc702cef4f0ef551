// SPDX-License-Identifier: Apache-2.0
#include "domaingame/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- styles

void DomainStyle::validate(int num_classes) const
{
    if (!(gamma > 0)) throw std::invalid_argument("style '" + domain_id + "': gamma must be > 0");
    if (!(contrast > 0)) throw std::invalid_argument("style '" + domain_id + "': contrast must be > 0");
    if (bias_field_amplitude < 0 || bias_field_amplitude >= 1) {
        throw std::invalid_argument("style '" + domain_id + "': bias_field_amplitude must be in [0, 1)");
    }
    if (noise_sigma < 0) throw std::invalid_argument("style '" + domain_id + "': noise_sigma must be >= 0");
    for (int k = 0; k < num_classes; ++k) {
        const auto it = tissue_intensities.find(k);
        if (it == tissue_intensities.end()) {
            throw std::invalid_argument("style '" + domain_id + "': no tissue intensity for class " + std::to_string(k));
        }
        if (it->second < 0 || it->second > 1) {
            throw std::invalid_argument("style '" + domain_id + "': tissue intensity outside [0,1]");
        }
    }
}

void to_json(nlohmann::json& j, const DomainStyle& s)
{
    nlohmann::json tissue = nlohmann::json::object();
    for (const auto& [k, v] : s.tissue_intensities) tissue[std::to_string(k)] = v;
    j = nlohmann::json{{"domain_id", s.domain_id},
                       {"gamma", s.gamma},
                       {"contrast", s.contrast},
                       {"brightness_bias", s.brightness_bias},
                       {"bias_field_amplitude", s.bias_field_amplitude},
                       {"noise_sigma", s.noise_sigma},
                       {"tissue_intensities", tissue}};
}

void from_json(const nlohmann::json& j, DomainStyle& s)
{
    static const std::set<std::string> known{"domain_id",           "gamma",       "contrast",          "brightness_bias",
                                             "bias_field_amplitude", "noise_sigma", "tissue_intensities"};
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw std::invalid_argument("unknown domain style key '" + k + "'");
    }
    s.domain_id = j.at("domain_id").get<std::string>();
    s.gamma = j.value("gamma", 1.0);
    s.contrast = j.value("contrast", 1.0);
    s.brightness_bias = j.value("brightness_bias", 0.0);
    s.bias_field_amplitude = j.value("bias_field_amplitude", 0.0);
    s.noise_sigma = j.value("noise_sigma", 0.0);
    s.tissue_intensities.clear();
    if (j.contains("tissue_intensities")) {
        for (const auto& [k, v] : j.at("tissue_intensities").items()) s.tissue_intensities[std::stoi(k)] = v.get<double>();
    }
}

std::map<int, double> default_tissue_intensities(int num_classes)
{
    std::map<int, double> t;
    t[0] = 0.25;
    for (int k = 1; k < num_classes; ++k) {
        t[k] = 0.55 + 0.35 * static_cast<double>(k - 1) / std::max(1, num_classes - 2);
    }
    return t;
}

DomainStyle identity_style(int num_classes, std::string domain_id)
{
    DomainStyle s;
    s.domain_id = std::move(domain_id);
    s.tissue_intensities = default_tissue_intensities(num_classes);
    return s;
}

std::vector<std::string> style_preset_names() { return {"identity", "source", "lowfield", "bright", "lowcontrast"}; }

DomainStyle style_preset(const std::string& name, int num_classes)
{
    DomainStyle s = identity_style(num_classes, name);
    if (name == "identity") return s;
    if (name == "source") {
        s.noise_sigma = 0.04;
        s.bias_field_amplitude = 0.08;
    } else if (name == "lowfield") {
        // noisy acquisition with a strong low-frequency bias field
        s.noise_sigma = 0.10;
        s.bias_field_amplitude = 0.30;
        s.contrast = 0.85;
    } else if (name == "bright") {
        s.noise_sigma = 0.04;
        s.bias_field_amplitude = 0.08;
        s.gamma = 0.75;
        s.brightness_bias = 0.08;
    } else if (name == "lowcontrast") {
        s.noise_sigma = 0.05;
        s.bias_field_amplitude = 0.10;
        s.contrast = 0.55;
        s.brightness_bias = -0.05;
    } else {
        throw std::invalid_argument("unknown style preset '" + name + "'");
    }
    return s;
}

// ---------------------------------------------------------------- anatomy

namespace {

struct Bump {
    double cy, cx, cz, sa, sb, cos_t, sin_t, sz, amp;
};

bool touches_border(const LabelTensor& labels)
{
    const int d = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
    for (int z = 0; z < d; ++z) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                if ((i == 0 || j == 0 || i == h - 1 || j == w - 1) && labels.at(z, i, j) != 0) return true;
            }
        }
    }
    return false;
}

/// Demote class-k voxels that touch (8-connected, in-slice) a class below k-1.
void enforce_nesting(LabelTensor& labels)
{
    const int d = labels.dim(0), h = labels.dim(1), w = labels.dim(2);
    bool changed = true;
    while (changed) {
        changed = false;
        for (int z = 0; z < d; ++z) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    const int k = labels.at(z, i, j);
                    if (k < 2) continue;
                    int lowest = k;
                    for (int di = -1; di <= 1; ++di) {
                        for (int dj = -1; dj <= 1; ++dj) {
                            const int ii = i + di, jj = j + dj;
                            if (ii < 0 || jj < 0 || ii >= h || jj >= w) continue;
                            lowest = std::min(lowest, static_cast<int>(labels.at(z, ii, jj)));
                        }
                    }
                    if (lowest < k - 1) {
                        labels.at(z, i, j) = k - 1;
                        changed = true;
                    }
                }
            }
        }
    }
}

} // namespace

AnatomySample generate_anatomy(Rng& rng, int depth, int height, int width, int num_classes, std::string sample_id)
{
    if (height != width) throw std::invalid_argument("generate_anatomy: height must equal width");
    if (num_classes < 2) throw std::invalid_argument("generate_anatomy: num_classes must be >= 2");
    if (depth < 3) throw std::invalid_argument("generate_anatomy: depth must be >= 3");
    const double size = height;
    const auto tissue = default_tissue_intensities(num_classes);

    for (int attempt = 0; attempt < kAnatomyMaxRetries; ++attempt) {
        const double cy = rng.uniform(0.3, 0.7) * size;
        const double cx = rng.uniform(0.3, 0.7) * size;
        const double cz = rng.uniform(0.35, 0.65) * (depth - 1);
        const int nbumps = 2 + static_cast<int>(rng.below(3));
        std::vector<Bump> bumps;
        for (int b = 0; b < nbumps; ++b) {
            const double theta = rng.uniform(0.0, std::numbers::pi);
            Bump bump{};
            bump.cy = cy + rng.normal() * 0.08 * size;
            bump.cx = cx + rng.normal() * 0.08 * size;
            bump.cz = cz + rng.normal() * 0.1 * depth;
            bump.sa = rng.uniform(0.10, 0.19) * size;
            bump.sb = rng.uniform(0.07, 0.13) * size;
            bump.cos_t = std::cos(theta);
            bump.sin_t = std::sin(theta);
            bump.sz = rng.uniform(0.45, 0.8) * depth;
            bump.amp = rng.uniform(0.8, 1.2);
            bumps.push_back(bump);
        }

        LabelTensor labels({depth, height, width});
        for (int z = 0; z < depth; ++z) {
            for (int i = 0; i < height; ++i) {
                for (int j = 0; j < width; ++j) {
                    double f = 0;
                    for (const auto& b : bumps) {
                        const double dy = i + 0.5 - b.cy, dx = j + 0.5 - b.cx;
                        const double u = (dx * b.cos_t + dy * b.sin_t) / b.sa;
                        const double v = (-dx * b.sin_t + dy * b.cos_t) / b.sb;
                        const double w = (z - b.cz) / b.sz;
                        f += b.amp * std::exp(-0.5 * (u * u + v * v + w * w));
                    }
                    int k = 0;
                    for (int c = 1; c < num_classes; ++c) {
                        if (f > 0.5 + 0.35 * (c - 1)) k = c;
                    }
                    labels.at(z, i, j) = k;
                }
            }
        }
        enforce_nesting(labels);
        if (touches_border(labels)) continue;
        std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
        for (auto v : labels.values()) present[static_cast<std::size_t>(v)] = true;
        if (!std::all_of(present.begin() + 1, present.end(), [](bool p) { return p; })) continue;

        AnatomySample out;
        out.volume = Tensor(labels.shape());
        for (std::size_t k = 0; k < labels.size(); ++k) out.volume[k] = static_cast<Real>(tissue.at(labels[k]));
        out.labels = std::move(labels);
        out.sample_id = std::move(sample_id);
        return out;
    }
    throw AnatomyError("generate_anatomy: no valid anatomy after " + std::to_string(kAnatomyMaxRetries) + " attempts");
}

Tensor render_domain(const AnatomySample& anatomy, const DomainStyle& style, Rng& rng)
{
    const int nclasses = 1 + *std::max_element(anatomy.labels.values().begin(), anatomy.labels.values().end());
    style.validate(nclasses);
    const int d = anatomy.labels.dim(0), h = anatomy.labels.dim(1), w = anatomy.labels.dim(2);

    const double amp = style.bias_field_amplitude;
    double fy = 0, fx = 0, py = 0, px = 0, pz = 0;
    if (amp > 0) {
        fy = rng.uniform(0.3, 0.8);
        fx = rng.uniform(0.3, 0.8);
        py = rng.uniform(0.0, 2 * std::numbers::pi);
        px = rng.uniform(0.0, 2 * std::numbers::pi);
        pz = rng.uniform(0.0, 0.3);
    }

    Tensor out(anatomy.labels.shape());
    for (int z = 0; z < d; ++z) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double t = style.tissue_intensities.at(anatomy.labels.at(z, i, j));
                if (amp > 0) {
                    const double s = std::sin(2 * std::numbers::pi * fy * i / h + py + pz * z) *
                                     std::sin(2 * std::numbers::pi * fx * j / w + px);
                    t *= 1.0 + amp * s;
                }
                double v = style.gamma == 1.0 ? t : std::pow(std::max(t, 0.0), style.gamma);
                v = (v - 0.5) * style.contrast + 0.5 + style.brightness_bias;
                if (style.noise_sigma > 0) v += style.noise_sigma * rng.normal();
                out.at(z, i, j) = static_cast<Real>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

std::vector<WindowSample> sliding_windows(const Tensor& volume, const LabelTensor& labels,
                                          const std::string& source_sample)
{
    if (volume.rank() != 3) throw ShapeError("sliding_windows: volume must be {D,H,W}, got " + shape_string(volume.shape()));
    require_shape(labels.shape(), volume.shape(), "sliding_windows labels");
    const int d = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
    if (d < 1) throw std::invalid_argument("sliding_windows: depth must be >= 1");
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<WindowSample> out;
    out.reserve(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
        WindowSample ws;
        ws.window = Tensor({3, h, w});
        for (int k = 0; k < 3; ++k) {
            const int src = std::clamp(c + k - 1, 0, d - 1);
            std::memcpy(ws.window.data() + static_cast<std::size_t>(k) * plane,
                        volume.data() + static_cast<std::size_t>(src) * plane, plane * sizeof(Real));
        }
        ws.center_label = LabelTensor({h, w});
        std::memcpy(ws.center_label.data(), labels.data() + static_cast<std::size_t>(c) * plane,
                    plane * sizeof(std::int32_t));
        ws.source_sample = source_sample;
        ws.center_index = c;
        out.push_back(std::move(ws));
    }
    return out;
}

// ---------------------------------------------------------------- benchmark

void to_json(nlohmann::json& j, const BenchmarkConfig& c)
{
    nlohmann::json custom = nlohmann::json::object();
    for (const auto& [k, v] : c.custom_styles) custom[k] = v;
    j = nlohmann::json{{"image_size", c.image_size},
                       {"depth", c.depth},
                       {"num_classes", c.num_classes},
                       {"source_samples", c.source_samples},
                       {"target_samples", c.target_samples},
                       {"source_style", c.source_style},
                       {"target_styles", c.target_styles},
                       {"custom_styles", custom},
                       {"paired_targets", c.paired_targets}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c)
{
    c = BenchmarkConfig{};
    c.image_size = j.value("image_size", c.image_size);
    c.depth = j.value("depth", c.depth);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.source_samples = j.value("source_samples", c.source_samples);
    c.target_samples = j.value("target_samples", c.target_samples);
    c.source_style = j.value("source_style", c.source_style);
    if (j.contains("target_styles")) c.target_styles = j.at("target_styles").get<std::vector<std::string>>();
    if (j.contains("custom_styles")) {
        for (const auto& [k, v] : j.at("custom_styles").items()) c.custom_styles[k] = v.get<DomainStyle>();
    }
    c.paired_targets = j.value("paired_targets", c.paired_targets);
}

SplitCounts split_counts(int n)
{
    const int train = static_cast<int>(std::lround(0.7 * n));
    const int val = static_cast<int>(std::lround(0.1 * n));
    const int test = n - train - val;
    if (train < 1 || val < 1 || test < 1) {
        throw std::invalid_argument("70/10/20 split of " + std::to_string(n) +
                                    " samples leaves an empty partition; at least 10 source samples are required");
    }
    return {train, val, test};
}

void to_json(nlohmann::json& j, const DomainSplit& s)
{
    j = nlohmann::json{{"domain_id", s.domain_id}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

void from_json(const nlohmann::json& j, DomainSplit& s)
{
    s.domain_id = j.at("domain_id").get<std::string>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const BenchmarkManifest& m)
{
    j = nlohmann::json{{"format_version", kManifestFormatVersion},
                       {"seed", m.seed},
                       {"config", m.config},
                       {"source_domain", m.source_domain},
                       {"target_domains", m.target_domains},
                       {"source_split", m.source_split},
                       {"target_splits", m.target_splits}};
}

void from_json(const nlohmann::json& j, BenchmarkManifest& m)
{
    const auto version = j.at("format_version").get<std::uint32_t>();
    if (version != kManifestFormatVersion) {
        throw std::runtime_error("unsupported manifest format version " + std::to_string(version));
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<BenchmarkConfig>();
    m.source_domain = j.at("source_domain").get<DomainStyle>();
    m.target_domains = j.at("target_domains").get<std::vector<DomainStyle>>();
    m.source_split = j.at("source_split").get<DomainSplit>();
    m.target_splits = j.at("target_splits").get<std::vector<DomainSplit>>();
}

const VolumeRecord& Benchmark::volume(const std::string& sample_id) const
{
    for (const auto& v : volumes) {
        if (v.sample_id == sample_id) return v;
    }
    throw std::out_of_range("benchmark has no sample '" + sample_id + "'");
}

namespace {

DomainStyle resolve_style(const BenchmarkConfig& c, const std::string& name)
{
    const auto it = c.custom_styles.find(name);
    DomainStyle s = it != c.custom_styles.end() ? it->second : style_preset(name, c.num_classes);
    s.domain_id = name;
    s.validate(c.num_classes);
    return s;
}

std::string sample_name(const std::string& domain, int i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%03d", i);
    return domain + buf;
}

std::uint64_t stream_id(int domain, int sample, int purpose)
{
    return (static_cast<std::uint64_t>(domain) << 40) ^ (static_cast<std::uint64_t>(sample) << 8) ^
           static_cast<std::uint64_t>(purpose);
}

} // namespace

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed)
{
    if (config.target_styles.empty()) throw std::invalid_argument("make_benchmark: at least one target domain required");
    if (config.source_samples < 10) {
        throw std::invalid_argument("make_benchmark: " + std::to_string(config.source_samples) +
                                    " source samples given; at least 10 are required for a 70/10/20 split");
    }
    if (!config.paired_targets && config.target_samples < 1) {
        throw std::invalid_argument("make_benchmark: target_samples must be >= 1");
    }
    const auto counts = split_counts(config.source_samples);

    Benchmark bench;
    auto& m = bench.manifest;
    m.seed = seed;
    m.config = config;
    m.source_domain = resolve_style(config, config.source_style);
    std::set<std::string> seen{m.source_domain.domain_id};
    for (const auto& name : config.target_styles) {
        if (!seen.insert(name).second) throw std::invalid_argument("make_benchmark: duplicate domain '" + name + "'");
        m.target_domains.push_back(resolve_style(config, name));
    }

    const int s = config.image_size, d = config.depth, k = config.num_classes;
    auto anatomy_for = [&](int domain, int i, const std::string& id) {
        Rng r(derive_seed(seed, stream_id(domain, i, 0)));
        return generate_anatomy(r, d, s, s, k, id);
    };
    auto render = [&](const AnatomySample& a, const DomainStyle& st, int domain, int i, const std::string& id) {
        Rng r(derive_seed(seed, stream_id(domain, i, 1)));
        return VolumeRecord{id, st.domain_id, render_domain(a, st, r), a.labels};
    };

    std::vector<std::string> ids;
    for (int i = 0; i < config.source_samples; ++i) {
        const auto id = sample_name(m.source_domain.domain_id, i);
        ids.push_back(id);
        bench.volumes.push_back(render(anatomy_for(0, i, id), m.source_domain, 0, i, id));
    }

    std::vector<int> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng split_rng(derive_seed(seed, 0x5EED5B11ULL));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[split_rng.below(i + 1)]);
    m.source_split.domain_id = m.source_domain.domain_id;
    for (int i = 0; i < config.source_samples; ++i) {
        const auto& id = ids[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (i < counts.train) {
            m.source_split.train.push_back(id);
        } else if (i < counts.train + counts.val) {
            m.source_split.val.push_back(id);
        } else {
            m.source_split.test.push_back(id);
        }
    }
    std::sort(m.source_split.train.begin(), m.source_split.train.end());
    std::sort(m.source_split.val.begin(), m.source_split.val.end());
    std::sort(m.source_split.test.begin(), m.source_split.test.end());

    for (std::size_t t = 0; t < m.target_domains.size(); ++t) {
        const auto& st = m.target_domains[t];
        const int domain = static_cast<int>(t) + 1;
        DomainSplit split;
        split.domain_id = st.domain_id;
        if (config.paired_targets) {
            for (const auto& src_id : m.source_split.test) {
                const int i = std::stoi(src_id.substr(src_id.size() - 3));
                const auto id = sample_name(st.domain_id, i);
                bench.volumes.push_back(render(anatomy_for(0, i, id), st, domain, i, id));
                split.test.push_back(id);
            }
        } else {
            for (int i = 0; i < config.target_samples; ++i) {
                const auto id = sample_name(st.domain_id, i);
                bench.volumes.push_back(render(anatomy_for(domain, i, id), st, domain, i, id));
                split.test.push_back(id);
            }
        }
        m.target_splits.push_back(std::move(split));
    }
    return bench;
}

// ---------------------------------------------------------------- storage

namespace {

constexpr char kVolumeMagic[8] = {'D', 'G', 'V', 'O', 'L', 'U', 'M', 'E'};

template <class T>
void put(std::ostream& os, const T& v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated volume file");
    return v;
}

void put_string(std::ostream& os, const std::string& s)
{
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is)
{
    const auto n = get<std::uint32_t>(is);
    if (n > (1u << 20)) throw std::runtime_error("corrupt string length in volume file");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("truncated volume file");
    return s;
}

} // namespace

void write_volume(const fs::path& file, const VolumeRecord& v)
{
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write volume file " + file.string());
    os.write(kVolumeMagic, sizeof kVolumeMagic);
    put<std::uint32_t>(os, kVolumeFormatVersion);
    for (int i = 0; i < 3; ++i) put<std::int32_t>(os, v.image.dim(i));
    put_string(os, v.sample_id);
    put_string(os, v.domain_id);
    for (std::size_t i = 0; i < v.image.size(); ++i) put<float>(os, static_cast<float>(v.image[i]));
    for (std::size_t i = 0; i < v.labels.size(); ++i) put<std::uint8_t>(os, static_cast<std::uint8_t>(v.labels[i]));
    if (!os) throw std::runtime_error("failed writing volume file " + file.string());
}

VolumeRecord read_volume(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("missing volume file " + file.string());
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kVolumeMagic, sizeof magic) != 0) {
        throw std::runtime_error("not a volume file: " + file.string());
    }
    const auto version = get<std::uint32_t>(is);
    if (version != kVolumeFormatVersion) {
        throw std::runtime_error("unsupported volume format version " + std::to_string(version) + " in " + file.string());
    }
    std::vector<int> shape(3);
    for (auto& s : shape) s = get<std::int32_t>(is);
    VolumeRecord v;
    v.sample_id = get_string(is);
    v.domain_id = get_string(is);
    v.image = Tensor(shape);
    v.labels = LabelTensor(shape);
    for (std::size_t i = 0; i < v.image.size(); ++i) v.image[i] = static_cast<Real>(get<float>(is));
    for (std::size_t i = 0; i < v.labels.size(); ++i) v.labels[i] = get<std::uint8_t>(is);
    return v;
}

fs::path volume_path(const fs::path& dir, const std::string& sample_id) { return dir / "volumes" / (sample_id + ".dgv"); }

std::string manifest_text(const BenchmarkManifest& m) { return nlohmann::json(m).dump(2) + "\n"; }

void write_benchmark(const Benchmark& bench, const fs::path& dir)
{
    fs::create_directories(dir / "volumes");
    for (const auto& v : bench.volumes) write_volume(volume_path(dir, v.sample_id), v);
    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    os << manifest_text(bench.manifest);
}

BenchmarkManifest read_manifest(const fs::path& dir)
{
    const auto file = dir / "manifest.json";
    std::ifstream is(file);
    if (!is) throw std::runtime_error("missing manifest " + file.string());
    return nlohmann::json::parse(is).get<BenchmarkManifest>();
}

Benchmark load_benchmark(const fs::path& dir)
{
    Benchmark b;
    b.manifest = read_manifest(dir);
    std::vector<std::string> ids;
    auto add = [&ids](const DomainSplit& s) {
        for (const auto* part : {&s.train, &s.val, &s.test}) ids.insert(ids.end(), part->begin(), part->end());
    };
    add(b.manifest.source_split);
    for (const auto& s : b.manifest.target_splits) add(s);
    std::vector<std::string> missing;
    for (const auto& id : ids) {
        const auto p = volume_path(dir, id);
        if (!fs::exists(p)) {
            missing.push_back(id);
            continue;
        }
        b.volumes.push_back(read_volume(p));
    }
    if (!missing.empty()) {
        std::string msg = "benchmark at " + dir.string() + " is missing samples:";
        for (const auto& id : missing) msg += " " + id;
        throw std::runtime_error(msg);
    }
    return b;
}

} // namespace domaingame
