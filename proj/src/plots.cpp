// SPDX-License-Identifier: Apache-2.0
#include "domaingame/plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

namespace {

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

constexpr std::array<std::array<std::uint8_t, 3>, 6> kClassColours{{
    {0, 0, 0}, {230, 80, 60}, {70, 170, 90}, {60, 110, 220}, {230, 200, 60}, {170, 80, 200},
}};

void write_bytes(const fs::path& file, const std::string& bytes)
{
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    os << bytes;
    if (!os) throw std::runtime_error("cannot write " + file.string());
}

} // namespace

std::string RgbImage::ppm() const
{
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

std::string dice_bar_chart_svg(const MetricsReport& report)
{
    const int bar = 48, gap = 24, left = 56, top = 24, plot_h = 200, bottom = 64;
    const int n = static_cast<int>(report.domains.size());
    const int width = left + n * (bar + gap) + gap;
    const int height = top + plot_h + bottom;
    auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int tick = 0; tick <= 100; tick += 25) {
        const std::string y = num(y_of(tick));
        s += "<line x1=\"" + std::to_string(left) + "\" x2=\"" + std::to_string(width - gap / 2) + "\" y1=\"" + y +
             "\" y2=\"" + y + "\" stroke=\"#ddd\"/>\n";
        s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + y + "\" text-anchor=\"end\" dy=\"4\">" +
             std::to_string(tick) + "</text>\n";
    }
    s += "<text x=\"14\" y=\"" + std::to_string(top + plot_h / 2) + "\" transform=\"rotate(-90 14 " +
         std::to_string(top + plot_h / 2) + ")\" text-anchor=\"middle\">Dice (x100)</text>\n";
    for (int i = 0; i < n; ++i) {
        const auto& d = report.domains[static_cast<std::size_t>(i)];
        const int x = left + gap + i * (bar + gap);
        const double y = y_of(d.dice_mean);
        s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + num(y) + "\" width=\"" + std::to_string(bar) +
             "\" height=\"" + num(top + plot_h - y) + "\" fill=\"" + (d.is_source ? "#4a7bb7" : "#e08a3c") + "\"/>\n";
        const std::string cx = std::to_string(x + bar / 2);
        s += "<line x1=\"" + cx + "\" x2=\"" + cx + "\" y1=\"" + num(y_of(d.dice_mean - d.dice_std)) + "\" y2=\"" +
             num(y_of(d.dice_mean + d.dice_std)) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + cx + "\" y=\"" + num(y - 4) + "\" text-anchor=\"middle\">" + num(d.dice_mean) + "</text>\n";
        s += "<text x=\"" + cx + "\" y=\"" + std::to_string(top + plot_h + 16) + "\" text-anchor=\"middle\">" +
             escape_xml(d.domain_id) + "</text>\n";
        if (d.is_source) {
            s += "<text x=\"" + cx + "\" y=\"" + std::to_string(top + plot_h + 30) +
                 "\" text-anchor=\"middle\" fill=\"#666\">(source)</text>\n";
        }
    }
    if (!report.targets().empty()) {
        s += "<text x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(height - 10) +
             "\">target average " + num(report.target_average_dice()) + ", drop " + num(report.drop_dice()) +
             "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

RgbImage triptych(const Tensor& slice, const LabelTensor& truth, const LabelTensor& pred, int scale)
{
    if (slice.rank() != 2 || truth.shape() != slice.shape() || pred.shape() != slice.shape())
        throw ShapeError("triptych: slice, truth and prediction must share one {H,W} shape");
    if (scale < 1) throw std::invalid_argument("triptych: scale must be >= 1");
    const int h = slice.dim(0), w = slice.dim(1), sep = 2;
    RgbImage img;
    img.width = (3 * w) * scale + 2 * sep;
    img.height = h * scale;
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 255);
    auto put = [&](int panel, int i, int j, std::array<std::uint8_t, 3> rgb) {
        for (int di = 0; di < scale; ++di) {
            for (int dj = 0; dj < scale; ++dj) {
                const int y = i * scale + di, x = panel * (w * scale + sep) + j * scale + dj;
                auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
                p[0] = rgb[0];
                p[1] = rgb[1];
                p[2] = rgb[2];
            }
        }
    };
    auto colour = [](std::uint8_t c) { return kClassColours[std::min<std::size_t>(c, kClassColours.size() - 1)]; };
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const auto g = static_cast<std::uint8_t>(std::lround(std::clamp<double>(slice.at(i, j), 0.0, 1.0) * 255));
            put(0, i, j, {g, g, g});
            put(1, i, j, colour(truth.at(i, j)));
            put(2, i, j, colour(pred.at(i, j)));
        }
    }
    return img;
}

std::vector<fs::path> write_plots(const MetricsReport& report, const fs::path& out_dir, const Benchmark* bench,
                                  const VolumePredictor* predict, int per_domain)
{
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    written.push_back(out_dir / "dice.svg");
    write_bytes(written.back(), dice_bar_chart_svg(report));
    if (!bench || !predict || per_domain <= 0) return written;

    auto emit = [&](const DomainSplit& split) {
        const int count = std::min<int>(per_domain, static_cast<int>(split.test.size()));
        for (int k = 0; k < count; ++k) {
            const auto& v = bench->volume(split.test[static_cast<std::size_t>(k)]);
            const auto pred = (*predict)(v);
            const int z = v.image.dim(0) / 2, h = v.image.dim(1), w = v.image.dim(2);
            Tensor slice({h, w});
            LabelTensor truth({h, w}), guess({h, w});
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    slice.at(i, j) = v.image.at(z, i, j);
                    truth.at(i, j) = v.labels.at(z, i, j);
                    guess.at(i, j) = pred.at(z, i, j);
                }
            }
            written.push_back(out_dir / ("triptych_" + v.sample_id + ".ppm"));
            write_bytes(written.back(), triptych(slice, truth, guess).ppm());
        }
    };
    emit(bench->manifest.source_split);
    for (const auto& t : bench->manifest.target_splits) {
        const bool reported = std::any_of(report.domains.begin(), report.domains.end(),
                                          [&](const DomainMetrics& d) { return d.domain_id == t.domain_id; });
        if (reported) emit(t);
    }
    return written;
}

} // namespace domaingame
