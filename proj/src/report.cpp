#include "trait_probe/sweep.hpp"
#include "trait_probe/util.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <sstream>

namespace trait_probe {

namespace {

constexpr int kWidth = 1200;
constexpr int kHeight = 675;
constexpr double kLeft = 90.0;
constexpr double kRight = 920.0;
constexpr double kTop = 60.0;
constexpr double kBottom = 600.0;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string px(double v) { return format_fixed(v, 2); }

std::string escape(const std::string& s)
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

struct Point {
    int x_key;
    const SweepRow* row;
};

} // namespace

std::string render_svg(const SweepReport& report)
{
    const bool pca = report.kind == SweepKind::pca;

    // Series in first-appearance order; the no-PCA reference rows are not plotted.
    std::vector<std::string> models;
    std::map<std::string, std::vector<Point>> series;
    std::set<int> x_keys;
    const SweepRow* baseline = nullptr;
    for (const auto& r : report.rows) {
        if (r.model == "mfcc") {
            if (!r.failed && !baseline) baseline = &r;
            continue;
        }
        if (pca && !r.k) continue;
        const int key = pca ? *r.k : r.layer;
        if (!series.count(r.model)) models.push_back(r.model);
        series[r.model].push_back({key, &r});
        x_keys.insert(key);
    }

    // Layers use a linear axis; PCA dimensions are evenly spaced categories.
    std::vector<int> keys(x_keys.begin(), x_keys.end());
    auto x_of = [&](int key) {
        if (keys.size() <= 1) return (kLeft + kRight) / 2.0;
        if (pca) {
            const auto idx = static_cast<double>(std::lower_bound(keys.begin(), keys.end(), key) - keys.begin());
            return kLeft + 30.0 + (kRight - kLeft - 60.0) * idx / static_cast<double>(keys.size() - 1);
        }
        return kLeft + 30.0 + (kRight - kLeft - 60.0) * (key - keys.front()) / static_cast<double>(keys.back() - keys.front());
    };
    auto y_of = [](double accuracy) { return kBottom - (kBottom - kTop) * std::clamp(accuracy, 0.0, 1.0); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << px((kLeft + kRight) / 2) << "\" y=\"32\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"20\">"
        << escape(report.dataset + " " + report.task + (pca ? ": accuracy vs PCA dimension" : ": accuracy vs layer"))
        << "</text>\n";

    // Axes and grid.
    svg << "<g id=\"axes\" font-family=\"sans-serif\" font-size=\"13\">\n";
    for (int tick = 0; tick <= 100; tick += 10) {
        const double y = y_of(tick / 100.0);
        svg << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(y) << "\" x2=\"" << px(kRight) << "\" y2=\"" << px(y)
            << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<text x=\"" << px(kLeft - 8) << "\" y=\"" << px(y + 4) << "\" text-anchor=\"end\">" << tick << "</text>\n";
    }
    for (int key : keys) {
        const double x = x_of(key);
        svg << "<text x=\"" << px(x) << "\" y=\"" << px(kBottom + 20) << "\" text-anchor=\"middle\">" << key << "</text>\n";
    }
    svg << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kBottom) << "\" x2=\"" << px(kRight) << "\" y2=\"" << px(kBottom)
        << "\" stroke=\"#000000\"/>\n";
    svg << "<line x1=\"" << px(kLeft) << "\" y1=\"" << px(kTop) << "\" x2=\"" << px(kLeft) << "\" y2=\"" << px(kBottom)
        << "\" stroke=\"#000000\"/>\n";
    svg << "<text x=\"" << px((kLeft + kRight) / 2) << "\" y=\"" << px(kBottom + 48) << "\" text-anchor=\"middle\">"
        << (pca ? "Reduced feature dimension (k)" : "Layer") << "</text>\n";
    svg << "<text x=\"24\" y=\"" << px((kTop + kBottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 24 "
        << px((kTop + kBottom) / 2) << ")\">Accuracy (%)</text>\n";
    svg << "</g>\n";

    if (baseline) {
        const double y = y_of(baseline->accuracy);
        svg << "<line class=\"baseline\" x1=\"" << px(kLeft) << "\" y1=\"" << px(y) << "\" x2=\"" << px(kRight) << "\" y2=\""
            << px(y) << "\" stroke=\"#555555\" stroke-width=\"2\" stroke-dasharray=\"8 6\"/>\n";
    }

    for (std::size_t m = 0; m < models.size(); ++m) {
        const char* color = kPalette[m % kPalette.size()];
        auto points = series[models[m]];
        std::stable_sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.x_key < b.x_key; });
        svg << "<g class=\"series\" data-model=\"" << escape(models[m]) << "\">\n";

        // Failed cells split the line into segments.
        std::vector<std::vector<Point>> segments(1);
        for (const auto& p : points) {
            if (p.row->failed) {
                if (!segments.back().empty()) segments.emplace_back();
                continue;
            }
            segments.back().push_back(p);
        }
        for (const auto& seg : segments) {
            if (seg.size() < 2) continue;
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t i = 0; i < seg.size(); ++i)
                svg << (i ? " " : "") << px(x_of(seg[i].x_key)) << ',' << px(y_of(seg[i].row->accuracy));
            svg << "\"/>\n";
        }
        for (const auto& seg : segments)
            for (const auto& p : seg)
                svg << "<circle class=\"marker\" cx=\"" << px(x_of(p.x_key)) << "\" cy=\"" << px(y_of(p.row->accuracy))
                    << "\" r=\"" << (p.row->is_best ? 6 : 4) << "\" fill=\"" << color << "\"/>\n";
        svg << "</g>\n";
    }

    // Legend.
    svg << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"14\">\n";
    double ly = kTop + 10;
    for (std::size_t m = 0; m < models.size(); ++m) {
        svg << "<line x1=\"950\" y1=\"" << px(ly) << "\" x2=\"980\" y2=\"" << px(ly) << "\" stroke=\""
            << kPalette[m % kPalette.size()] << "\" stroke-width=\"3\"/>\n";
        svg << "<text x=\"990\" y=\"" << px(ly + 5) << "\">" << escape(models[m]) << "</text>\n";
        ly += 26;
    }
    if (baseline) {
        svg << "<line x1=\"950\" y1=\"" << px(ly) << "\" x2=\"980\" y2=\"" << px(ly)
            << "\" stroke=\"#555555\" stroke-width=\"2\" stroke-dasharray=\"8 6\"/>\n";
        svg << "<text x=\"990\" y=\"" << px(ly + 5) << "\">MFCC baseline</text>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

} // namespace trait_probe
