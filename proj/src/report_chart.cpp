#include "valign/report_chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace valign {

namespace {

struct MetricColumn {
    std::string name;
    std::vector<double> values;  // one per report
};

std::vector<MetricColumn> collect(const std::vector<LabeledReport>& reports) {
    if (reports.empty()) throw usage_error("no reports given");
    const auto& first_k = reports.front().report.retrieval_at_k;
    for (const auto& r : reports) {
        if (r.report.retrieval_at_k.size() != first_k.size())
            throw parse_error("report schema mismatch: retrieval k sets differ");
        for (const auto& [k, rate] : first_k)
            if (!r.report.retrieval_at_k.count(k))
                throw parse_error(
                    "report schema mismatch: retrieval k sets differ");
    }
    std::vector<MetricColumn> cols;
    cols.push_back({"spearman_rho", {}});
    for (const auto& [k, rate] : first_k)
        cols.push_back({"retrieval_at_" + std::to_string(k), {}});
    cols.push_back({"probe_r2_within", {}});
    cols.push_back({"probe_r2_transfer", {}});
    for (const auto& r : reports) {
        std::size_t c = 0;
        cols[c++].values.push_back(r.report.spearman_rho);
        for (const auto& [k, rate] : r.report.retrieval_at_k)
            cols[c++].values.push_back(rate);
        cols[c++].values.push_back(r.report.probe_r2_within);
        cols[c++].values.push_back(r.report.probe_r2_transfer);
    }
    return cols;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

void write_comparison_csv(const std::string& path,
                          const std::vector<LabeledReport>& reports) {
    const auto cols = collect(reports);
    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "label";
    for (const auto& c : cols) out << "," << c.name;
    out << "\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
        out << reports[r].label;
        for (const auto& c : cols) out << "," << fmt(c.values[r]);
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

void write_comparison_svg(const std::string& path,
                          const std::vector<LabeledReport>& reports) {
    const auto cols = collect(reports);
    const std::size_t n_groups = cols.size();
    const std::size_t n_bars = reports.size();

    double vmin = 0.0, vmax = 1.0;
    for (const auto& c : cols)
        for (double v : c.values) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    const double span = vmax - vmin;

    const double margin_l = 60, margin_r = 20, margin_t = 30, margin_b = 70;
    const double group_w = std::max<double>(60.0, 26.0 * double(n_bars) + 20);
    const double plot_w = group_w * double(n_groups);
    const double plot_h = 260;
    const double width = margin_l + plot_w + margin_r;
    const double height = margin_t + plot_h + margin_b;

    const char* palette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                             "#b07aa1", "#76b7b2", "#edc948", "#9c755f"};
    const std::size_t n_colors = sizeof(palette) / sizeof(palette[0]);

    auto ypos = [&](double v) {
        return margin_t + plot_h * (1.0 - (v - vmin) / span);
    };

    std::ofstream out(path);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";

    // axis and gridlines at 0 and 1
    for (double tick : {0.0, 0.5, 1.0}) {
        if (tick < vmin || tick > vmax) continue;
        const double y = ypos(tick);
        out << "<line x1=\"" << margin_l << "\" y1=\"" << y << "\" x2=\""
            << margin_l + plot_w << "\" y2=\"" << y
            << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << margin_l - 8 << "\" y=\"" << y + 4
            << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">" << tick
            << "</text>\n";
    }

    for (std::size_t g = 0; g < n_groups; ++g) {
        const double gx = margin_l + group_w * double(g);
        const double bar_w =
            std::min(22.0, (group_w - 20.0) / double(n_bars));
        for (std::size_t b = 0; b < n_bars; ++b) {
            const double v = cols[g].values[b];
            const double x = gx + 10 + bar_w * double(b);
            const double y0 = ypos(std::max(0.0, v));
            const double y1 = ypos(std::min(0.0, v));
            out << "<rect x=\"" << x << "\" y=\"" << y0 << "\" width=\""
                << bar_w - 2 << "\" height=\"" << std::max(0.5, y1 - y0)
                << "\" fill=\"" << palette[b % n_colors] << "\"/>\n";
        }
        out << "<text x=\"" << gx + group_w / 2 << "\" y=\""
            << margin_t + plot_h + 16
            << "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#333\">"
            << xml_escape(cols[g].name) << "</text>\n";
    }

    // legend
    double lx = margin_l;
    const double ly = margin_t + plot_h + 36;
    for (std::size_t b = 0; b < n_bars; ++b) {
        out << "<rect x=\"" << lx << "\" y=\"" << ly - 9
            << "\" width=\"10\" height=\"10\" fill=\""
            << palette[b % n_colors] << "\"/>\n";
        out << "<text x=\"" << lx + 14 << "\" y=\"" << ly
            << "\" font-size=\"11\" fill=\"#333\">"
            << xml_escape(reports[b].label) << "</text>\n";
        lx += 14.0 + 7.0 * double(reports[b].label.size()) + 18.0;
    }
    out << "</svg>\n";
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace valign
