#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "corrdyn/ca.hpp"
#include "corrdyn/common.hpp"
#include "corrdyn/profiles.hpp"
#include "corrdyn/stats.hpp"

namespace corrdyn {

// ---- CSV -------------------------------------------------------------------

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    out << content;
    require(out.good(), "write failed for '" + path.string() + "'");
}

class CsvBuilder {
  public:
    CsvBuilder& row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) text_ += ',';
            text_ += csv_escape(fields[i]);
        }
        text_ += '\n';
        return *this;
    }
    const std::string& text() const { return text_; }

  private:
    std::string text_;
};

inline std::string inertia_csv(const CaSolution& sol) {
    CsvBuilder csv;
    csv.row({"axis", "inertia", "percent", "cumulative_percent"});
    for (const auto& ax : inertia_summary(sol))
        csv.row({std::to_string(ax.axis), strfmt(fmt_short, ax.lambda), strfmt("%.2f", ax.percent),
                 strfmt("%.2f", ax.cumulative_percent)});
    return csv.text();
}

inline std::string row_coords_csv(const CaSolution& sol) {
    CsvBuilder csv;
    std::vector<std::string> head = {"row", "mass"};
    for (int a = 1; a <= sol.n_axes(); ++a) {
        head.push_back(strfmt("f%d", a));
        head.push_back(strfmt("ctr%d", a));
        head.push_back(strfmt("cos2_%d", a));
    }
    csv.row(head);
    for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
        std::vector<std::string> fields = {sol.row_labels[static_cast<std::size_t>(i)],
                                           strfmt(fmt_short, sol.row_masses[i])};
        for (int a = 0; a < sol.n_axes(); ++a) {
            fields.push_back(strfmt(fmt_short, sol.row_coords(i, a)));
            fields.push_back(strfmt(fmt_short, sol.row_ctr(i, a)));
            fields.push_back(strfmt(fmt_short, sol.row_cos2(i, a)));
        }
        csv.row(fields);
    }
    return csv.text();
}

inline std::string col_coords_csv(const CaSolution& sol) {
    CsvBuilder csv;
    std::vector<std::string> head = {"col", "mass"};
    for (int a = 1; a <= sol.n_axes(); ++a) {
        head.push_back(strfmt("g%d", a));
        head.push_back(strfmt("ctr%d", a));
    }
    csv.row(head);
    for (Eigen::Index j = 0; j < sol.n_cols(); ++j) {
        std::vector<std::string> fields = {sol.col_labels[static_cast<std::size_t>(j)],
                                           strfmt(fmt_short, sol.col_masses[j])};
        for (int a = 0; a < sol.n_axes(); ++a) {
            fields.push_back(strfmt(fmt_short, sol.col_coords(j, a)));
            fields.push_back(strfmt(fmt_short, sol.col_ctr(j, a)));
        }
        csv.row(fields);
    }
    return csv.text();
}

inline std::string curves_csv(const ElectrodeCurves& curves) {
    CsvBuilder csv;
    csv.row({"electrode", "time_ms", "profile", "ctr"});
    for (std::size_t e = 0; e < curves.electrodes.size(); ++e)
        for (std::size_t t = 0; t < curves.times_ms.size(); ++t)
            csv.row({curves.electrodes[e], strfmt(fmt_short, curves.times_ms[t]),
                     strfmt(fmt_short, curves.signed_profile(static_cast<Eigen::Index>(e),
                                                            static_cast<Eigen::Index>(t))),
                     strfmt(fmt_short,
                            curves.ctr(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)))});
    return csv.text();
}

inline std::string time_curve_csv(const TimeCurve& curve) {
    CsvBuilder csv;
    std::vector<std::string> head = {"time_ms"};
    for (Eigen::Index a = 0; a < curve.coords.cols(); ++a) head.push_back(strfmt("axis%d", static_cast<int>(a) + 1));
    csv.row(head);
    for (std::size_t t = 0; t < curve.times_ms.size(); ++t) {
        std::vector<std::string> fields = {strfmt(fmt_short, curve.times_ms[t])};
        for (Eigen::Index a = 0; a < curve.coords.cols(); ++a)
            fields.push_back(strfmt(fmt_short, curve.coords(static_cast<Eigen::Index>(t), a)));
        csv.row(fields);
    }
    return csv.text();
}

inline std::string extrema_csv(const std::vector<std::pair<int, std::vector<Extremum>>>& per_axis) {
    CsvBuilder csv;
    csv.row({"axis", "time_ms", "value", "kind"});
    for (const auto& [axis, list] : per_axis)
        for (const auto& ex : list)
            csv.row({std::to_string(axis), strfmt(fmt_short, ex.time_ms), strfmt(fmt_short, ex.value),
                     ex.is_max ? "max" : "min"});
    return csv.text();
}

inline std::string groups_csv(const std::vector<ElectrodeGroup>& groups) {
    CsvBuilder csv;
    csv.row({"group", "total_ctr", "electrodes"});
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::string members;
        for (std::size_t i = 0; i < groups[g].electrodes.size(); ++i) {
            if (i) members += ' ';
            members += groups[g].electrodes[i];
        }
        csv.row({std::to_string(g + 1), strfmt(fmt_short, groups[g].total_ctr), members});
    }
    return csv.text();
}

inline std::string cosine_csv(const CosineTable& table) {
    CsvBuilder csv;
    std::vector<std::string> head = {table.name_a.empty() ? "axis" : table.name_a + "\\" + table.name_b};
    for (int b : table.axes_b) head.push_back(strfmt("axis%d", b));
    csv.row(head);
    for (std::size_t i = 0; i < table.axes_a.size(); ++i) {
        std::vector<std::string> fields = {strfmt("axis%d", table.axes_a[i])};
        for (std::size_t j = 0; j < table.axes_b.size(); ++j)
            fields.push_back(strfmt("%.2f", table.values(static_cast<Eigen::Index>(i),
                                                         static_cast<Eigen::Index>(j))));
        csv.row(fields);
    }
    return csv.text();
}

// ---- SVG -------------------------------------------------------------------

namespace svg {

inline std::string num(double v) {
    std::string s = strfmt("%.3f", v);
    return s == "-0.000" ? "0.000" : s;
}

/// Diverging blue-white-red map for t in [-1, 1].
inline std::string diverging_color(double t) {
    t = std::clamp(t, -1.0, 1.0);
    int r, g, b;
    if (t < 0.0) {
        r = static_cast<int>(std::lround(255.0 * (1.0 + t)));
        g = static_cast<int>(std::lround(255.0 * (1.0 + 0.6 * t)));
        b = 255;
    } else {
        r = 255;
        g = static_cast<int>(std::lround(255.0 * (1.0 - 0.6 * t)));
        b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    }
    return strfmt("#%02x%02x%02x", r, g, b);
}

inline std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Canvas {
    std::string body;
    double width = 0.0, height = 0.0;

    Canvas(double w, double h) : width(w), height(h) {}

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "") {
        body += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" +
                num(h) + "\" fill=\"" + fill + "\"";
        if (!stroke.empty()) body += " stroke=\"" + stroke + "\"";
        body += "/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double sw = 1.0) {
        body += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
                num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(sw) + "\"/>\n";
    }
    void circle(double cx, double cy, double r, const std::string& fill,
                const std::string& stroke = "") {
        body += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" +
                fill + "\"";
        if (!stroke.empty()) body += " stroke=\"" + stroke + "\"";
        body += "/>\n";
    }
    void text(double x, double y, const std::string& content, double size = 10.0,
              const std::string& anchor = "start", const std::string& fill = "#222222") {
        body += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) +
                "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" +
                escape(content) + "</text>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double sw = 1.0) {
        body += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(sw) +
                "\" points=\"";
        for (const auto& [x, y] : pts) body += num(x) + "," + num(y) + " ";
        body += "\"/>\n";
    }

    std::string finish() const {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
               num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n" + body +
               "</svg>\n";
    }
};

/// Draws a topography disk into the canvas at (cx, cy) with the given radius.
/// Values are colored against `bound` so several maps can share one scale.
inline void draw_topo(Canvas& canvas, const TopoMap& map, double cx, double cy, double radius,
                      double bound) {
    if (bound <= 0.0) bound = 1.0;
    const int n = map.grid_n;
    const double cell = 2.0 * radius / n;
    for (int gy = 0; gy < n; ++gy)
        for (int gx = 0; gx < n; ++gx) {
            const double v = map.grid[static_cast<std::size_t>(gy) * static_cast<std::size_t>(n) +
                                      static_cast<std::size_t>(gx)];
            if (std::isnan(v)) continue;
            canvas.rect(cx - radius + gx * cell, cy - radius + gy * cell, cell + 0.05, cell + 0.05,
                        diverging_color(v / bound));
        }
    canvas.circle(cx, cy, radius, "none", "#333333");
    for (std::size_t i = 0; i < map.site_values.size(); ++i) {
        const double sx = cx + map.site_x[i] / map.radius * radius;
        const double sy = cy - map.site_y[i] / map.radius * radius;
        canvas.circle(sx, sy, 0.8, "#333333");
    }
}

}  // namespace svg

/// Scatter of row principal coordinates on a pair of axes, one labeled marker
/// per row.
inline std::string factor_map_svg(const CaSolution& sol, int axis_x, int axis_y) {
    const int ax = sol.axis_index(axis_x);
    const int ay = sol.n_axes() >= 2 ? sol.axis_index(axis_y) : ax;
    const double width = 720.0, height = 720.0, margin = 56.0;
    svg::Canvas canvas(width, height);
    canvas.rect(0, 0, width, height, "#ffffff");

    double ext = 1e-12;
    for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
        ext = std::max(ext, std::abs(sol.row_coords(i, ax)));
        if (sol.n_axes() >= 2) ext = std::max(ext, std::abs(sol.row_coords(i, ay)));
    }
    ext *= 1.15;
    const double half = (width - 2.0 * margin) / 2.0;
    auto px = [&](double v) { return width / 2.0 + v / ext * half; };
    auto py = [&](double v) { return height / 2.0 - v / ext * half; };

    canvas.line(margin, height / 2.0, width - margin, height / 2.0, "#bbbbbb");
    canvas.line(width / 2.0, margin, width / 2.0, height - margin, "#bbbbbb");
    canvas.text(width - margin + 4, height / 2.0 + 4,
                strfmt("axis %d (%.1f%%)", axis_x, inertia_summary(sol)[static_cast<std::size_t>(ax)].percent),
                11, "start");
    if (sol.n_axes() >= 2)
        canvas.text(width / 2.0, margin - 8,
                    strfmt("axis %d (%.1f%%)", axis_y,
                           inertia_summary(sol)[static_cast<std::size_t>(ay)].percent),
                    11, "middle");

    for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
        const double x = px(sol.row_coords(i, ax));
        const double y = sol.n_axes() >= 2 ? py(sol.row_coords(i, ay)) : height / 2.0;
        canvas.circle(x, y, 3.0, "#1f5fa8");
        canvas.text(x + 4, y - 4, sol.row_labels[static_cast<std::size_t>(i)], 9);
    }
    return canvas.finish();
}

namespace detail {

struct CurvePanelEntry {
    std::string label;
    std::vector<double> times_ms;
    std::vector<double> values;
};

inline std::string curve_panel_svg(const std::string& title, const std::vector<CurvePanelEntry>& entries,
                                   const std::vector<Extremum>& extrema,
                                   const std::vector<std::pair<std::string, TopoMap>>& insets,
                                   double shared_bound) {
    const double width = 960.0;
    const double plot_h = 360.0, margin = 48.0;
    const double inset_r = 52.0;
    const double inset_row_h = insets.empty() ? 0.0 : 2.0 * inset_r + 40.0;
    const double height = plot_h + inset_row_h + 2.0 * margin;
    svg::Canvas canvas(width, height);
    canvas.rect(0, 0, width, height, "#ffffff");
    canvas.text(margin, margin - 16, title, 13);

    double t_lo = 0.0, t_hi = 1.0, v_ext = 1e-12;
    bool first = true;
    for (const auto& e : entries) {
        for (double t : e.times_ms) {
            if (first) {
                t_lo = t_hi = t;
                first = false;
            }
            t_lo = std::min(t_lo, t);
            t_hi = std::max(t_hi, t);
        }
        for (double v : e.values) v_ext = std::max(v_ext, std::abs(v));
    }
    if (t_hi <= t_lo) t_hi = t_lo + 1.0;
    v_ext *= 1.1;
    auto px = [&](double t) { return margin + (t - t_lo) / (t_hi - t_lo) * (width - 2.0 * margin); };
    auto py = [&](double v) { return margin + plot_h / 2.0 - v / v_ext * plot_h / 2.0; };

    canvas.line(margin, py(0.0), width - margin, py(0.0), "#bbbbbb");
    canvas.line(margin, margin, margin, margin + plot_h, "#bbbbbb");
    canvas.text(width - margin, py(0.0) + 14, "time (ms)", 10, "end");

    static const char* palette[] = {"#1f5fa8", "#c23b22", "#2e8b57", "#8a5db8",
                                    "#c78a00", "#11828f", "#985b10", "#555555"};
    for (std::size_t e = 0; e < entries.size(); ++e) {
        std::vector<std::pair<double, double>> pts;
        for (std::size_t t = 0; t < entries[e].times_ms.size(); ++t)
            pts.emplace_back(px(entries[e].times_ms[t]), py(entries[e].values[t]));
        const std::string color = palette[e % 8];
        canvas.polyline(pts, color, 1.4);
        canvas.text(width - margin + 2, 14.0 + 12.0 * static_cast<double>(e % 24), entries[e].label, 9,
                    "start", color);
    }
    for (const auto& ex : extrema) {
        canvas.line(px(ex.time_ms), margin, px(ex.time_ms), margin + plot_h, "#dddddd");
        canvas.text(px(ex.time_ms), margin + plot_h + 14, strfmt("%.0f", ex.time_ms), 9, "middle");
    }

    double cx = margin + inset_r;
    const double cy = margin + plot_h + 30.0 + inset_r;
    for (const auto& [label, map] : insets) {
        svg::draw_topo(canvas, map, cx, cy, inset_r, shared_bound);
        canvas.text(cx, cy + inset_r + 14, label, 9, "middle");
        cx += 2.0 * inset_r + 24.0;
        if (cx + inset_r > width - margin) break;
    }
    return canvas.finish();
}

}  // namespace detail

/// Per-electrode eigenvector curves for one axis with topography insets at the
/// detected extrema.
inline std::string curves_panel_svg(const ElectrodeCurves& curves, const std::vector<Extremum>& extrema,
                                    const Montage& montage, std::size_t max_curves = 12) {
    // rank electrodes by total contribution so the panel stays readable
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t e = 0; e < curves.electrodes.size(); ++e)
        ranked.emplace_back(curves.ctr.row(static_cast<Eigen::Index>(e)).sum(), e);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<detail::CurvePanelEntry> entries;
    for (std::size_t i = 0; i < std::min(max_curves, ranked.size()); ++i) {
        const std::size_t e = ranked[i].second;
        detail::CurvePanelEntry entry;
        entry.label = curves.electrodes[e];
        entry.times_ms = curves.times_ms;
        for (std::size_t t = 0; t < curves.times_ms.size(); ++t)
            entry.values.push_back(
                curves.signed_profile(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)));
        entries.push_back(std::move(entry));
    }

    // shared color bound across the insets: the largest |profile| anywhere on
    // this axis
    double bound = 0.0;
    for (Eigen::Index e = 0; e < curves.signed_profile.rows(); ++e)
        bound = std::max(bound, curves.signed_profile.row(e).cwiseAbs().maxCoeff());

    std::vector<std::pair<std::string, TopoMap>> insets;
    for (const auto& ex : extrema) {
        auto t_it = std::find(curves.times_ms.begin(), curves.times_ms.end(), ex.time_ms);
        if (t_it == curves.times_ms.end()) continue;
        const auto t = static_cast<Eigen::Index>(t_it - curves.times_ms.begin());
        std::vector<double> values;
        for (Eigen::Index e = 0; e < curves.signed_profile.rows(); ++e)
            values.push_back(curves.signed_profile(e, t));
        insets.emplace_back(strfmt("%.0f ms", ex.time_ms),
                            topography(montage, curves.electrodes, values, 48));
    }
    return detail::curve_panel_svg(strfmt("axis %d eigenvector profiles", curves.axis), entries, extrema,
                                   insets, bound);
}

/// Axis coordinate curves of an electrodes-by-time solution; insets show the
/// per-electrode source values at the extrema instants.
inline std::string time_curves_svg(const TimeCurve& curve, const AnalysisMatrix& source,
                                   const std::vector<Extremum>& extrema, const Montage& montage,
                                   int n_axes = 3) {
    std::vector<detail::CurvePanelEntry> entries;
    const auto axes = std::min<Eigen::Index>(n_axes, curve.coords.cols());
    for (Eigen::Index a = 0; a < axes; ++a) {
        detail::CurvePanelEntry entry;
        entry.label = strfmt("axis %d", static_cast<int>(a) + 1);
        entry.times_ms = curve.times_ms;
        for (std::size_t t = 0; t < curve.times_ms.size(); ++t)
            entry.values.push_back(curve.coords(static_cast<Eigen::Index>(t), a));
        entries.push_back(std::move(entry));
    }

    double bound = 0.0;
    for (Eigen::Index i = 0; i < source.values.rows(); ++i)
        bound = std::max(bound, source.values.row(i).cwiseAbs().maxCoeff());

    std::vector<std::pair<std::string, TopoMap>> insets;
    for (const auto& ex : extrema) {
        Eigen::Index col = -1;
        for (std::size_t j = 0; j < source.col_labels.size(); ++j) {
            std::string lbl = source.col_labels[j];
            if (!lbl.empty() && (lbl.back() == '+' || lbl.back() == '-')) lbl.pop_back();
            if (parse_double(lbl, "time label") == ex.time_ms) {
                col = static_cast<Eigen::Index>(j);
                break;
            }
        }
        if (col < 0) continue;
        std::vector<double> values;
        for (Eigen::Index i = 0; i < source.values.rows(); ++i) values.push_back(source.values(i, col));
        insets.emplace_back(strfmt("%.0f ms", ex.time_ms),
                            topography(montage, source.row_labels, values, 48));
    }
    return detail::curve_panel_svg("axis coordinate time curves", entries, extrema, insets, bound);
}

}  // namespace corrdyn
