#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "corrdyn/ca.hpp"
#include "corrdyn/common.hpp"
#include "corrdyn/types.hpp"

namespace corrdyn {

namespace detail {

struct ElectrodeTimeLabel {
    std::string electrode;
    double time_ms = 0.0;
    int doubled = 0;  // +1 / -1 for doubled column pairs, 0 otherwise
};

/// Parses "<electrode>@<ms>" with an optional doubling suffix "+"/"-".
inline ElectrodeTimeLabel parse_electrode_time_label(std::string label) {
    ElectrodeTimeLabel out;
    if (!label.empty() && (label.back() == '+' || label.back() == '-')) {
        out.doubled = label.back() == '+' ? 1 : -1;
        label.pop_back();
    }
    const auto at = label.rfind('@');
    require(at != std::string::npos && at > 0 && at + 1 < label.size(),
            "expected electrode-time label '<electrode>@<ms>', got '" + label + "'");
    out.electrode = label.substr(0, at);
    out.time_ms = parse_double(label.substr(at + 1), "time in label '" + label + "'");
    return out;
}

inline double pearson_r_or_zero(const Vector& a, const Vector& b) {
    const double ma = a.mean(), mb = b.mean();
    const Vector da = a.array() - ma, db = b.array() - mb;
    const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    return denom > 0.0 ? da.dot(db) / denom : 0.0;
}

}  // namespace detail

/// One axis of a conditions-by-(electrode, time) solution regrouped into per
/// electrode time series: the signed eigenvector profile and the contribution
/// share of every cell.
struct ElectrodeCurves {
    int axis = 0;  // 1-based
    std::vector<std::string> electrodes;
    std::vector<double> times_ms;  // ascending bin starts
    Matrix signed_profile;         // electrodes x times, standard coordinate
    Matrix ctr;                    // electrodes x times, sums to the axis column share
};

inline ElectrodeCurves contribution_curves(const CaSolution& sol, int axis) {
    require(sol.layout == MatrixLayout::ConditionsByElectrodeTime,
            "contribution_curves: needs a conditions-by-electrode-time solution");
    const int a = sol.axis_index(axis);

    struct Cell {
        Eigen::Index col;
        int doubled;
    };
    std::vector<std::string> electrodes;
    std::map<std::string, Eigen::Index> elec_index;
    std::vector<double> times;
    std::map<double, Eigen::Index> time_index;
    std::vector<std::pair<detail::ElectrodeTimeLabel, Eigen::Index>> parsed;
    for (Eigen::Index j = 0; j < sol.n_cols(); ++j) {
        auto lbl = detail::parse_electrode_time_label(sol.col_labels[static_cast<std::size_t>(j)]);
        if (elec_index.emplace(lbl.electrode, static_cast<Eigen::Index>(electrodes.size())).second)
            electrodes.push_back(lbl.electrode);
        time_index.emplace(lbl.time_ms, 0);
        parsed.emplace_back(std::move(lbl), j);
    }
    {
        Eigen::Index t = 0;
        for (auto& [ms, idx] : time_index) {
            idx = t++;
            times.push_back(ms);
        }
    }
    const auto ne = static_cast<Eigen::Index>(electrodes.size());
    const auto nt = static_cast<Eigen::Index>(times.size());

    ElectrodeCurves out;
    out.axis = axis;
    out.electrodes = electrodes;
    out.times_ms = times;
    out.signed_profile = Matrix::Zero(ne, nt);
    out.ctr = Matrix::Zero(ne, nt);
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(ne, nt);
    for (const auto& [lbl, j] : parsed) {
        const Eigen::Index e = elec_index.at(lbl.electrode);
        const Eigen::Index t = time_index.at(lbl.time_ms);
        // doubled pairs recombine as (plus - minus) for the signed curve and
        // summed contributions
        out.signed_profile(e, t) += lbl.doubled < 0 ? -sol.col_standard(j, a) : sol.col_standard(j, a);
        out.ctr(e, t) += sol.col_ctr(j, a);
        seen(e, t) += 1;
    }
    const int expected = parsed.front().first.doubled == 0 ? 1 : 2;
    require((seen.array() == expected).all(),
            "contribution_curves: electrode-time labels do not form a complete grid");
    return out;
}

/// Per-bin contribution mass of one axis: how much of the axis each time slice
/// carries, summed over electrodes.
inline std::vector<double> axis_energy_over_time(const ElectrodeCurves& curves) {
    std::vector<double> out(curves.times_ms.size());
    for (Eigen::Index t = 0; t < curves.ctr.cols(); ++t) out[static_cast<std::size_t>(t)] = curves.ctr.col(t).sum();
    return out;
}

/// Column principal coordinates of an electrodes-by-time solution as time
/// series, one column per axis.
struct TimeCurve {
    std::vector<double> times_ms;  // ascending
    Matrix coords;                 // times x axes, principal
};

inline TimeCurve time_coordinate_curve(const CaSolution& sol) {
    require(sol.layout == MatrixLayout::ElectrodesByTime,
            "time_coordinate_curve: needs an electrodes-by-time solution");
    std::vector<std::pair<double, Eigen::Index>> order;
    for (Eigen::Index j = 0; j < sol.n_cols(); ++j) {
        std::string label = sol.col_labels[static_cast<std::size_t>(j)];
        require(!label.empty(), "time_coordinate_curve: empty column label");
        if (label.back() == '+' || label.back() == '-') label.pop_back();
        order.emplace_back(parse_double(label, "time label"), j);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    TimeCurve out;
    out.coords.resize(static_cast<Eigen::Index>(order.size()), sol.n_axes());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.times_ms.push_back(order[i].first);
        out.coords.row(static_cast<Eigen::Index>(i)) = sol.col_coords.row(order[i].second);
    }
    return out;
}

struct Extremum {
    double time_ms = 0.0;
    double value = 0.0;  // raw curve value at the detected bin
    bool is_max = true;
};

/// Local extrema of a curve after a centered moving-average smooth. A point
/// qualifies when the smoothed magnitude reaches prominence_frac of the
/// smoothed curve's peak magnitude; both polarities are reported, in time
/// order.
inline std::vector<Extremum> detect_extrema(const std::vector<double>& times_ms,
                                            const std::vector<double>& values, int smooth_bins = 3,
                                            double prominence_frac = 0.5) {
    require(times_ms.size() == values.size(), "detect_extrema: length mismatch");
    require(smooth_bins >= 1 && smooth_bins % 2 == 1, "detect_extrema: smooth_bins must be odd and >= 1");
    require(prominence_frac >= 0.0 && prominence_frac <= 1.0, "detect_extrema: prominence_frac in [0, 1]");
    const auto n = static_cast<long>(values.size());
    if (n < 3) return {};

    std::vector<double> smooth(static_cast<std::size_t>(n));
    const long half = smooth_bins / 2;
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0l, i - half), hi = std::min(n - 1, i + half);
        double acc = 0.0;
        for (long j = lo; j <= hi; ++j) acc += values[static_cast<std::size_t>(j)];
        smooth[static_cast<std::size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
    }
    double peak = 0.0;
    for (double v : smooth) peak = std::max(peak, std::abs(v));
    const double floor_mag = prominence_frac * peak;

    std::vector<Extremum> out;
    for (long i = 1; i + 1 < n; ++i) {
        const double prev = smooth[static_cast<std::size_t>(i - 1)];
        const double cur = smooth[static_cast<std::size_t>(i)];
        const double next = smooth[static_cast<std::size_t>(i + 1)];
        const bool is_max = cur >= prev && cur > next;
        const bool is_min = cur <= prev && cur < next;
        if (!is_max && !is_min) continue;
        if (std::abs(cur) < floor_mag) continue;
        out.push_back({times_ms[static_cast<std::size_t>(i)], values[static_cast<std::size_t>(i)], is_max});
    }
    return out;
}

/// Electrodes that dominate one axis, merged into groups of alike time
/// courses. Electrodes are ranked by total contribution, the top fraction is
/// kept, and each joins the first group whose seed curve it correlates with at
/// or above the threshold.
struct ElectrodeGroup {
    std::vector<std::string> electrodes;  // joining order; first is the seed
    std::vector<Eigen::Index> indices;    // rows into the source curves
    double total_ctr = 0.0;
};

inline std::vector<ElectrodeGroup> group_representative_electrodes(const ElectrodeCurves& curves,
                                                                   double top_fraction = 0.1,
                                                                   double corr_threshold = 0.8) {
    require(top_fraction > 0.0 && top_fraction <= 1.0, "group_representative_electrodes: top_fraction in (0, 1]");
    require(corr_threshold >= -1.0 && corr_threshold <= 1.0,
            "group_representative_electrodes: corr_threshold in [-1, 1]");
    const auto ne = static_cast<Eigen::Index>(curves.electrodes.size());
    require(ne > 0, "group_representative_electrodes: no electrodes");

    std::vector<std::pair<double, Eigen::Index>> ranked;
    for (Eigen::Index e = 0; e < ne; ++e) ranked.emplace_back(curves.ctr.row(e).sum(), e);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(ne))));

    std::vector<ElectrodeGroup> groups;
    std::vector<Vector> seed_curves;
    for (std::size_t i = 0; i < keep && i < ranked.size(); ++i) {
        const Eigen::Index e = ranked[i].second;
        const Vector curve = curves.signed_profile.row(e).transpose();
        bool joined = false;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (detail::pearson_r_or_zero(curve, seed_curves[g]) >= corr_threshold) {
                groups[g].electrodes.push_back(curves.electrodes[static_cast<std::size_t>(e)]);
                groups[g].indices.push_back(e);
                groups[g].total_ctr += ranked[i].first;
                joined = true;
                break;
            }
        }
        if (!joined) {
            ElectrodeGroup grp;
            grp.electrodes.push_back(curves.electrodes[static_cast<std::size_t>(e)]);
            grp.indices.push_back(e);
            grp.total_ctr = ranked[i].first;
            groups.push_back(std::move(grp));
            seed_curves.push_back(curve);
        }
    }
    return groups;
}

// ---- scalp topography ------------------------------------------------------

/// A head-disk interpolation of per-electrode values. Sites project by
/// azimuthal equidistant mapping (rho = theta / (pi/2), so the equator of the
/// sphere lands on the unit circle); values interpolate by inverse squared
/// distance and are exact at the sites.
struct TopoMap {
    std::vector<std::string> labels;
    std::vector<double> site_x, site_y;
    std::vector<double> site_values;
    double radius = 1.0;  // disk radius covering all sites
    double bound = 0.0;   // color scale bound, max |value| unless overridden
    int grid_n = 0;
    std::vector<double> grid;  // grid_n x grid_n row-major, NaN outside disk

    double value_at(double x, double y) const {
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t i = 0; i < site_values.size(); ++i) {
            const double dx = x - site_x[i], dy = y - site_y[i];
            const double d2 = dx * dx + dy * dy;
            if (d2 < 1e-24) return site_values[i];
            const double w = 1.0 / d2;
            wsum += w;
            vsum += w * site_values[i];
        }
        return vsum / wsum;
    }
};

inline TopoMap topography(const Montage& montage, const std::vector<std::string>& labels,
                          const std::vector<double>& values, int grid_n = 64) {
    require(labels.size() == values.size(), "topography: label/value length mismatch");
    require(!labels.empty(), "topography: no sites");
    require(grid_n >= 2, "topography: grid_n too small");

    TopoMap map;
    map.labels = labels;
    map.grid_n = grid_n;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(std::isfinite(values[i]), "topography: non-finite value for '" + labels[i] + "'");
        const MontageEntry& e = montage.find(labels[i]);
        const double norm = std::sqrt(e.x * e.x + e.y * e.y + e.z * e.z);
        const double theta = std::acos(std::clamp(e.z / norm, -1.0, 1.0));
        const double phi = std::atan2(e.y, e.x);
        const double rho = theta / (std::numbers::pi / 2.0);
        map.site_x.push_back(rho * std::cos(phi));
        map.site_y.push_back(rho * std::sin(phi));
        map.site_values.push_back(values[i]);
        map.radius = std::max(map.radius, rho);
        map.bound = std::max(map.bound, std::abs(values[i]));
    }

    map.grid.assign(static_cast<std::size_t>(grid_n) * static_cast<std::size_t>(grid_n),
                    std::numeric_limits<double>::quiet_NaN());
    for (int gy = 0; gy < grid_n; ++gy) {
        // top row is +y so the grid reads like the printed map
        const double y = map.radius * (1.0 - 2.0 * (gy + 0.5) / grid_n);
        for (int gx = 0; gx < grid_n; ++gx) {
            const double x = map.radius * (2.0 * (gx + 0.5) / grid_n - 1.0);
            if (x * x + y * y > map.radius * map.radius) continue;
            map.grid[static_cast<std::size_t>(gy) * static_cast<std::size_t>(grid_n) +
                     static_cast<std::size_t>(gx)] = map.value_at(x, y);
        }
    }
    return map;
}

}  // namespace corrdyn
