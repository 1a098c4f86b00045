#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrdyn/ca.hpp"
#include "corrdyn/common.hpp"
#include "corrdyn/types.hpp"

namespace corrdyn {

namespace detail {

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// modified Lentz evaluation of the continued fraction behind I_x(a, b)
inline double incomplete_beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 1000; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    fail("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    require(a > 0.0 && b > 0.0, "incomplete_beta: shape parameters must be positive");
    require(x >= 0.0 && x <= 1.0, "incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_bt = a * std::log(x) + b * std::log1p(-x) - detail::log_beta(a, b);
    const double bt = std::exp(log_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::incomplete_beta_cf(a, b, x) / a;
    return 1.0 - bt * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// Upper tail of Student's t with nu degrees of freedom, doubled for a
/// two-sided p.
inline double t_two_sided_p(double t, double nu) {
    require(nu > 0.0, "t_two_sided_p: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

/// Upper-tail p of the F distribution.
inline double f_upper_p(double f, double d1, double d2) {
    require(d1 > 0.0 && d2 > 0.0, "f_upper_p: df must be positive");
    if (!std::isfinite(f)) return 0.0;
    if (f <= 0.0) return 1.0;
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

struct PearsonResult {
    double r = 0.0;
    double t = 0.0;
    long df = 0;
    double p = 1.0;
    long n = 0;
};

inline PearsonResult pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "pearson_correlation: length mismatch");
    const long n = static_cast<long>(x.size());
    require(n >= 3, "pearson_correlation: need at least 3 pairs");
    double mx = 0.0, my = 0.0;
    for (long i = 0; i < n; ++i) {
        mx += x[static_cast<std::size_t>(i)];
        my += y[static_cast<std::size_t>(i)];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (long i = 0; i < n; ++i) {
        const double dx = x[static_cast<std::size_t>(i)] - mx;
        const double dy = y[static_cast<std::size_t>(i)] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    require(sxx > 0.0 && syy > 0.0, "pearson_correlation: constant input");
    PearsonResult res;
    res.n = n;
    res.df = n - 2;
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double denom = 1.0 - res.r * res.r;
    if (denom <= 0.0) {
        res.t = std::numeric_limits<double>::infinity();
        res.p = 0.0;
        return res;
    }
    res.t = res.r * std::sqrt(static_cast<double>(res.df) / denom);
    res.p = t_two_sided_p(res.t, static_cast<double>(res.df));
    return res;
}

struct SignTestResult {
    long n_positive = 0;
    long n_negative = 0;
    long n_zero = 0;  // dropped from the test
    double p = 1.0;   // exact two-sided binomial
};

/// Exact two-sided sign test on paired differences; zero differences drop out.
inline SignTestResult sign_test(const std::vector<double>& diffs) {
    SignTestResult res;
    for (double d : diffs) {
        require(std::isfinite(d), "sign_test: non-finite difference");
        if (d > 0.0)
            ++res.n_positive;
        else if (d < 0.0)
            ++res.n_negative;
        else
            ++res.n_zero;
    }
    const long n = res.n_positive + res.n_negative;
    require(n >= 1, "sign_test: all differences are zero");
    const long k = std::min(res.n_positive, res.n_negative);
    // P(X <= k) under Binomial(n, 1/2): the binomial coefficients stay exactly
    // representable well past any realistic subject count.
    double coeff = 1.0, tail = 0.0;
    for (long i = 0; i <= k; ++i) {
        if (i > 0) coeff = coeff * static_cast<double>(n - i + 1) / static_cast<double>(i);
        tail += coeff;
    }
    res.p = std::min(1.0, 2.0 * std::ldexp(tail, static_cast<int>(-n)));
    return res;
}

inline SignTestResult sign_test(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "sign_test: length mismatch");
    std::vector<double> diffs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diffs[i] = x[i] - y[i];
    return sign_test(diffs);
}

struct AnovaResult {
    double f = 0.0;
    long df_between = 0;
    long df_within = 0;
    double p = 1.0;
    double ss_between = 0.0;
    double ss_within = 0.0;
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    require(groups.size() >= 2, "anova_oneway: need at least 2 groups");
    long total_n = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        require(!g.empty(), "anova_oneway: empty group");
        for (double v : g) {
            require(std::isfinite(v), "anova_oneway: non-finite value");
            grand_sum += v;
        }
        total_n += static_cast<long>(g.size());
    }
    const double grand_mean = grand_sum / static_cast<double>(total_n);
    AnovaResult res;
    res.df_between = static_cast<long>(groups.size()) - 1;
    res.df_within = total_n - static_cast<long>(groups.size());
    require(res.df_within >= 1, "anova_oneway: no within-group degrees of freedom");
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= static_cast<double>(g.size());
        const double dev = mean - grand_mean;
        res.ss_between += static_cast<double>(g.size()) * dev * dev;
        for (double v : g) res.ss_within += (v - mean) * (v - mean);
    }
    const double ms_between = res.ss_between / static_cast<double>(res.df_between);
    const double ms_within = res.ss_within / static_cast<double>(res.df_within);
    if (ms_within == 0.0) {
        res.f = ms_between == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        res.p = ms_between == 0.0 ? 1.0 : 0.0;
        return res;
    }
    res.f = ms_between / ms_within;
    res.p = f_upper_p(res.f, static_cast<double>(res.df_between), static_cast<double>(res.df_within));
    return res;
}

// ---- cross-analysis axis comparison ----------------------------------------

struct CosineTable {
    std::vector<int> axes_a;  // 1-based axis numbers
    std::vector<int> axes_b;
    Matrix values;  // |axes_a| x |axes_b|
    std::size_t n_shared_cols = 0;
    std::string name_a;
    std::string name_b;
};

namespace detail {

/// Column-side axis vector weighted by the solution's own column masses,
/// restricted to the given column indices. With all columns kept this is the
/// right singular vector, so axes of one solution are orthonormal.
inline Vector weighted_axis(const CaSolution& sol, int axis0, const std::vector<Eigen::Index>& cols) {
    Vector v(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
        v[static_cast<Eigen::Index>(i)] =
            std::sqrt(sol.col_masses[cols[i]]) * sol.col_standard(cols[i], axis0);
    return v;
}

}  // namespace detail

/// Cosines between axes of two solutions, computed over the column labels the
/// two analyses share. Symmetric, and the self comparison of a solution gives
/// the identity.
inline CosineTable cosine_table(const CaSolution& a, const CaSolution& b, std::vector<int> axes_a = {},
                                std::vector<int> axes_b = {}) {
    if (axes_a.empty())
        for (int k = 1; k <= a.n_axes(); ++k) axes_a.push_back(k);
    if (axes_b.empty())
        for (int k = 1; k <= b.n_axes(); ++k) axes_b.push_back(k);

    std::unordered_map<std::string, Eigen::Index> b_index;
    for (std::size_t j = 0; j < b.col_labels.size(); ++j)
        b_index.emplace(b.col_labels[j], static_cast<Eigen::Index>(j));
    std::vector<Eigen::Index> cols_a, cols_b;
    for (std::size_t j = 0; j < a.col_labels.size(); ++j) {
        auto it = b_index.find(a.col_labels[j]);
        if (it != b_index.end()) {
            cols_a.push_back(static_cast<Eigen::Index>(j));
            cols_b.push_back(it->second);
        }
    }
    require(!cols_a.empty(), "cosine_table: no shared column labels between the two solutions");

    CosineTable table;
    table.axes_a = axes_a;
    table.axes_b = axes_b;
    table.n_shared_cols = cols_a.size();
    table.values.resize(static_cast<Eigen::Index>(axes_a.size()), static_cast<Eigen::Index>(axes_b.size()));

    std::vector<Vector> va, vb;
    std::vector<double> na, nb;
    for (int ax : axes_a) {
        va.push_back(detail::weighted_axis(a, a.axis_index(ax), cols_a));
        na.push_back(va.back().norm());
    }
    for (int ax : axes_b) {
        vb.push_back(detail::weighted_axis(b, b.axis_index(ax), cols_b));
        nb.push_back(vb.back().norm());
    }
    for (std::size_t i = 0; i < va.size(); ++i)
        for (std::size_t j = 0; j < vb.size(); ++j) {
            const double denom = na[i] * nb[j];
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                denom > 0.0 ? va[i].dot(vb[j]) / denom : 0.0;
        }
    return table;
}

}  // namespace corrdyn
