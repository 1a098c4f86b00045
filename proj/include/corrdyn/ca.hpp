#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "corrdyn/types.hpp"

namespace corrdyn {

enum class MatrixLayout { ConditionsByElectrodeTime, ElectrodesByTime };

inline const char* to_string(MatrixLayout l) {
    return l == MatrixLayout::ConditionsByElectrodeTime ? "conditions-by-electrode-time" : "electrodes-by-time";
}

inline MatrixLayout layout_from_string(const std::string& s) {
    if (s == "conditions-by-electrode-time") return MatrixLayout::ConditionsByElectrodeTime;
    if (s == "electrodes-by-time") return MatrixLayout::ElectrodesByTime;
    fail("unknown layout '" + s + "'");
}

enum class Encoding { None, GlobalShift, Doubling, Absolute };

inline const char* to_string(Encoding e) {
    switch (e) {
        case Encoding::None: return "none";
        case Encoding::GlobalShift: return "global-shift";
        case Encoding::Doubling: return "doubling";
        case Encoding::Absolute: return "absolute";
    }
    return "?";
}

inline Encoding encoding_from_string(const std::string& s) {
    if (s == "none") return Encoding::None;
    if (s == "global-shift") return Encoding::GlobalShift;
    if (s == "doubling") return Encoding::Doubling;
    if (s == "absolute") return Encoding::Absolute;
    fail("unknown encoding '" + s + "'");
}

/// Labeled matrix fed to correspondence analysis. Rows are analysis entities
/// (conditions or electrodes); columns are electrode-time cells "<label>@<ms>"
/// or time cells "<ms>".
struct AnalysisMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<AttrMap> row_attrs;  // empty, or one map per row
    Matrix values;
    MatrixLayout layout = MatrixLayout::ConditionsByElectrodeTime;
    TimeWindow window;
    double bin_ms = 0.0;
    Encoding encoding = Encoding::None;
    std::vector<std::string> dropped_rows;  // removed as all-zero during encoding
    std::vector<std::string> dropped_cols;

    void validate() const {
        require(static_cast<Eigen::Index>(row_labels.size()) == values.rows(), "AnalysisMatrix: row label count");
        require(static_cast<Eigen::Index>(col_labels.size()) == values.cols(), "AnalysisMatrix: col label count");
        require(row_attrs.empty() || row_attrs.size() == row_labels.size(), "AnalysisMatrix: row attr count");
    }
};

/// Nonnegative re-expression of a signed matrix, ahead of CA.
inline AnalysisMatrix encode_nonnegative(const AnalysisMatrix& m, Encoding strategy) {
    m.validate();
    require(m.values.allFinite(), "encode_nonnegative: non-finite values");
    require(strategy != Encoding::None, "encode_nonnegative: pick a strategy");
    AnalysisMatrix out = m;
    out.encoding = strategy;
    out.dropped_rows.clear();
    out.dropped_cols.clear();

    switch (strategy) {
        case Encoding::GlobalShift:
            out.values = m.values.array() - m.values.minCoeff();
            break;
        case Encoding::Absolute:
            out.values = m.values.cwiseAbs();
            break;
        case Encoding::Doubling: {
            out.values.resize(m.values.rows(), 2 * m.values.cols());
            out.col_labels.clear();
            for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
                const double lo = m.values.col(j).minCoeff();
                const double hi = m.values.col(j).maxCoeff();
                out.values.col(2 * j) = m.values.col(j).array() - lo;
                out.values.col(2 * j + 1) = hi - m.values.col(j).array();
                out.col_labels.push_back(m.col_labels[static_cast<std::size_t>(j)] + "+");
                out.col_labels.push_back(m.col_labels[static_cast<std::size_t>(j)] + "-");
            }
            break;
        }
        case Encoding::None: break;
    }

    // remove all-zero rows/columns, keeping a report
    std::vector<Eigen::Index> keep_rows, keep_cols;
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        if (out.values.row(i).cwiseAbs().sum() > 0.0)
            keep_rows.push_back(i);
        else
            out.dropped_rows.push_back(out.row_labels[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
        if (out.values.col(j).cwiseAbs().sum() > 0.0)
            keep_cols.push_back(j);
        else
            out.dropped_cols.push_back(out.col_labels[static_cast<std::size_t>(j)]);
    }
    require(!keep_rows.empty() && !keep_cols.empty(),
            "encode_nonnegative: matrix has zero total mass after encoding (constant input?)");
    if (keep_rows.size() != static_cast<std::size_t>(out.values.rows()) ||
        keep_cols.size() != static_cast<std::size_t>(out.values.cols())) {
        Matrix reduced(static_cast<Eigen::Index>(keep_rows.size()), static_cast<Eigen::Index>(keep_cols.size()));
        std::vector<std::string> rl, cl;
        std::vector<AttrMap> ra;
        for (std::size_t i = 0; i < keep_rows.size(); ++i) {
            for (std::size_t j = 0; j < keep_cols.size(); ++j)
                reduced(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    out.values(keep_rows[i], keep_cols[j]);
            rl.push_back(out.row_labels[static_cast<std::size_t>(keep_rows[i])]);
            if (!out.row_attrs.empty()) ra.push_back(out.row_attrs[static_cast<std::size_t>(keep_rows[i])]);
        }
        for (auto j : keep_cols) cl.push_back(out.col_labels[static_cast<std::size_t>(j)]);
        out.values = std::move(reduced);
        out.row_labels = std::move(rl);
        out.col_labels = std::move(cl);
        out.row_attrs = std::move(ra);
    }
    return out;
}

/// Full correspondence-analysis decomposition of a nonnegative matrix.
///
/// With P = X/N, row masses r, column masses c, the standardized residual
/// matrix S = Dr^-1/2 (P - r c^T) Dc^-1/2 is decomposed as S = U Sigma V^T.
/// Principal coordinates are F = Dr^-1/2 U Sigma and G = Dc^-1/2 V Sigma;
/// standard coordinates drop the Sigma factor. Axis k carries inertia
/// sigma_k^2; the axis total over the full rank equals chi^2/N.
struct CaSolution {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<AttrMap> row_attrs;
    Vector row_masses;
    Vector col_masses;
    Vector singular_values;  // retained axes, non-increasing
    double total_inertia = 0.0;
    Matrix row_coords;     // principal, rows x axes
    Matrix col_coords;     // principal, cols x axes
    Matrix row_standard;   // standard coordinates
    Matrix col_standard;   // eigenvector profiles
    Matrix row_ctr;        // contributions, sum to 1 per axis
    Matrix col_ctr;
    Matrix row_cos2;       // squared cosines vs full chi-square distance
    Matrix col_cos2;
    MatrixLayout layout = MatrixLayout::ConditionsByElectrodeTime;
    TimeWindow window;
    double bin_ms = 0.0;
    Encoding encoding = Encoding::None;
    std::map<std::string, std::string> provenance;
    int requested_axes = 0;
    bool rank_deficient = false;
    std::vector<std::string> dropped_rows;
    std::vector<std::string> dropped_cols;

    int n_axes() const { return static_cast<int>(singular_values.size()); }
    double inertia(int axis) const { return singular_values[axis] * singular_values[axis]; }
    Eigen::Index n_rows() const { return static_cast<Eigen::Index>(row_labels.size()); }
    Eigen::Index n_cols() const { return static_cast<Eigen::Index>(col_labels.size()); }

    int axis_index(int axis_1based) const {
        require(axis_1based >= 1 && axis_1based <= n_axes(), strfmt("axis %d not in [1, %d]", axis_1based, n_axes()));
        return axis_1based - 1;
    }
};

inline CaSolution correspondence_analysis(const AnalysisMatrix& input, int n_axes = 0) {
    input.validate();
    require(input.values.allFinite(), "correspondence_analysis: non-finite values");
    require(input.values.minCoeff() >= 0.0,
            "correspondence_analysis: matrix has negative cells; encode_nonnegative first");

    // Zero rows/columns carry no mass; drop them with a report.
    AnalysisMatrix m = input;
    {
        bool any_zero = false;
        for (Eigen::Index i = 0; i < m.values.rows() && !any_zero; ++i)
            if (m.values.row(i).sum() == 0.0) any_zero = true;
        for (Eigen::Index j = 0; j < m.values.cols() && !any_zero; ++j)
            if (m.values.col(j).sum() == 0.0) any_zero = true;
        if (any_zero) {
            // Absolute on a nonnegative matrix is the identity, so this only drops.
            m = encode_nonnegative(m, Encoding::Absolute);
            m.encoding = input.encoding;
        }
    }

    const Eigen::Index I = m.values.rows();
    const Eigen::Index J = m.values.cols();
    const double total = m.values.sum();
    require(total > 0.0, "correspondence_analysis: zero total mass");
    const int max_axes = static_cast<int>(std::min(I, J)) - 1;
    require(max_axes >= 0, "correspondence_analysis: degenerate matrix");
    int requested = n_axes > 0 ? n_axes : std::min(max_axes, 10);
    require(n_axes <= 0 || n_axes <= max_axes,
            strfmt("correspondence_analysis: n_axes %d exceeds min(rows, cols) - 1 = %d", n_axes, max_axes));

    const Matrix P = m.values / total;
    const Vector r = P.rowwise().sum();
    const Vector c = P.colwise().sum();
    const Vector r_isqrt = r.cwiseSqrt().cwiseInverse();
    const Vector c_isqrt = c.cwiseSqrt().cwiseInverse();

    Matrix S = P - r * c.transpose();
    S = r_isqrt.asDiagonal() * S * c_isqrt.asDiagonal();

    CaSolution sol;
    sol.row_labels = m.row_labels;
    sol.col_labels = m.col_labels;
    sol.row_attrs = m.row_attrs;
    sol.row_masses = r;
    sol.col_masses = c;
    sol.total_inertia = S.squaredNorm();
    sol.layout = m.layout;
    sol.window = m.window;
    sol.bin_ms = m.bin_ms;
    sol.encoding = m.encoding;
    sol.requested_axes = requested;
    sol.dropped_rows = m.dropped_rows;
    sol.dropped_cols = m.dropped_cols;

    // Eigendecomposition of the smaller Gram matrix; deterministic for a fixed
    // input, ties left in the solver's (stable) order.
    Matrix U, V;
    Vector lambda;
    if (I <= J) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(S * S.transpose());
        require(es.info() == Eigen::Success, "correspondence_analysis: eigensolver failed");
        lambda = es.eigenvalues().reverse();
        U = es.eigenvectors().rowwise().reverse();
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(S.transpose() * S);
        require(es.info() == Eigen::Success, "correspondence_analysis: eigensolver failed");
        lambda = es.eigenvalues().reverse();
        V = es.eigenvectors().rowwise().reverse();
    }
    lambda = lambda.cwiseMax(0.0);

    const double sigma_max = std::sqrt(lambda.maxCoeff());
    const double tol = sigma_max * static_cast<double>(std::max(I, J)) * std::numeric_limits<double>::epsilon() *
                       16.0;
    int rank = 0;
    while (rank < static_cast<int>(lambda.size()) && rank < max_axes && std::sqrt(lambda[rank]) > tol) ++rank;
    const int k = std::min(requested, rank);
    sol.rank_deficient = k < requested;

    sol.singular_values = lambda.head(k).cwiseSqrt();
    if (I <= J) {
        U = U.leftCols(k).eval();
        V.resize(J, k);
        for (int a = 0; a < k; ++a) V.col(a) = S.transpose() * U.col(a) / sol.singular_values[a];
    } else {
        V = V.leftCols(k).eval();
        U.resize(I, k);
        for (int a = 0; a < k; ++a) U.col(a) = S * V.col(a) / sol.singular_values[a];
    }

    sol.row_standard = r_isqrt.asDiagonal() * U;
    sol.col_standard = c_isqrt.asDiagonal() * V;

    // Deterministic orientation: the column with the largest |standard
    // coordinate| points positive; first such column wins ties.
    for (int a = 0; a < k; ++a) {
        Eigen::Index j_best = 0;
        double best = -1.0;
        for (Eigen::Index j = 0; j < J; ++j) {
            const double v = std::abs(sol.col_standard(j, a));
            if (v > best) {
                best = v;
                j_best = j;
            }
        }
        if (sol.col_standard(j_best, a) < 0.0) {
            sol.col_standard.col(a) = -sol.col_standard.col(a);
            sol.row_standard.col(a) = -sol.row_standard.col(a);
        }
    }

    sol.row_coords = sol.row_standard * sol.singular_values.asDiagonal();
    sol.col_coords = sol.col_standard * sol.singular_values.asDiagonal();

    sol.row_ctr.resize(I, k);
    sol.col_ctr.resize(J, k);
    for (int a = 0; a < k; ++a) {
        const double l = sol.singular_values[a] * sol.singular_values[a];
        sol.row_ctr.col(a) = r.cwiseProduct(sol.row_coords.col(a).cwiseAbs2()) / l;
        sol.col_ctr.col(a) = c.cwiseProduct(sol.col_coords.col(a).cwiseAbs2()) / l;
    }

    // chi-square distance of each profile to the centroid, over the full space
    Vector row_d2 = Vector::Zero(I), col_d2 = Vector::Zero(J);
    for (Eigen::Index i = 0; i < I; ++i)
        for (Eigen::Index j = 0; j < J; ++j) {
            const double dev = P(i, j) / r[i] - c[j];
            row_d2[i] += dev * dev / c[j];
        }
    for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index i = 0; i < I; ++i) {
            const double dev = P(i, j) / c[j] - r[i];
            col_d2[j] += dev * dev / r[i];
        }
    sol.row_cos2.resize(I, k);
    sol.col_cos2.resize(J, k);
    for (int a = 0; a < k; ++a) {
        for (Eigen::Index i = 0; i < I; ++i)
            sol.row_cos2(i, a) = row_d2[i] > 0.0 ? sol.row_coords(i, a) * sol.row_coords(i, a) / row_d2[i] : 0.0;
        for (Eigen::Index j = 0; j < J; ++j)
            sol.col_cos2(j, a) = col_d2[j] > 0.0 ? sol.col_coords(j, a) * sol.col_coords(j, a) / col_d2[j] : 0.0;
    }
    return sol;
}

/// Transition-formula placement of extra rows into an existing map:
/// f = (row profile) . col_standard. Active rows reproduce their principal
/// coordinates; the column-mass profile lands at the origin.
inline Matrix project_supplementary_rows(const CaSolution& sol, const Matrix& rows) {
    require(rows.cols() == sol.n_cols(),
            strfmt("project_supplementary_rows: %ld columns, solution has %ld", static_cast<long>(rows.cols()),
                   static_cast<long>(sol.n_cols())));
    require(rows.allFinite(), "project_supplementary_rows: non-finite values");
    Matrix coords(rows.rows(), sol.n_axes());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const double total = rows.row(i).sum();
        require(total > 0.0, strfmt("project_supplementary_rows: row %ld has non-positive mass",
                                    static_cast<long>(i)));
        coords.row(i) = (rows.row(i) / total) * sol.col_standard;
    }
    return coords;
}

inline Matrix project_supplementary_rows(const CaSolution& sol, const AnalysisMatrix& rows) {
    require(rows.col_labels == sol.col_labels,
            "project_supplementary_rows: column labels do not match the fitted matrix");
    return project_supplementary_rows(sol, rows.values);
}

struct AxisInertia {
    int axis = 0;  // 1-based
    double lambda = 0.0;
    double percent = 0.0;
    double cumulative_percent = 0.0;
};

inline std::vector<AxisInertia> inertia_summary(const CaSolution& sol) {
    std::vector<AxisInertia> out;
    double cum = 0.0;
    for (int a = 0; a < sol.n_axes(); ++a) {
        AxisInertia row;
        row.axis = a + 1;
        row.lambda = sol.inertia(a);
        row.percent = sol.total_inertia > 0.0 ? 100.0 * row.lambda / sol.total_inertia : 0.0;
        cum += row.percent;
        row.cumulative_percent = cum;
        out.push_back(row);
    }
    return out;
}

// ---- JSON serialization ----------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    const auto n_rows = static_cast<Eigen::Index>(j.size());
    Matrix m(n_rows, n_rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0);
    for (Eigen::Index i = 0; i < n_rows; ++i)
        for (Eigen::Index col = 0; col < m.cols(); ++col) m(i, col) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)].get<double>();
    return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::json solution_to_json(const CaSolution& sol) {
    nlohmann::json j;
    j["format"] = "corrdyn-ca";
    j["version"] = 1;
    j["layout"] = to_string(sol.layout);
    j["encoding"] = to_string(sol.encoding);
    j["window_ms"] = {sol.window.start_ms, sol.window.end_ms};
    j["bin_ms"] = sol.bin_ms;
    j["row_labels"] = sol.row_labels;
    j["col_labels"] = sol.col_labels;
    if (!sol.row_attrs.empty()) j["row_attrs"] = sol.row_attrs;
    j["row_masses"] = detail::vector_to_json(sol.row_masses);
    j["col_masses"] = detail::vector_to_json(sol.col_masses);
    j["singular_values"] = detail::vector_to_json(sol.singular_values);
    j["total_inertia"] = sol.total_inertia;
    j["row_coords"] = detail::matrix_to_json(sol.row_coords);
    j["col_coords"] = detail::matrix_to_json(sol.col_coords);
    j["row_standard"] = detail::matrix_to_json(sol.row_standard);
    j["col_standard"] = detail::matrix_to_json(sol.col_standard);
    j["row_ctr"] = detail::matrix_to_json(sol.row_ctr);
    j["col_ctr"] = detail::matrix_to_json(sol.col_ctr);
    j["row_cos2"] = detail::matrix_to_json(sol.row_cos2);
    j["col_cos2"] = detail::matrix_to_json(sol.col_cos2);
    j["requested_axes"] = sol.requested_axes;
    j["rank_deficient"] = sol.rank_deficient;
    j["dropped_rows"] = sol.dropped_rows;
    j["dropped_cols"] = sol.dropped_cols;
    j["provenance"] = sol.provenance;
    return j;
}

inline CaSolution solution_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "corrdyn-ca", "not a corrdyn-ca document");
    CaSolution sol;
    sol.layout = layout_from_string(j.at("layout").get<std::string>());
    sol.encoding = encoding_from_string(j.at("encoding").get<std::string>());
    sol.window = TimeWindow(j.at("window_ms")[0].get<double>(), j.at("window_ms")[1].get<double>());
    sol.bin_ms = j.at("bin_ms").get<double>();
    sol.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    sol.col_labels = j.at("col_labels").get<std::vector<std::string>>();
    if (j.contains("row_attrs")) sol.row_attrs = j.at("row_attrs").get<std::vector<AttrMap>>();
    sol.row_masses = detail::vector_from_json(j.at("row_masses"));
    sol.col_masses = detail::vector_from_json(j.at("col_masses"));
    sol.singular_values = detail::vector_from_json(j.at("singular_values"));
    sol.total_inertia = j.at("total_inertia").get<double>();
    sol.row_coords = detail::matrix_from_json(j.at("row_coords"));
    sol.col_coords = detail::matrix_from_json(j.at("col_coords"));
    sol.row_standard = detail::matrix_from_json(j.at("row_standard"));
    sol.col_standard = detail::matrix_from_json(j.at("col_standard"));
    sol.row_ctr = detail::matrix_from_json(j.at("row_ctr"));
    sol.col_ctr = detail::matrix_from_json(j.at("col_ctr"));
    sol.row_cos2 = detail::matrix_from_json(j.at("row_cos2"));
    sol.col_cos2 = detail::matrix_from_json(j.at("col_cos2"));
    sol.requested_axes = j.value("requested_axes", sol.n_axes());
    sol.rank_deficient = j.value("rank_deficient", false);
    sol.dropped_rows = j.value("dropped_rows", std::vector<std::string>{});
    sol.dropped_cols = j.value("dropped_cols", std::vector<std::string>{});
    if (j.contains("provenance"))
        sol.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    return sol;
}

inline void save_solution(const std::filesystem::path& path, const CaSolution& sol) {
    std::ofstream out(path);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    out << solution_to_json(sol).dump(1) << '\n';
    require(out.good(), "write failed for '" + path.string() + "'");
}

inline CaSolution load_solution(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open solution '" + path.string() + "'");
    nlohmann::json j;
    in >> j;
    return solution_from_json(j);
}

}  // namespace corrdyn
