#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrdyn/ca.hpp"
#include "corrdyn/common.hpp"
#include "corrdyn/preprocess.hpp"
#include "corrdyn/profiles.hpp"
#include "corrdyn/types.hpp"

namespace corrdyn {

// ---- deterministic randomness ----------------------------------------------
//
// All generation flows from one root seed through splitmix64-derived stream
// seeds, and gaussians come from an explicit Box-Muller transform, so outputs
// are bitwise identical across platforms and thread counts.

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Stream seed for a named substream of a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
    std::uint64_t s = root ^ (0x6A09E667F3BCC909ull + salt * 0x9E3779B97F4A7C15ull);
    std::uint64_t a = splitmix64(s);
    return a ^ splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return derive_seed(root, fnv1a64(name) + index * 0x100000001B3ull);
}

/// Unit gaussians from mt19937_64 + Box-Muller with a cached second draw.
class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)

    double operator()() {
        if (have_) {
            have_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        have_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::mt19937_64 gen_;
    bool have_ = false;
    double cached_ = 0.0;
};

/// Voss-McCartney pink noise: one always-new gaussian plus rows refreshed at
/// octave-spaced rates, scaled to approximately unit variance.
class PinkNoise {
  public:
    explicit PinkNoise(std::uint64_t seed, int n_rows = 12) : white_(seed), n_rows_(n_rows) {
        require(n_rows >= 1 && n_rows <= 32, "PinkNoise: rows out of range");
        for (int i = 0; i < n_rows_; ++i) rows_[static_cast<std::size_t>(i)] = white_();
        scale_ = 1.0 / std::sqrt(static_cast<double>(n_rows_) + 1.0);
    }

    double operator()() {
        const std::uint64_t c = ++counter_;
        const int row = std::countr_zero(c);
        if (row < n_rows_) rows_[static_cast<std::size_t>(row)] = white_();
        double acc = white_();
        for (int i = 0; i < n_rows_; ++i) acc += rows_[static_cast<std::size_t>(i)];
        return acc * scale_;
    }

  private:
    GaussianStream white_;
    int n_rows_;
    std::array<double, 32> rows_{};
    std::uint64_t counter_ = 0;
    double scale_ = 1.0;
};

}  // namespace rng

/// White noise with an optional 1/f-colored share of the variance, added in
/// place with independent per-channel streams.
inline void add_noise(Matrix& data, double sigma, double pink_fraction, std::uint64_t seed) {
    require(sigma >= 0.0, "add_noise: sigma must be nonnegative");
    require(pink_fraction >= 0.0 && pink_fraction <= 1.0, "add_noise: pink_fraction in [0, 1]");
    if (sigma == 0.0) return;
    const double white_scale = std::sqrt(1.0 - pink_fraction);
    const double pink_scale = std::sqrt(pink_fraction);
    for (Eigen::Index ch = 0; ch < data.rows(); ++ch) {
        rng::GaussianStream white(rng::derive_seed(seed, "noise-white", static_cast<std::uint64_t>(ch)));
        rng::PinkNoise pink(rng::derive_seed(seed, "noise-pink", static_cast<std::uint64_t>(ch)));
        if (pink_scale == 0.0) {
            for (Eigen::Index s = 0; s < data.cols(); ++s) data(ch, s) += sigma * white();
        } else {
            for (Eigen::Index s = 0; s < data.cols(); ++s)
                data(ch, s) += sigma * (white_scale * white() + pink_scale * pink());
        }
    }
}

// ---- montage ---------------------------------------------------------------

/// Golden-angle spiral of n sites over the spherical cap within 115 degrees of
/// the vertex, equal-area spaced, outermost `peripheral` sites flagged.
inline Montage montage_golden(int n, int peripheral) {
    require(n >= 1 && peripheral >= 0 && peripheral < n, "montage_golden: bad counts");
    const double theta_max = 115.0 * std::numbers::pi / 180.0;
    const double cap = 1.0 - std::cos(theta_max);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    Montage m;
    for (int i = 0; i < n; ++i) {
        const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double cos_theta = 1.0 - cap * frac;
        const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
        const double phi = static_cast<double>(i) * golden;
        MontageEntry e;
        e.label = "E" + std::to_string(i + 1);
        e.x = sin_theta * std::cos(phi);
        e.y = sin_theta * std::sin(phi);
        e.z = cos_theta;
        e.peripheral = i >= n - peripheral;
        m.entries.push_back(e);
    }
    m.validate();
    return m;
}

/// The stock 128-site layout; the 26 outermost sites are peripheral, leaving
/// 102 scalp sites for analysis.
inline Montage default_montage_128() { return montage_golden(128, 26); }

// ---- planted components ----------------------------------------------------

/// One rank-one condition x electrode x time pattern with known loadings.
struct PlantedComponent {
    std::string name;
    Vector loadings;     // per condition, mean 0 so the component is a contrast
    Vector spatial;      // per electrode, unit norm
    Vector temporal;     // per sample of the window, unit norm
    double weight = 1.0;  // variance weight; amplitude scales with sqrt(weight)
};

struct GroundTruth {
    std::vector<PlantedComponent> components;
    double noise_sigma_uv = 0.0;
    double pink_fraction = 0.0;
    std::uint64_t seed = 1;
    bool orthogonal = true;  // declared pairwise orthogonality of outer products
    std::vector<std::string> condition_labels;
    std::vector<AttrMap> condition_attrs;  // empty or one per condition
    std::vector<std::string> electrode_labels;
    TimeWindow window{0.0, 1.0};
    double fs = 1000.0;

    Eigen::Index n_samples() const {
        return static_cast<Eigen::Index>(llround(window.length_ms() * fs / 1000.0));
    }

    void validate() const {
        const auto nc = static_cast<Eigen::Index>(condition_labels.size());
        const auto ne = static_cast<Eigen::Index>(electrode_labels.size());
        require(nc >= 2 && ne >= 1, "GroundTruth: need >= 2 conditions and >= 1 electrode");
        require(condition_attrs.empty() || condition_attrs.size() == condition_labels.size(),
                "GroundTruth: condition attr count");
        require(noise_sigma_uv >= 0.0, "GroundTruth: negative noise sigma");
        const Eigen::Index ns = n_samples();
        require(ns >= 1, "GroundTruth: empty window");
        for (const auto& comp : components) {
            require(comp.loadings.size() == nc, "GroundTruth: loading length != condition count");
            require(comp.spatial.size() == ne, "GroundTruth: spatial length != electrode count");
            require(comp.temporal.size() == ns, "GroundTruth: temporal length != window samples");
            require(std::abs(comp.spatial.norm() - 1.0) < 1e-9, "GroundTruth: spatial pattern not unit norm");
            require(std::abs(comp.temporal.norm() - 1.0) < 1e-9, "GroundTruth: temporal waveform not unit norm");
            require(comp.weight > 0.0, "GroundTruth: nonpositive weight");
        }
        if (orthogonal) {
            for (std::size_t a = 0; a < components.size(); ++a)
                for (std::size_t b = a + 1; b < components.size(); ++b) {
                    const double ip = components[a].spatial.dot(components[b].spatial) *
                                      components[a].temporal.dot(components[b].temporal);
                    require(std::abs(ip) <= 1e-9,
                            "GroundTruth: components declared orthogonal but outer products are not");
                }
        }
    }
};

namespace detail {

/// Columns of gaussian draws, optionally centered, then Gram-Schmidt
/// orthonormalized. Centering first keeps every orthonormal combination
/// centered too.
inline Matrix orthonormal_columns(Eigen::Index n, int k, bool center, rng::GaussianStream& g) {
    require(k >= 1 && static_cast<Eigen::Index>(k) < n, "orthonormal_columns: need k < n");
    Matrix m(n, k);
    for (int j = 0; j < k; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) m(i, j) = g();
        if (center) m.col(j).array() -= m.col(j).mean();
        for (int prev = 0; prev < j; ++prev) m.col(j) -= m.col(prev).dot(m.col(j)) * m.col(prev);
        const double norm = m.col(j).norm();
        require(norm > 1e-9, "orthonormal_columns: degenerate draw");
        m.col(j) /= norm;
    }
    return m;
}

}  // namespace detail

/// Random orthogonal truth: centered orthonormal loadings, orthonormal spatial
/// patterns and temporal waveforms, with the given variance weights.
inline GroundTruth random_ground_truth(int n_conditions, int n_electrodes, TimeWindow window, double fs,
                                       const std::vector<double>& weights, double noise_sigma_uv,
                                       std::uint64_t seed) {
    GroundTruth truth;
    truth.noise_sigma_uv = noise_sigma_uv;
    truth.seed = seed;
    truth.window = window;
    truth.fs = fs;
    for (int i = 0; i < n_conditions; ++i) truth.condition_labels.push_back("cond" + std::to_string(i + 1));
    for (int i = 0; i < n_electrodes; ++i) truth.electrode_labels.push_back("E" + std::to_string(i + 1));
    const Eigen::Index ns = truth.n_samples();
    const int k = static_cast<int>(weights.size());
    rng::GaussianStream g(rng::derive_seed(seed, "truth"));
    const Matrix loadings = detail::orthonormal_columns(n_conditions, k, true, g);
    const Matrix spatial = detail::orthonormal_columns(n_electrodes, k, false, g);
    const Matrix temporal = detail::orthonormal_columns(ns, k, false, g);
    for (int c = 0; c < k; ++c) {
        PlantedComponent comp;
        comp.name = "plant" + std::to_string(c + 1);
        comp.loadings = loadings.col(c);
        comp.spatial = spatial.col(c);
        comp.temporal = temporal.col(c);
        comp.weight = weights[static_cast<std::size_t>(c)];
        truth.components.push_back(std::move(comp));
    }
    truth.validate();
    return truth;
}

/// Per-condition ERPs built from the truth:
/// data(condition) = sum_k sqrt(weight_k) loading_k(condition) spatial_k (x)
/// temporal_k, plus noise. Weights are variance weights so that downstream
/// axis inertias split in proportion to them.
inline std::vector<ConditionERP> plant_components(const GroundTruth& truth) {
    truth.validate();
    const auto nc = static_cast<Eigen::Index>(truth.condition_labels.size());
    const auto ne = static_cast<Eigen::Index>(truth.electrode_labels.size());
    const Eigen::Index ns = truth.n_samples();
    std::vector<ConditionERP> erps;
    for (Eigen::Index c = 0; c < nc; ++c) {
        ConditionERP erp;
        erp.condition_label = truth.condition_labels[static_cast<std::size_t>(c)];
        if (!truth.condition_attrs.empty()) erp.attributes = truth.condition_attrs[static_cast<std::size_t>(c)];
        erp.channels = truth.electrode_labels;
        erp.fs = truth.fs;
        erp.window = truth.window;
        erp.n_epochs = 1;
        erp.data = Matrix::Zero(ne, ns);
        for (const auto& comp : truth.components)
            erp.data.noalias() +=
                (std::sqrt(comp.weight) * comp.loadings[c]) * comp.spatial * comp.temporal.transpose();
        add_noise(erp.data, truth.noise_sigma_uv, truth.pink_fraction,
                  rng::derive_seed(truth.seed, "plant-noise", static_cast<std::uint64_t>(c)));
        erps.push_back(std::move(erp));
    }
    return erps;
}

// ---- recovery scoring ------------------------------------------------------

struct AxisRecovery {
    int axis = 0;        // 1-based
    int component = -1;  // index into truth.components with the largest |cos|
    double abs_cos = 0.0;
    double loading_r = 0.0;  // Pearson r of truth loadings vs row standard coords
};

struct RecoveryScore {
    std::vector<AxisRecovery> axes;
    bool order_match = false;  // axis ranking equals planted weight ranking
    bool weight_tie = false;   // weights tie, so the ranking is undefined
};

/// Scores a conditions-by-(electrode, time) solution against planted truth.
/// Each axis is matched to the component whose binned spatial (x) temporal
/// pattern has the largest |cos| with the axis's column eigenvector.
inline RecoveryScore recovery_score(const CaSolution& sol, const GroundTruth& truth) {
    require(sol.layout == MatrixLayout::ConditionsByElectrodeTime,
            "recovery_score: needs a conditions-by-electrode-time solution");
    require(!truth.components.empty(), "recovery_score: truth has no components");
    require(sol.bin_ms > 0.0, "recovery_score: solution carries no bin size");

    std::unordered_map<std::string, Eigen::Index> elec_index;
    for (std::size_t i = 0; i < truth.electrode_labels.size(); ++i)
        elec_index.emplace(truth.electrode_labels[i], static_cast<Eigen::Index>(i));
    std::unordered_map<std::string, Eigen::Index> cond_index;
    for (std::size_t i = 0; i < truth.condition_labels.size(); ++i)
        cond_index.emplace(truth.condition_labels[i], static_cast<Eigen::Index>(i));

    const Eigen::Index ns = truth.n_samples();
    const auto bin_samples =
        static_cast<Eigen::Index>(std::max<long long>(1, llround(sol.bin_ms * truth.fs / 1000.0)));

    // planted pattern per solution column, one column vector per component
    Matrix patterns(sol.n_cols(), static_cast<Eigen::Index>(truth.components.size()));
    for (Eigen::Index j = 0; j < sol.n_cols(); ++j) {
        const auto lbl = detail::parse_electrode_time_label(sol.col_labels[static_cast<std::size_t>(j)]);
        auto e_it = elec_index.find(lbl.electrode);
        require(e_it != elec_index.end(), "recovery_score: unknown electrode '" + lbl.electrode + "'");
        const auto start = static_cast<Eigen::Index>(
            llround((lbl.time_ms - sol.window.start_ms) * truth.fs / 1000.0));
        require(start >= 0 && start < ns, "recovery_score: bin start outside truth window");
        const Eigen::Index len = std::min(bin_samples, ns - start);
        const double sign = lbl.doubled < 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < truth.components.size(); ++k) {
            const auto& comp = truth.components[k];
            patterns(j, static_cast<Eigen::Index>(k)) =
                sign * comp.spatial[e_it->second] * comp.temporal.segment(start, len).mean();
        }
    }

    RecoveryScore score;
    for (int a = 0; a < sol.n_axes(); ++a) {
        // column eigenvector in the mass-weighted metric, same vector family
        // cosine_table compares
        Vector axis_vec(sol.n_cols());
        for (Eigen::Index j = 0; j < sol.n_cols(); ++j)
            axis_vec[j] = std::sqrt(sol.col_masses[j]) * sol.col_standard(j, a);
        const double axis_norm = axis_vec.norm();
        AxisRecovery rec;
        rec.axis = a + 1;
        for (std::size_t k = 0; k < truth.components.size(); ++k) {
            const double pnorm = patterns.col(static_cast<Eigen::Index>(k)).norm();
            if (axis_norm == 0.0 || pnorm == 0.0) continue;
            const double c =
                std::abs(axis_vec.dot(patterns.col(static_cast<Eigen::Index>(k))) / (axis_norm * pnorm));
            if (c > rec.abs_cos) {
                rec.abs_cos = c;
                rec.component = static_cast<int>(k);
            }
        }
        if (rec.component >= 0) {
            const auto& comp = truth.components[static_cast<std::size_t>(rec.component)];
            Vector x(sol.n_rows()), y(sol.n_rows());
            for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
                auto it = cond_index.find(sol.row_labels[static_cast<std::size_t>(i)]);
                require(it != cond_index.end(),
                        "recovery_score: unknown condition '" + sol.row_labels[static_cast<std::size_t>(i)] + "'");
                x[i] = comp.loadings[it->second];
                y[i] = sol.row_standard(i, a);
            }
            rec.loading_r = detail::pearson_r_or_zero(x, y);
        }
        score.axes.push_back(rec);
    }

    // weight ranking vs axis ranking
    std::vector<std::size_t> by_weight(truth.components.size());
    for (std::size_t i = 0; i < by_weight.size(); ++i) by_weight[i] = i;
    std::stable_sort(by_weight.begin(), by_weight.end(), [&](std::size_t a, std::size_t b) {
        return truth.components[a].weight > truth.components[b].weight;
    });
    for (std::size_t i = 0; i + 1 < by_weight.size(); ++i)
        if (truth.components[by_weight[i]].weight == truth.components[by_weight[i + 1]].weight)
            score.weight_tie = true;
    if (!score.weight_tie) {
        score.order_match = true;
        const std::size_t upto = std::min(by_weight.size(), score.axes.size());
        for (std::size_t i = 0; i < upto; ++i)
            if (score.axes[i].component != static_cast<int>(by_weight[i])) score.order_match = false;
        if (upto == 0) score.order_match = false;
    }
    return score;
}

// ---- phrase-cadence recording ----------------------------------------------
//
// Each synthetic phrase is three function-word + content-word pairs, a period,
// and a blank: 3 x (110 + 500) + 500 + 530 = 2860 ms. Content words carry
// planted responses peaking a fixed latency after onset. Standard-order
// phrases run subject-verb-object; reverse-order phrases run
// object-verb-subject.

inline const std::vector<std::string>& semantic_categories() {
    static const std::vector<std::string> cats = {"people",   "animals", "body-parts", "plants",
                                                  "clothing", "tools",   "vehicles",   "furniture"};
    return cats;
}

inline bool category_is_biological(const std::string& cat) {
    return cat == "people" || cat == "animals" || cat == "body-parts" || cat == "plants";
}

inline std::string noun_condition_label(const std::string& role, const std::string& order,
                                        const std::string& category) {
    return role + "-" + order + "-" + category;
}

inline std::string verb_condition_label(const std::string& order, const std::string& neighbor,
                                        const std::string& category) {
    return "verb-" + order + "-" + neighbor + "-" + category;
}

/// The 64 canonical condition labels with their attributes: 8 noun conditions
/// for each role x order cell, then 16 verb conditions per order keyed by the
/// neighboring noun's category.
inline std::pair<std::vector<std::string>, std::vector<AttrMap>> phrase_condition_catalog() {
    std::vector<std::string> labels;
    std::vector<AttrMap> attrs;
    for (const std::string order : {"standard", "reverse"})
        for (const std::string role : {"subject", "object"}) {
            const bool initial = (order == "standard") == (role == "subject");
            for (const auto& cat : semantic_categories()) {
                labels.push_back(noun_condition_label(role, order, cat));
                attrs.push_back({{"role", role},
                                 {"order", order},
                                 {"category", cat},
                                 {"position", initial ? "initial" : "final"}});
            }
        }
    for (const std::string order : {"standard", "reverse"})
        for (const std::string neighbor : {"after", "before"})
            for (const auto& cat : semantic_categories()) {
                labels.push_back(verb_condition_label(order, neighbor, cat));
                attrs.push_back({{"role", "verb"},
                                 {"order", order},
                                 {"category", cat},
                                 {"neighbor", neighbor},
                                 {"position", "medial"}});
            }
    return {labels, attrs};
}

struct PhraseTiming {
    double function_ms = 110.0;
    double content_ms = 500.0;
    double period_ms = 500.0;
    double blank_ms = 530.0;

    double phrase_ms() const { return 3.0 * (function_ms + content_ms) + period_ms + blank_ms; }
    double content_onset_ms(int slot) const {
        return function_ms + static_cast<double>(slot) * (function_ms + content_ms);
    }
};

struct PhraseSynthConfig {
    double fs = 1000.0;
    int n_phrases = 48;
    std::string order = "standard";  // standard | reverse
    int n_electrodes = 128;
    double amplitude_uv = 6.0;        // shared content-word response
    double contrast_uv = 2.0;         // category/role/order contrast scale
    double noise_uv = 2.0;
    double pink_fraction = 0.5;
    double response_peak_ms = 300.0;  // latency of the response maximum
    double response_sigma_ms = 80.0;
    double artifact_rate = 0.0;       // per-phrase chance of a large excursion
    double artifact_uv = 150.0;
    std::uint64_t seed = 1;
    PhraseTiming timing;

    void validate() const {
        require(fs > 0.0, "PhraseSynthConfig: fs must be positive");
        require(n_phrases >= 1, "PhraseSynthConfig: need at least one phrase");
        require(order == "standard" || order == "reverse", "PhraseSynthConfig: order must be standard|reverse");
        require(n_electrodes >= 8, "PhraseSynthConfig: need at least 8 electrodes");
        require(amplitude_uv >= 0.0 && contrast_uv >= 0.0 && noise_uv >= 0.0,
                "PhraseSynthConfig: negative amplitude");
        require(artifact_rate >= 0.0 && artifact_rate <= 1.0, "PhraseSynthConfig: artifact_rate in [0, 1]");
        require(response_sigma_ms > 0.0, "PhraseSynthConfig: response width must be positive");
    }
};

struct PhraseSynthResult {
    Recording recording;
    EventList events;
    Montage montage;
    GroundTruth truth;
};

namespace detail {

struct PhrasePlant {
    std::string name;
    Vector spatial;  // unit norm over all sites
    double amplitude_uv = 0.0;
    // loading as a function of the word's condition attributes
    double loading(const AttrMap& a) const {
        if (name == "response") return 1.0;
        const auto role = a.at("role");
        if (name == "category") {
            const double sign = category_is_biological(a.at("category")) ? 1.0 : -1.0;
            return role == "verb" ? 0.5 * sign : sign;  // verbs inherit half the neighbor's contrast
        }
        if (name == "role") return role == "subject" ? 1.0 : role == "object" ? -1.0 : 0.0;
        if (name == "order") return a.at("order") == "standard" ? 1.0 : -1.0;
        fail("unknown phrase plant '" + name + "'");
    }
};

}  // namespace detail

/// Continuous recording at the phrase cadence with word-locked planted
/// responses, the event stream that supports the 64-condition build, the
/// montage, and the planted truth.
inline PhraseSynthResult synth_phrase_recording(const PhraseSynthConfig& cfg) {
    cfg.validate();
    const auto& timing = cfg.timing;

    PhraseSynthResult out;
    out.montage = montage_golden(cfg.n_electrodes, std::max(0, cfg.n_electrodes * 26 / 128));

    const double lead_ms = 500.0, tail_ms = 200.0;
    const auto n_samples = static_cast<Eigen::Index>(
        llround((lead_ms + timing.phrase_ms() * cfg.n_phrases + tail_ms) * cfg.fs / 1000.0));
    const auto ne = static_cast<Eigen::Index>(cfg.n_electrodes);

    Recording& rec = out.recording;
    rec.channels = out.montage.labels();
    rec.fs = cfg.fs;
    rec.data = Matrix::Zero(ne, n_samples);

    // spatial patterns of the planted effects, orthonormal across effects
    rng::GaussianStream pattern_rng(rng::derive_seed(cfg.seed, "phrase-patterns"));
    const Matrix patterns = detail::orthonormal_columns(ne, 4, false, pattern_rng);
    std::vector<detail::PhrasePlant> plants = {
        {"response", patterns.col(0), cfg.amplitude_uv},
        {"category", patterns.col(1), cfg.contrast_uv},
        {"role", patterns.col(2), cfg.contrast_uv},
        {"order", patterns.col(3), cfg.contrast_uv},
    };

    // response waveform sampled once, re-added at each content-word onset
    const auto wave_len = static_cast<Eigen::Index>(llround((cfg.response_peak_ms + 4.0 * cfg.response_sigma_ms) *
                                                            cfg.fs / 1000.0));
    Vector wave(wave_len);
    for (Eigen::Index s = 0; s < wave_len; ++s) {
        const double t_ms = static_cast<double>(s) * 1000.0 / cfg.fs;
        const double dev = (t_ms - cfg.response_peak_ms) / cfg.response_sigma_ms;
        wave[s] = std::exp(-0.5 * dev * dev);
    }

    const auto [cond_labels, cond_attrs] = phrase_condition_catalog();
    const auto& cats = semantic_categories();

    // one loading per plant, in the order of `plants`
    auto add_signal = [&](double onset_ms, const std::array<double, 4>& loadings) {
        const auto start = static_cast<Eigen::Index>(llround(onset_ms * cfg.fs / 1000.0));
        const Eigen::Index len = std::min(wave_len, n_samples - start);
        for (std::size_t k = 0; k < plants.size(); ++k) {
            const double amp = plants[k].amplitude_uv * loadings[k];
            if (amp == 0.0) continue;
            rec.data.middleCols(start, len).noalias() += amp * plants[k].spatial * wave.head(len).transpose();
        }
    };

    rng::GaussianStream artifact_rng(rng::derive_seed(cfg.seed, "phrase-artifacts"));
    for (int p = 0; p < cfg.n_phrases; ++p) {
        const double phrase_start = lead_ms + static_cast<double>(p) * timing.phrase_ms();
        // category pair for this phrase; the offset stride covers varied pairs
        const auto n_cats = static_cast<int>(cats.size());
        const std::string& cat_a = cats[static_cast<std::size_t>(p % n_cats)];  // subject noun
        const std::string& cat_b =
            cats[static_cast<std::size_t>((p + 1 + p / n_cats) % n_cats)];  // object noun
        const bool standard = cfg.order == "standard";
        const std::string& cat_initial = standard ? cat_a : cat_b;
        const std::string& cat_final = standard ? cat_b : cat_a;

        auto push_event = [&](double onset_ms, const std::string& label, AttrMap attrs) {
            Event ev;
            ev.onset_sample = llround(onset_ms * cfg.fs / 1000.0);
            ev.condition_label = label;
            ev.attributes = std::move(attrs);
            out.events.events.push_back(std::move(ev));
        };

        push_event(phrase_start, "phrase-" + cfg.order, {{"role", "phrase"}, {"order", cfg.order}});

        // slot 0: initial noun, slot 1: verb (two condition memberships),
        // slot 2: final noun
        const AttrMap initial_attrs = {{"role", standard ? "subject" : "object"},
                                       {"order", cfg.order},
                                       {"category", cat_initial},
                                       {"position", "initial"}};
        const AttrMap final_attrs = {{"role", standard ? "object" : "subject"},
                                     {"order", cfg.order},
                                     {"category", cat_final},
                                     {"position", "final"}};
        const AttrMap verb_after = {{"role", "verb"},
                                    {"order", cfg.order},
                                    {"category", cat_initial},
                                    {"neighbor", "after"},
                                    {"position", "medial"}};
        const AttrMap verb_before = {{"role", "verb"},
                                     {"order", cfg.order},
                                     {"category", cat_final},
                                     {"neighbor", "before"},
                                     {"position", "medial"}};

        const double onset0 = phrase_start + timing.content_onset_ms(0);
        const double onset1 = phrase_start + timing.content_onset_ms(1);
        const double onset2 = phrase_start + timing.content_onset_ms(2);

        push_event(onset0, noun_condition_label(initial_attrs.at("role"), cfg.order, cat_initial),
                   initial_attrs);
        push_event(onset1, verb_condition_label(cfg.order, "after", cat_initial), verb_after);
        push_event(onset1, verb_condition_label(cfg.order, "before", cat_final), verb_before);
        push_event(onset2, noun_condition_label(final_attrs.at("role"), cfg.order, cat_final), final_attrs);

        const double order_sign = standard ? 1.0 : -1.0;
        auto bio = [](const std::string& cat) { return category_is_biological(cat) ? 1.0 : -1.0; };
        add_signal(onset0, {1.0, bio(cat_initial), initial_attrs.at("role") == "subject" ? 1.0 : -1.0,
                            order_sign});
        add_signal(onset2,
                   {1.0, bio(cat_final), final_attrs.at("role") == "subject" ? 1.0 : -1.0, order_sign});
        // the verb is one word; its category contrast blends both neighbors
        add_signal(onset1, {1.0, 0.5 * (bio(cat_initial) + bio(cat_final)), 0.0, order_sign});

        if (cfg.artifact_rate > 0.0 && artifact_rng.uniform() < cfg.artifact_rate) {
            const auto ch = static_cast<Eigen::Index>(artifact_rng.uniform() * static_cast<double>(ne));
            const double at_ms = phrase_start + artifact_rng.uniform() * (timing.phrase_ms() - 300.0);
            const auto start = static_cast<Eigen::Index>(llround(at_ms * cfg.fs / 1000.0));
            const auto len = static_cast<Eigen::Index>(llround(200.0 * cfg.fs / 1000.0));
            rec.data.row(std::min(ch, ne - 1)).segment(start, std::min(len, n_samples - start)).array() +=
                cfg.artifact_uv;
        }
    }

    add_noise(rec.data, cfg.noise_uv, cfg.pink_fraction, rng::derive_seed(cfg.seed, "phrase-noise"));
    rec.validate();
    out.events.validate();
    out.events.validate_against(rec);

    // truth bookkeeping: loadings per catalog condition, centered; waveform
    // over the word-analysis window
    GroundTruth& truth = out.truth;
    truth.noise_sigma_uv = cfg.noise_uv;
    truth.pink_fraction = cfg.pink_fraction;
    truth.seed = cfg.seed;
    truth.orthogonal = true;
    truth.condition_labels = cond_labels;
    truth.condition_attrs = cond_attrs;
    truth.electrode_labels = rec.channels;
    truth.window = TimeWindow(0.0, std::max(1.0, static_cast<double>(wave_len) * 1000.0 / cfg.fs));
    truth.fs = cfg.fs;
    const Eigen::Index ns = truth.n_samples();
    const double wave_norm = wave.norm();
    for (const auto& plant : plants) {
        if (plant.amplitude_uv == 0.0) continue;
        PlantedComponent comp;
        comp.name = plant.name;
        comp.spatial = plant.spatial;
        comp.temporal = Vector::Zero(ns);
        comp.temporal.head(std::min(ns, wave.size())) = wave.head(std::min(ns, wave.size())) / wave_norm;
        comp.loadings = Vector::Zero(static_cast<Eigen::Index>(cond_labels.size()));
        for (std::size_t c = 0; c < cond_labels.size(); ++c)
            comp.loadings[static_cast<Eigen::Index>(c)] = plant.loading(cond_attrs[c]);
        comp.loadings.array() -= comp.loadings.mean();
        const double lnorm = comp.loadings.norm();
        if (lnorm > 0.0) comp.loadings /= lnorm;
        comp.weight = plant.amplitude_uv * plant.amplitude_uv;
        truth.components.push_back(std::move(comp));
    }
    return out;
}

// ---- truth serialization ---------------------------------------------------

inline nlohmann::json truth_to_json(const GroundTruth& truth) {
    nlohmann::json j;
    j["format"] = "corrdyn-truth";
    j["version"] = 1;
    j["noise_sigma_uv"] = truth.noise_sigma_uv;
    j["pink_fraction"] = truth.pink_fraction;
    j["seed"] = truth.seed;
    j["orthogonal"] = truth.orthogonal;
    j["condition_labels"] = truth.condition_labels;
    if (!truth.condition_attrs.empty()) j["condition_attrs"] = truth.condition_attrs;
    j["electrode_labels"] = truth.electrode_labels;
    j["window_ms"] = {truth.window.start_ms, truth.window.end_ms};
    j["fs"] = truth.fs;
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : truth.components) {
        nlohmann::json jc;
        jc["name"] = c.name;
        jc["weight"] = c.weight;
        jc["loadings"] = detail::vector_to_json(c.loadings);
        jc["spatial"] = detail::vector_to_json(c.spatial);
        jc["temporal"] = detail::vector_to_json(c.temporal);
        comps.push_back(std::move(jc));
    }
    j["components"] = std::move(comps);
    return j;
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "corrdyn-truth", "not a corrdyn-truth document");
    GroundTruth truth;
    truth.noise_sigma_uv = j.at("noise_sigma_uv").get<double>();
    truth.pink_fraction = j.value("pink_fraction", 0.0);
    truth.seed = j.at("seed").get<std::uint64_t>();
    truth.orthogonal = j.value("orthogonal", true);
    truth.condition_labels = j.at("condition_labels").get<std::vector<std::string>>();
    if (j.contains("condition_attrs")) truth.condition_attrs = j.at("condition_attrs").get<std::vector<AttrMap>>();
    truth.electrode_labels = j.at("electrode_labels").get<std::vector<std::string>>();
    truth.window = TimeWindow(j.at("window_ms")[0].get<double>(), j.at("window_ms")[1].get<double>());
    truth.fs = j.at("fs").get<double>();
    for (const auto& jc : j.at("components")) {
        PlantedComponent c;
        c.name = jc.at("name").get<std::string>();
        c.weight = jc.at("weight").get<double>();
        c.loadings = detail::vector_from_json(jc.at("loadings"));
        c.spatial = detail::vector_from_json(jc.at("spatial"));
        c.temporal = detail::vector_from_json(jc.at("temporal"));
        truth.components.push_back(std::move(c));
    }
    return truth;
}

inline void save_truth(const std::filesystem::path& path, const GroundTruth& truth) {
    std::ofstream out(path);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    out << truth_to_json(truth).dump(1) << '\n';
    require(out.good(), "write failed for '" + path.string() + "'");
}

inline GroundTruth load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open truth '" + path.string() + "'");
    nlohmann::json j;
    in >> j;
    return truth_from_json(j);
}

}  // namespace corrdyn
