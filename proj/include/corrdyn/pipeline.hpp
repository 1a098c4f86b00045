#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrdyn/ca.hpp"
#include "corrdyn/common.hpp"
#include "corrdyn/filters.hpp"
#include "corrdyn/io.hpp"
#include "corrdyn/preprocess.hpp"
#include "corrdyn/profiles.hpp"
#include "corrdyn/report.hpp"
#include "corrdyn/stats.hpp"
#include "corrdyn/synth.hpp"
#include "corrdyn/types.hpp"

namespace corrdyn {

// ---- row filter mini-language ----------------------------------------------
//
// "role=verb&order=standard;role=subject|object" selects rows matching ANY
// ';'-alternative, where an alternative holds when ALL its '&'-terms hold. A
// term "key=v1|v2" holds when the row attribute `key` is one of the values;
// the pseudo-key "label" matches the row label. An empty expression matches
// everything.

class RowFilter {
  public:
    RowFilter() = default;

    explicit RowFilter(const std::string& expr) : expr_(expr) {
        for (const auto& alt : split(expr, ';')) {
            const std::string alt_s = trim(alt);
            if (alt_s.empty()) continue;
            std::vector<Term> terms;
            for (const auto& term : split(alt_s, '&')) {
                const std::string term_s = trim(term);
                const auto eq = term_s.find('=');
                require(eq != std::string::npos && eq > 0,
                        "row filter: expected key=value in '" + term_s + "'");
                Term t;
                t.key = trim(term_s.substr(0, eq));
                for (const auto& v : split(term_s.substr(eq + 1), '|')) t.values.push_back(trim(v));
                require(!t.values.empty(), "row filter: no values in '" + term_s + "'");
                terms.push_back(std::move(t));
            }
            alternatives_.push_back(std::move(terms));
        }
    }

    bool matches(const std::string& label, const AttrMap& attrs) const {
        if (alternatives_.empty()) return true;
        for (const auto& alt : alternatives_) {
            bool all = true;
            for (const auto& term : alt) {
                std::string actual;
                if (term.key == "label") {
                    actual = label;
                } else {
                    auto it = attrs.find(term.key);
                    if (it == attrs.end()) {
                        all = false;
                        break;
                    }
                    actual = it->second;
                }
                bool any = false;
                for (const auto& v : term.values) any = any || v == actual;
                if (!any) {
                    all = false;
                    break;
                }
            }
            if (all) return true;
        }
        return false;
    }

    const std::string& expression() const { return expr_; }

  private:
    struct Term {
        std::string key;
        std::vector<std::string> values;
    };
    std::string expr_;
    std::vector<std::vector<Term>> alternatives_;
};

// ---- analysis matrix builders ----------------------------------------------

namespace detail {

inline std::string ms_label(double ms) { return strfmt("%g", ms); }

inline Eigen::Index checked_bin_samples(double bin_ms, double fs) {
    require(bin_ms > 0.0, "bin_ms must be positive");
    const double exact = bin_ms * fs / 1000.0;
    const auto bs = static_cast<Eigen::Index>(llround(exact));
    require(bs >= 1 && std::abs(exact - static_cast<double>(bs)) < 1e-9,
            strfmt("bin of %g ms is not a whole number of samples at %g Hz", bin_ms, fs));
    return bs;
}

}  // namespace detail

/// Conditions x (electrode, time-bin) matrix of mean amplitudes. Columns are
/// electrode-major, labeled "<electrode>@<bin-start-ms>".
inline AnalysisMatrix build_condition_matrix(const std::vector<ConditionERP>& erps, TimeWindow window,
                                             double bin_ms) {
    require(!erps.empty(), "build_condition_matrix: no conditions");
    const auto& first = erps.front();
    std::set<std::string> seen_labels;
    for (const auto& erp : erps) {
        require(erp.channels == first.channels, "build_condition_matrix: channel sets differ");
        require(erp.fs == first.fs, "build_condition_matrix: sampling rates differ");
        require(window.start_ms >= erp.window.start_ms && window.end_ms <= erp.window.end_ms,
                strfmt("build_condition_matrix: window [%g, %g) not covered by condition '%s'",
                       window.start_ms, window.end_ms, erp.condition_label.c_str()));
        require(seen_labels.insert(erp.condition_label).second,
                "build_condition_matrix: duplicate condition '" + erp.condition_label + "'");
    }
    const double fs = first.fs;
    const Eigen::Index bs = detail::checked_bin_samples(bin_ms, fs);
    const auto win_samples = static_cast<Eigen::Index>(llround(window.length_ms() * fs / 1000.0));
    require(win_samples >= bs && win_samples % bs == 0,
            strfmt("build_condition_matrix: window of %ld samples is not a whole number of %ld-sample bins",
                   static_cast<long>(win_samples), static_cast<long>(bs)));
    const Eigen::Index n_bins = win_samples / bs;
    const auto ne = static_cast<Eigen::Index>(first.channels.size());

    AnalysisMatrix m;
    m.layout = MatrixLayout::ConditionsByElectrodeTime;
    m.window = window;
    m.bin_ms = bin_ms;
    m.values.resize(static_cast<Eigen::Index>(erps.size()), ne * n_bins);
    for (Eigen::Index e = 0; e < ne; ++e)
        for (Eigen::Index b = 0; b < n_bins; ++b)
            m.col_labels.push_back(first.channels[static_cast<std::size_t>(e)] + "@" +
                                   detail::ms_label(window.start_ms + static_cast<double>(b) * bin_ms));
    for (std::size_t i = 0; i < erps.size(); ++i) {
        const auto& erp = erps[i];
        m.row_labels.push_back(erp.condition_label);
        m.row_attrs.push_back(erp.attributes);
        const Eigen::Index offset = erp.sample_of_time(window.start_ms);
        for (Eigen::Index e = 0; e < ne; ++e)
            for (Eigen::Index b = 0; b < n_bins; ++b)
                m.values(static_cast<Eigen::Index>(i), e * n_bins + b) =
                    erp.data.row(e).segment(offset + b * bs, bs).mean();
    }
    m.validate();
    return m;
}

/// Electrodes x time-bin matrix of one averaged signal, columns labeled by bin
/// start in ms.
inline AnalysisMatrix build_electrode_time_matrix(const ConditionERP& grand, TimeWindow window,
                                                  double bin_ms) {
    require(window.start_ms >= grand.window.start_ms && window.end_ms <= grand.window.end_ms,
            strfmt("build_electrode_time_matrix: window [%g, %g) not covered", window.start_ms,
                   window.end_ms));
    const double fs = grand.fs;
    const Eigen::Index bs = detail::checked_bin_samples(bin_ms, fs);
    const auto win_samples = static_cast<Eigen::Index>(llround(window.length_ms() * fs / 1000.0));
    require(win_samples >= bs && win_samples % bs == 0,
            "build_electrode_time_matrix: window is not a whole number of bins");
    const Eigen::Index n_bins = win_samples / bs;
    const auto ne = static_cast<Eigen::Index>(grand.channels.size());

    AnalysisMatrix m;
    m.layout = MatrixLayout::ElectrodesByTime;
    m.window = window;
    m.bin_ms = bin_ms;
    m.row_labels = grand.channels;
    for (Eigen::Index b = 0; b < n_bins; ++b)
        m.col_labels.push_back(detail::ms_label(window.start_ms + static_cast<double>(b) * bin_ms));
    m.values.resize(ne, n_bins);
    const Eigen::Index offset = grand.sample_of_time(window.start_ms);
    for (Eigen::Index e = 0; e < ne; ++e)
        for (Eigen::Index b = 0; b < n_bins; ++b)
            m.values(e, b) = grand.data.row(e).segment(offset + b * bs, bs).mean();
    m.validate();
    return m;
}

// ---- configuration ---------------------------------------------------------

struct SynthRecordingSpec {
    std::string name;
    PhraseSynthConfig phrase;
};

struct InputRecordingSpec {
    std::string name;
    std::filesystem::path recording;
    std::filesystem::path events;
};

struct PreprocessParams {
    double hp_hz = 0.1;
    double lp_hz = 100.0;
    double notch_hz = 50.0;
    double notch_bw_hz = 5.0;
    int slope_db_per_octave = 48;
    double reject_uv = 100.0;
    TimeWindow word_window{-250.0, 500.0};
    TimeWindow phrase_window{-250.0, 1850.0};
    TimeWindow baseline{-250.0, 0.0};
    bool keep_peripheral = false;
};

struct RecipeSpec {
    std::string name;
    std::string source = "conditions";  // conditions | phrase-grand
    std::string recording = "all";
    std::string filter;
    std::string group_key;
    TimeWindow window{50.0, 500.0};
    double bin_ms = 2.0;
    Encoding encoding = Encoding::GlobalShift;
    int n_axes = 5;
    int curve_axes = 3;
    int smooth_bins = 5;
    double prominence_frac = 0.5;
    double group_top_fraction = 0.1;
    double group_corr_threshold = 0.8;
};

struct CompareSpec {
    std::string id;
    std::string type;  // cosine | pearson | sign_test | anova
    std::string a, b;  // recipe names (cosine)
    std::vector<int> axes_a, axes_b;
    std::string recipe;  // recipe name (stats)
    int axis = 1;
    std::string split_key, split_a, split_b, match_key;
    std::string group_key;
};

struct PipelineConfig {
    std::filesystem::path output_dir = "corrdyn-out";
    std::uint64_t seed = 1;
    std::vector<SynthRecordingSpec> synth;
    std::vector<InputRecordingSpec> inputs;
    std::filesystem::path montage_path;
    PreprocessParams prep;
    std::vector<RecipeSpec> recipes;
    std::vector<CompareSpec> compares;
    nlohmann::json raw;  // the config document, embedded in the manifest
};

/// The nine stock analyses, addressable as {"preset": "<name>"} in configs.
inline RecipeSpec recipe_preset(const std::string& name) {
    RecipeSpec r;
    r.name = name;
    if (name == "overall-standard" || name == "overall-reverse") {
        r.source = "phrase-grand";
        r.recording = name == "overall-standard" ? "standard" : "reverse";
        r.window = TimeWindow(0.0, 1850.0);
        r.bin_ms = 10.0;
    } else if (name == "content-words-64") {
        r.filter = "role=subject|object|verb";
    } else if (name == "all-nouns") {
        r.filter = "role=subject|object";
    } else if (name == "all-verbs") {
        r.filter = "role=verb";
    } else if (name == "verbs-standard") {
        r.filter = "role=verb&order=standard";
    } else if (name == "verbs-reverse") {
        r.filter = "role=verb&order=reverse";
    } else if (name == "nouns+std-verbs") {
        r.filter = "role=subject|object;role=verb&order=standard";
    } else if (name == "categories-mean") {
        r.filter = "role=subject|object";
        r.group_key = "category";
    } else {
        fail("unknown recipe preset '" + name + "'");
    }
    return r;
}

namespace detail {

inline TimeWindow window_from_json(const nlohmann::json& j, const char* what) {
    require(j.is_array() && j.size() == 2, std::string(what) + ": expected [start_ms, end_ms]");
    return TimeWindow(j[0].get<double>(), j[1].get<double>());
}

inline PhraseSynthConfig phrase_config_from_json(const nlohmann::json& j) {
    PhraseSynthConfig c;
    c.fs = j.value("fs", c.fs);
    c.n_phrases = j.value("n_phrases", c.n_phrases);
    c.order = j.value("order", c.order);
    c.n_electrodes = j.value("n_electrodes", c.n_electrodes);
    c.amplitude_uv = j.value("amplitude_uv", c.amplitude_uv);
    c.contrast_uv = j.value("contrast_uv", c.contrast_uv);
    c.noise_uv = j.value("noise_uv", c.noise_uv);
    c.pink_fraction = j.value("pink_fraction", c.pink_fraction);
    c.response_peak_ms = j.value("response_peak_ms", c.response_peak_ms);
    c.response_sigma_ms = j.value("response_sigma_ms", c.response_sigma_ms);
    c.artifact_rate = j.value("artifact_rate", c.artifact_rate);
    c.artifact_uv = j.value("artifact_uv", c.artifact_uv);
    c.validate();
    return c;
}

inline RecipeSpec recipe_from_json(const nlohmann::json& j) {
    RecipeSpec r = j.contains("preset") ? recipe_preset(j.at("preset").get<std::string>()) : RecipeSpec{};
    if (j.contains("name")) r.name = j.at("name").get<std::string>();
    require(!r.name.empty(), "recipe needs a name or preset");
    require(r.name.find_first_of("/\\") == std::string::npos, "recipe name must not contain path separators");
    r.source = j.value("source", r.source);
    require(r.source == "conditions" || r.source == "phrase-grand",
            "recipe source must be conditions|phrase-grand");
    r.recording = j.value("recording", r.recording);
    r.filter = j.value("filter", r.filter);
    r.group_key = j.value("group_key", r.group_key);
    if (j.contains("window_ms")) r.window = window_from_json(j.at("window_ms"), "recipe window_ms");
    r.bin_ms = j.value("bin_ms", r.bin_ms);
    if (j.contains("encoding")) r.encoding = encoding_from_string(j.at("encoding").get<std::string>());
    r.n_axes = j.value("n_axes", r.n_axes);
    r.curve_axes = j.value("curve_axes", r.curve_axes);
    r.smooth_bins = j.value("smooth_bins", r.smooth_bins);
    r.prominence_frac = j.value("prominence_frac", r.prominence_frac);
    r.group_top_fraction = j.value("group_top_fraction", r.group_top_fraction);
    r.group_corr_threshold = j.value("group_corr_threshold", r.group_corr_threshold);
    require(r.n_axes >= 1, "recipe n_axes must be >= 1");
    return r;
}

inline CompareSpec compare_from_json(const nlohmann::json& j) {
    CompareSpec c;
    c.type = j.at("type").get<std::string>();
    require(c.type == "cosine" || c.type == "pearson" || c.type == "sign_test" || c.type == "anova",
            "compare type must be cosine|pearson|sign_test|anova");
    c.a = j.value("a", "");
    c.b = j.value("b", "");
    if (j.contains("axes_a")) c.axes_a = j.at("axes_a").get<std::vector<int>>();
    if (j.contains("axes_b")) c.axes_b = j.at("axes_b").get<std::vector<int>>();
    c.recipe = j.value("recipe", "");
    c.axis = j.value("axis", 1);
    c.split_key = j.value("split_key", "");
    c.split_a = j.value("split_a", "");
    c.split_b = j.value("split_b", "");
    c.match_key = j.value("match_key", "");
    c.group_key = j.value("group_key", "");
    if (c.type == "cosine") {
        require(!c.a.empty() && !c.b.empty(), "cosine compare needs recipe names a and b");
        c.id = j.value("id", "cosine-" + c.a + "-vs-" + c.b);
    } else {
        require(!c.recipe.empty(), c.type + " compare needs a recipe name");
        if (c.type == "anova") {
            require(!c.group_key.empty(), "anova compare needs group_key");
            c.id = j.value("id", strfmt("anova-%s-axis%d-by-%s", c.recipe.c_str(), c.axis, c.group_key.c_str()));
        } else {
            require(!c.split_key.empty() && !c.split_a.empty() && !c.split_b.empty() && !c.match_key.empty(),
                    c.type + " compare needs split_key, split_a, split_b, match_key");
            c.id = j.value("id", strfmt("%s-%s-axis%d-%s-vs-%s", c.type.c_str(), c.recipe.c_str(), c.axis,
                                        c.split_a.c_str(), c.split_b.c_str()));
        }
    }
    require(c.id.find_first_of("/\\") == std::string::npos, "compare id must not contain path separators");
    return c;
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& doc) {
    // a manifest embeds the config it ran with; accept either document
    const nlohmann::json& j = doc.value("format", "") == "corrdyn-manifest" ? doc.at("config") : doc;

    PipelineConfig cfg;
    cfg.raw = j;
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("synth")) {
        for (const auto& js : j.at("synth")) {
            SynthRecordingSpec s;
            s.name = js.at("name").get<std::string>();
            s.phrase = detail::phrase_config_from_json(js);
            cfg.synth.push_back(std::move(s));
        }
    }
    if (j.contains("inputs")) {
        const auto& ji = j.at("inputs");
        if (ji.contains("montage")) cfg.montage_path = ji.at("montage").get<std::string>();
        for (const auto& jr : ji.value("recordings", nlohmann::json::array())) {
            InputRecordingSpec r;
            r.name = jr.at("name").get<std::string>();
            r.recording = jr.at("recording").get<std::string>();
            r.events = jr.at("events").get<std::string>();
            cfg.inputs.push_back(std::move(r));
        }
    }
    require(cfg.synth.empty() || cfg.inputs.empty(), "config: pick either synth or inputs, not both");
    {
        std::set<std::string> names;
        for (const auto& s : cfg.synth) require(names.insert(s.name).second, "duplicate recording name");
        for (const auto& s : cfg.inputs) require(names.insert(s.name).second, "duplicate recording name");
    }

    if (j.contains("preprocess")) {
        const auto& jp = j.at("preprocess");
        cfg.prep.hp_hz = jp.value("hp_hz", cfg.prep.hp_hz);
        cfg.prep.lp_hz = jp.value("lp_hz", cfg.prep.lp_hz);
        cfg.prep.notch_hz = jp.value("notch_hz", cfg.prep.notch_hz);
        cfg.prep.notch_bw_hz = jp.value("notch_bw_hz", cfg.prep.notch_bw_hz);
        cfg.prep.slope_db_per_octave = jp.value("slope_db_per_octave", cfg.prep.slope_db_per_octave);
        cfg.prep.reject_uv = jp.value("reject_uv", cfg.prep.reject_uv);
        if (jp.contains("word_window_ms"))
            cfg.prep.word_window = detail::window_from_json(jp.at("word_window_ms"), "word_window_ms");
        if (jp.contains("phrase_window_ms"))
            cfg.prep.phrase_window = detail::window_from_json(jp.at("phrase_window_ms"), "phrase_window_ms");
        if (jp.contains("baseline_ms"))
            cfg.prep.baseline = detail::window_from_json(jp.at("baseline_ms"), "baseline_ms");
        cfg.prep.keep_peripheral = jp.value("keep_peripheral", cfg.prep.keep_peripheral);
    }

    std::set<std::string> recipe_names;
    for (const auto& jr : j.value("recipes", nlohmann::json::array())) {
        auto r = jr.is_string() ? recipe_preset(jr.get<std::string>()) : detail::recipe_from_json(jr);
        require(recipe_names.insert(r.name).second, "duplicate recipe name '" + r.name + "'");
        cfg.recipes.push_back(std::move(r));
    }
    std::set<std::string> compare_ids;
    for (const auto& jc : j.value("compare", nlohmann::json::array())) {
        auto c = detail::compare_from_json(jc);
        require(compare_ids.insert(c.id).second, "duplicate compare id '" + c.id + "'");
        cfg.compares.push_back(std::move(c));
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

// ---- preparation: inputs through condition ERPs ----------------------------

struct EpochStats {
    long word_events = 0;
    long word_kept = 0;
    long word_rejected = 0;
    long phrase_events = 0;
    long phrase_kept = 0;
    long phrase_rejected = 0;
    long skipped = 0;
};

struct PreparedData {
    Montage montage;
    std::vector<std::string> analysis_channels;
    std::map<std::string, ConditionERP> condition_erps;  // word conditions, all recordings
    std::map<std::string, ConditionERP> phrase_grand;    // recording name -> phrase ERP
    std::map<std::string, GroundTruth> truths;           // synth recordings only
    std::map<std::string, EpochStats> stats;
};

namespace detail {

inline Recording apply_filters(Recording rec, const PreprocessParams& prep) {
    if (prep.hp_hz > 0.0)
        rec = filter_zero_phase(rec, design_butterworth(FilterKind::Highpass, prep.hp_hz,
                                                        prep.slope_db_per_octave, rec.fs));
    if (prep.lp_hz > 0.0)
        rec = filter_zero_phase(rec, design_butterworth(FilterKind::Lowpass, prep.lp_hz,
                                                        prep.slope_db_per_octave, rec.fs));
    if (prep.notch_hz > 0.0)
        rec = filter_zero_phase(rec, design_notch(prep.notch_hz, prep.notch_bw_hz, rec.fs));
    return rec;
}

inline void ingest_recording(PreparedData& out, const std::string& name, Recording rec, EventList events,
                             const PreprocessParams& prep) {
    events.validate_against(rec);
    rec = Recording(select_channels(rec, out.analysis_channels));
    rec = apply_filters(std::move(rec), prep);

    EventList word_events, phrase_events;
    for (const auto& ev : events.events) {
        auto role = ev.attributes.find("role");
        if (role != ev.attributes.end() && role->second == "phrase")
            phrase_events.events.push_back(ev);
        else
            word_events.events.push_back(ev);
    }

    EpochStats& st = out.stats[name];
    auto word_result = epoch(rec, word_events, prep.word_window);
    st.skipped += static_cast<long>(word_result.skipped.size());
    for (auto& [label, set] : word_result.by_condition) {
        st.word_events += static_cast<long>(set.epochs.size());
        if (prep.reject_uv > 0.0) set = reject_artifacts(set, prep.reject_uv);
        st.word_kept += set.n_kept();
        st.word_rejected += set.n_rejected();
        ConditionERP erp = baseline_correct(average_condition(set), prep.baseline);
        require(out.condition_erps.emplace(label, std::move(erp)).second,
                "condition '" + label + "' appears in more than one recording");
    }

    auto phrase_result = epoch(rec, phrase_events, prep.phrase_window);
    st.skipped += static_cast<long>(phrase_result.skipped.size());
    std::vector<ConditionERP> phrase_erps;
    for (auto& [label, set] : phrase_result.by_condition) {
        st.phrase_events += static_cast<long>(set.epochs.size());
        if (prep.reject_uv > 0.0) set = reject_artifacts(set, prep.reject_uv);
        st.phrase_kept += set.n_kept();
        st.phrase_rejected += set.n_rejected();
        phrase_erps.push_back(baseline_correct(average_condition(set), prep.baseline));
    }
    if (!phrase_erps.empty()) {
        ConditionERP grand = phrase_erps.size() == 1 ? std::move(phrase_erps.front())
                                                     : grand_mean(phrase_erps);
        grand.condition_label = "phrase-grand-" + name;
        out.phrase_grand.emplace(name, std::move(grand));
    }
}

}  // namespace detail

inline PreparedData prepare(const PipelineConfig& cfg) {
    require(!cfg.synth.empty() || !cfg.inputs.empty(), "config declares no recordings");
    PreparedData out;

    bool montage_set = false;
    auto adopt_montage = [&](Montage m) {
        if (!montage_set) {
            out.montage = std::move(m);
            out.analysis_channels = cfg.prep.keep_peripheral ? out.montage.labels()
                                                             : out.montage.non_peripheral_labels();
            montage_set = true;
        } else {
            require(m.labels() == out.montage.labels(), "recordings use different montages");
        }
    };

    for (const auto& spec : cfg.synth) {
        PhraseSynthConfig phrase = spec.phrase;
        phrase.seed = rng::derive_seed(cfg.seed, "recording:" + spec.name);
        PhraseSynthResult synth = synth_phrase_recording(phrase);
        adopt_montage(std::move(synth.montage));
        out.truths.emplace(spec.name, std::move(synth.truth));
        detail::ingest_recording(out, spec.name, std::move(synth.recording), std::move(synth.events),
                                 cfg.prep);
    }
    if (!cfg.inputs.empty()) {
        require(!cfg.montage_path.empty(), "inputs need a montage path");
        adopt_montage(load_montage(cfg.montage_path));
        for (const auto& spec : cfg.inputs)
            detail::ingest_recording(out, spec.name, load_recording(spec.recording),
                                     load_events(spec.events), cfg.prep);
    }
    return out;
}

// ---- recipe execution ------------------------------------------------------

struct RecipeResult {
    RecipeSpec spec;
    AnalysisMatrix matrix;  // encoded
    CaSolution solution;
    std::vector<ElectrodeCurves> curves;  // conditions layout, axes 1..curve_axes
    TimeCurve time_curve;                 // electrodes-by-time layout
    std::vector<std::pair<int, std::vector<Extremum>>> extrema;
    std::vector<ElectrodeGroup> groups;  // axis-1 representative electrodes
};

namespace detail {

/// Attributes every member agrees on, plus the grouping key itself.
inline AttrMap unanimous_attrs(const std::vector<const ConditionERP*>& members, const std::string& group_key,
                               const std::string& group_value) {
    AttrMap attrs = members.front()->attributes;
    for (const auto* erp : members) {
        for (auto it = attrs.begin(); it != attrs.end();) {
            auto found = erp->attributes.find(it->first);
            if (found == erp->attributes.end() || found->second != it->second)
                it = attrs.erase(it);
            else
                ++it;
        }
    }
    attrs[group_key] = group_value;
    return attrs;
}

}  // namespace detail

inline RecipeResult run_recipe(const RecipeSpec& spec, const PreparedData& data,
                               const std::string& config_hash) {
    RecipeResult result;
    result.spec = spec;

    AnalysisMatrix raw;
    if (spec.source == "conditions") {
        RowFilter filter(spec.filter);
        std::vector<const ConditionERP*> selected;
        for (const auto& [label, erp] : data.condition_erps)
            if (filter.matches(label, erp.attributes)) selected.push_back(&erp);

        std::vector<ConditionERP> rows;
        if (!spec.group_key.empty()) {
            std::map<std::string, std::vector<const ConditionERP*>> by_value;
            for (const auto* erp : selected) {
                auto it = erp->attributes.find(spec.group_key);
                require(it != erp->attributes.end(), "recipe '" + spec.name + "': condition '" +
                                                         erp->condition_label + "' lacks attribute '" +
                                                         spec.group_key + "'");
                by_value[it->second].push_back(erp);
            }
            for (const auto& [value, members] : by_value) {
                std::vector<ConditionERP> copies;
                for (const auto* erp : members) copies.push_back(*erp);
                ConditionERP mean = copies.size() == 1 ? std::move(copies.front()) : grand_mean(copies);
                mean.condition_label = value;
                mean.attributes = detail::unanimous_attrs(members, spec.group_key, value);
                rows.push_back(std::move(mean));
            }
        } else {
            for (const auto* erp : selected) rows.push_back(*erp);
        }
        require(rows.size() >= 2, "recipe '" + spec.name + "': fewer than 2 rows selected");
        raw = build_condition_matrix(rows, spec.window, spec.bin_ms);
    } else {
        require(!data.phrase_grand.empty(), "recipe '" + spec.name + "': no phrase-level signal available");
        const ConditionERP* grand = nullptr;
        ConditionERP pooled;
        if (spec.recording == "all") {
            std::vector<ConditionERP> erps;
            for (const auto& [name, erp] : data.phrase_grand) erps.push_back(erp);
            pooled = erps.size() == 1 ? std::move(erps.front()) : grand_mean(erps);
            grand = &pooled;
        } else {
            auto it = data.phrase_grand.find(spec.recording);
            require(it != data.phrase_grand.end(),
                    "recipe '" + spec.name + "': no recording named '" + spec.recording + "'");
            grand = &it->second;
        }
        raw = build_electrode_time_matrix(*grand, spec.window, spec.bin_ms);
        require(raw.values.rows() >= 2, "recipe '" + spec.name + "': fewer than 2 rows selected");
    }

    AnalysisMatrix encoded = encode_nonnegative(raw, spec.encoding);
    const int max_axes = static_cast<int>(std::min(encoded.values.rows(), encoded.values.cols())) - 1;
    result.solution = correspondence_analysis(encoded, std::min(spec.n_axes, std::max(1, max_axes)));
    result.solution.provenance["recipe"] = spec.name;
    result.solution.provenance["source"] = spec.source;
    if (!spec.filter.empty()) result.solution.provenance["filter"] = spec.filter;
    if (!spec.group_key.empty()) result.solution.provenance["group_key"] = spec.group_key;
    result.solution.provenance["config_hash"] = config_hash;
    result.matrix = std::move(encoded);

    const int axes_to_profile = std::min(spec.curve_axes, result.solution.n_axes());
    if (result.spec.source == "conditions") {
        for (int a = 1; a <= axes_to_profile; ++a) {
            ElectrodeCurves curves = contribution_curves(result.solution, a);
            const auto energy = axis_energy_over_time(curves);
            result.extrema.emplace_back(
                a, detect_extrema(curves.times_ms, energy, spec.smooth_bins, spec.prominence_frac));
            result.curves.push_back(std::move(curves));
        }
        if (!result.curves.empty())
            result.groups = group_representative_electrodes(result.curves.front(), spec.group_top_fraction,
                                                            spec.group_corr_threshold);
    } else {
        result.time_curve = time_coordinate_curve(result.solution);
        for (int a = 1; a <= axes_to_profile; ++a) {
            std::vector<double> values;
            for (std::size_t t = 0; t < result.time_curve.times_ms.size(); ++t)
                values.push_back(result.time_curve.coords(static_cast<Eigen::Index>(t), a - 1));
            result.extrema.emplace_back(a, detect_extrema(result.time_curve.times_ms, values,
                                                          spec.smooth_bins, spec.prominence_frac));
        }
    }
    return result;
}

// ---- comparisons -----------------------------------------------------------

struct CompareResult {
    CompareSpec spec;
    CosineTable cosine;     // type == cosine
    nlohmann::json record;  // full-precision result document
};

namespace detail {

inline const RecipeResult& find_recipe(const std::vector<RecipeResult>& recipes, const std::string& name,
                                       const std::string& what) {
    for (const auto& r : recipes)
        if (r.spec.name == name) return r;
    fail(what + ": no recipe named '" + name + "' (or it failed)");
}

/// Axis coordinates of rows matched across two attribute splits.
inline std::pair<std::vector<double>, std::vector<double>> matched_coords(const CaSolution& sol,
                                                                          const CompareSpec& spec) {
    const int a = sol.axis_index(spec.axis);
    require(!sol.row_attrs.empty(), "compare '" + spec.id + "': solution rows carry no attributes");
    std::map<std::string, double> side_a, side_b;
    for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
        const AttrMap& attrs = sol.row_attrs[static_cast<std::size_t>(i)];
        auto split = attrs.find(spec.split_key);
        auto match = attrs.find(spec.match_key);
        if (split == attrs.end() || match == attrs.end()) continue;
        if (split->second == spec.split_a)
            require(side_a.emplace(match->second, sol.row_coords(i, a)).second,
                    "compare '" + spec.id + "': duplicate " + spec.match_key + "=" + match->second);
        else if (split->second == spec.split_b)
            require(side_b.emplace(match->second, sol.row_coords(i, a)).second,
                    "compare '" + spec.id + "': duplicate " + spec.match_key + "=" + match->second);
    }
    std::vector<double> x, y;
    for (const auto& [key, va] : side_a) {
        auto it = side_b.find(key);
        if (it != side_b.end()) {
            x.push_back(va);
            y.push_back(it->second);
        }
    }
    require(x.size() >= 2, "compare '" + spec.id + "': fewer than 2 matched pairs");
    return {x, y};
}

}  // namespace detail

inline CompareResult run_compare(const CompareSpec& spec, const std::vector<RecipeResult>& recipes) {
    CompareResult result;
    result.spec = spec;
    nlohmann::json& rec = result.record;
    rec["id"] = spec.id;
    rec["type"] = spec.type;

    if (spec.type == "cosine") {
        const auto& ra = detail::find_recipe(recipes, spec.a, "compare '" + spec.id + "'");
        const auto& rb = detail::find_recipe(recipes, spec.b, "compare '" + spec.id + "'");
        result.cosine = cosine_table(ra.solution, rb.solution, spec.axes_a, spec.axes_b);
        result.cosine.name_a = spec.a;
        result.cosine.name_b = spec.b;
        rec["a"] = spec.a;
        rec["b"] = spec.b;
        rec["axes_a"] = result.cosine.axes_a;
        rec["axes_b"] = result.cosine.axes_b;
        rec["n_shared_cols"] = result.cosine.n_shared_cols;
        rec["values"] = detail::matrix_to_json(result.cosine.values);
        return result;
    }

    const auto& recipe = detail::find_recipe(recipes, spec.recipe, "compare '" + spec.id + "'");
    rec["recipe"] = spec.recipe;
    rec["axis"] = spec.axis;
    if (spec.type == "pearson") {
        auto [x, y] = detail::matched_coords(recipe.solution, spec);
        const PearsonResult p = pearson_correlation(x, y);
        rec["n"] = p.n;
        rec["r"] = p.r;
        rec["t"] = p.t;
        rec["df"] = p.df;
        rec["p"] = p.p;
    } else if (spec.type == "sign_test") {
        auto [x, y] = detail::matched_coords(recipe.solution, spec);
        const SignTestResult s = sign_test(x, y);
        rec["n_positive"] = s.n_positive;
        rec["n_negative"] = s.n_negative;
        rec["n_zero"] = s.n_zero;
        rec["p"] = s.p;
    } else if (spec.type == "anova") {
        const CaSolution& sol = recipe.solution;
        const int a = sol.axis_index(spec.axis);
        require(!sol.row_attrs.empty(), "compare '" + spec.id + "': solution rows carry no attributes");
        std::map<std::string, std::vector<double>> by_group;
        for (Eigen::Index i = 0; i < sol.n_rows(); ++i) {
            const AttrMap& attrs = sol.row_attrs[static_cast<std::size_t>(i)];
            auto it = attrs.find(spec.group_key);
            if (it != attrs.end()) by_group[it->second].push_back(sol.row_coords(i, a));
        }
        require(by_group.size() >= 2, "compare '" + spec.id + "': fewer than 2 groups");
        std::vector<std::vector<double>> groups;
        nlohmann::json group_names = nlohmann::json::array();
        for (const auto& [name, values] : by_group) {
            group_names.push_back(name);
            groups.push_back(values);
        }
        const AnovaResult an = anova_oneway(groups);
        rec["groups"] = group_names;
        rec["f"] = an.f;
        rec["df_between"] = an.df_between;
        rec["df_within"] = an.df_within;
        rec["p"] = an.p;
    }
    return result;
}

// ---- the full run ----------------------------------------------------------

struct ReportBundle {
    PipelineConfig config;
    std::string config_hash;
    PreparedData data;
    std::vector<RecipeResult> recipes;
    std::vector<CompareResult> compares;
    std::vector<std::string> failures;
    std::map<std::string, std::string> file_hashes;  // relative path -> fnv-1a hex
};

namespace detail {

inline void emit_file(ReportBundle& bundle, const std::filesystem::path& root, const std::string& rel,
                      const std::string& content) {
    const auto path = root / rel;
    std::filesystem::create_directories(path.parent_path());
    write_text_file(path, content);
    bundle.file_hashes[rel] = hex64(fnv1a64(content));
}

inline void emit_recipe(ReportBundle& bundle, const std::filesystem::path& root, const RecipeResult& r) {
    const std::string base = "recipes/" + r.spec.name + "/";
    emit_file(bundle, root, base + "solution.json", solution_to_json(r.solution).dump());
    emit_file(bundle, root, base + "inertia.csv", inertia_csv(r.solution));
    emit_file(bundle, root, base + "row_coords.csv", row_coords_csv(r.solution));
    emit_file(bundle, root, base + "extrema.csv", extrema_csv(r.extrema));
    emit_file(bundle, root, base + "factor_map.svg",
              factor_map_svg(r.solution, 1, r.solution.n_axes() >= 2 ? 2 : 1));

    if (r.spec.source == "conditions") {
        emit_file(bundle, root, base + "groups.csv", groups_csv(r.groups));
        for (std::size_t i = 0; i < r.curves.size(); ++i) {
            const int axis = r.curves[i].axis;
            emit_file(bundle, root, base + strfmt("curves_axis%d.csv", axis), curves_csv(r.curves[i]));
            emit_file(bundle, root, base + strfmt("curves_axis%d.svg", axis),
                      curves_panel_svg(r.curves[i], r.extrema[i].second, bundle.data.montage));
        }
    } else {
        emit_file(bundle, root, base + "col_coords.csv", col_coords_csv(r.solution));
        emit_file(bundle, root, base + "time_curves.csv", time_curve_csv(r.time_curve));
        std::vector<Extremum> axis1 = r.extrema.empty() ? std::vector<Extremum>{} : r.extrema.front().second;
        emit_file(bundle, root, base + "time_curves.svg",
                  time_curves_svg(r.time_curve, r.matrix, axis1, bundle.data.montage));
    }
}

inline void emit_compare(ReportBundle& bundle, const std::filesystem::path& root, const CompareResult& c) {
    const std::string base = "compare/" + c.spec.id;
    emit_file(bundle, root, base + ".json", c.record.dump(1) + "\n");
    if (c.spec.type == "cosine") emit_file(bundle, root, base + ".csv", cosine_csv(c.cosine));
}

inline std::string montage_csv_text(const Montage& m) {
    CsvBuilder csv;
    for (const auto& e : m.entries)
        csv.row({e.label, strfmt(fmt_full, e.x), strfmt(fmt_full, e.y), strfmt(fmt_full, e.z),
                 e.peripheral ? "1" : "0"});
    return csv.text();
}

}  // namespace detail

/// Executes preprocess, matrices, encoding, CA, profiles, and comparisons,
/// writing everything under config.output_dir. Per-recipe failures are
/// collected in bundle.failures; I/O errors and config errors throw.
inline ReportBundle run_pipeline(const PipelineConfig& cfg) {
    ReportBundle bundle;
    bundle.config = cfg;
    bundle.config_hash = hex64(fnv1a64(cfg.raw.dump()));
    const std::filesystem::path root = cfg.output_dir;
    std::filesystem::create_directories(root);

    bundle.data = prepare(cfg);

    for (const auto& spec : cfg.recipes) {
        try {
            bundle.recipes.push_back(run_recipe(spec, bundle.data, bundle.config_hash));
        } catch (const std::exception& e) {
            bundle.failures.push_back("recipe " + spec.name + ": " + e.what());
        }
    }
    for (const auto& spec : cfg.compares) {
        try {
            bundle.compares.push_back(run_compare(spec, bundle.recipes));
        } catch (const std::exception& e) {
            bundle.failures.push_back("compare " + spec.id + ": " + e.what());
        }
    }

    for (const auto& r : bundle.recipes) detail::emit_recipe(bundle, root, r);
    for (const auto& c : bundle.compares) detail::emit_compare(bundle, root, c);
    detail::emit_file(bundle, root, "montage.csv", detail::montage_csv_text(bundle.data.montage));
    {
        nlohmann::json stats;
        for (const auto& [name, st] : bundle.data.stats) {
            nlohmann::json js;
            js["word_events"] = st.word_events;
            js["word_kept"] = st.word_kept;
            js["word_rejected"] = st.word_rejected;
            js["phrase_events"] = st.phrase_events;
            js["phrase_kept"] = st.phrase_kept;
            js["phrase_rejected"] = st.phrase_rejected;
            js["skipped_events"] = st.skipped;
            stats[name] = std::move(js);
        }
        detail::emit_file(bundle, root, "preprocess_stats.json", stats.dump(1) + "\n");
    }

    nlohmann::json manifest;
    manifest["format"] = "corrdyn-manifest";
    manifest["version"] = 1;
    manifest["config"] = cfg.raw;
    manifest["config_hash"] = bundle.config_hash;
    manifest["seed"] = cfg.seed;
    nlohmann::json files;
    for (const auto& [rel, hash] : bundle.file_hashes) files[rel] = hash;
    manifest["files"] = std::move(files);
    manifest["failures"] = bundle.failures;
    {
        nlohmann::json names = nlohmann::json::array();
        for (const auto& r : bundle.recipes) names.push_back(r.spec.name);
        manifest["recipes"] = std::move(names);
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& c : bundle.compares) ids.push_back(c.spec.id);
        manifest["compares"] = std::move(ids);
    }
    const std::string manifest_text = manifest.dump(1) + "\n";
    write_text_file(root / "manifest.json", manifest_text);
    return bundle;
}

}  // namespace corrdyn
