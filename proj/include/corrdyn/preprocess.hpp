#pragma once

#include <map>
#include <string>
#include <vector>

#include "corrdyn/io.hpp"
#include "corrdyn/types.hpp"

namespace corrdyn {

namespace detail {

inline long long ms_to_samples(double ms, double fs) { return std::llround(ms * fs / 1000.0); }

// Fixed association order; result does not depend on how work is batched.
inline Matrix pairwise_matrix_sum(std::span<const Matrix* const> parts) {
    if (parts.size() == 1) return *parts[0];
    const std::size_t h = parts.size() / 2;
    return pairwise_matrix_sum(parts.first(h)) + pairwise_matrix_sum(parts.subspan(h));
}

}  // namespace detail

/// Stimulus-locked signal segments of one condition; all epochs share shape.
struct EpochSet {
    std::string condition_label;
    AttrMap attributes;
    std::vector<std::string> channels;
    double fs = 0.0;
    TimeWindow window;
    std::vector<Matrix> epochs;  // channels x time, uV
    std::vector<char> kept;      // parallel to epochs

    std::size_t n_kept() const {
        std::size_t n = 0;
        for (char k : kept) n += k ? 1 : 0;
        return n;
    }
    std::size_t n_rejected() const { return epochs.size() - n_kept(); }
};

/// Per-condition averaged epoch (channels x time, uV).
struct ConditionERP {
    std::string condition_label;
    AttrMap attributes;
    std::vector<std::string> channels;
    double fs = 0.0;
    TimeWindow window;
    Matrix data;
    std::size_t n_epochs = 0;

    double time_of_sample(Eigen::Index i) const { return window.start_ms + 1000.0 * static_cast<double>(i) / fs; }

    Eigen::Index sample_of_time(double ms) const {
        return static_cast<Eigen::Index>(detail::ms_to_samples(ms - window.start_ms, fs));
    }
};

struct SkippedEvent {
    Event event;
    std::string reason;
};

struct EpochResult {
    std::map<std::string, EpochSet> by_condition;
    std::vector<SkippedEvent> skipped;
};

/// Cuts one epoch per event; events whose window leaves the recording are skipped and reported.
inline EpochResult epoch(const Recording& rec, const EventList& events, const TimeWindow& window) {
    events.validate_against(rec);
    const long long offset = detail::ms_to_samples(window.start_ms, rec.fs);
    const long long count = detail::ms_to_samples(window.length_ms(), rec.fs);
    require(count >= 1, "epoch: window shorter than one sample");

    EpochResult result;
    for (const auto& ev : events.events) {
        const long long first = ev.onset_sample + offset;
        if (first < 0 || first + count > rec.n_samples()) {
            result.skipped.push_back({ev, strfmt("window [%lld, %lld) outside recording [0, %ld)", first,
                                                 first + count, static_cast<long>(rec.n_samples()))});
            continue;
        }
        auto& set = result.by_condition[ev.condition_label];
        if (set.epochs.empty()) {
            set.condition_label = ev.condition_label;
            set.attributes = ev.attributes;
            set.channels = rec.channels;
            set.fs = rec.fs;
            set.window = window;
        }
        set.epochs.push_back(rec.data.middleCols(first, count));
        set.kept.push_back(1);
    }
    return result;
}

/// Kept iff the epoch's peak absolute amplitude is <= threshold; samples are never altered.
inline EpochSet reject_artifacts(const EpochSet& epochs, double threshold_uv) {
    require(threshold_uv > 0.0, "reject_artifacts: threshold must be positive");
    EpochSet out = epochs;
    for (std::size_t i = 0; i < out.epochs.size(); ++i)
        out.kept[i] = out.epochs[i].cwiseAbs().maxCoeff() <= threshold_uv ? 1 : 0;
    return out;
}

/// Cellwise arithmetic mean of the kept epochs.
inline ConditionERP average_condition(const EpochSet& epochs) {
    std::vector<const Matrix*> kept;
    for (std::size_t i = 0; i < epochs.epochs.size(); ++i)
        if (epochs.kept[i]) kept.push_back(&epochs.epochs[i]);
    require(!kept.empty(), "average_condition: zero kept epochs for '" + epochs.condition_label + "'");

    ConditionERP erp;
    erp.condition_label = epochs.condition_label;
    erp.attributes = epochs.attributes;
    erp.channels = epochs.channels;
    erp.fs = epochs.fs;
    erp.window = epochs.window;
    erp.data = detail::pairwise_matrix_sum(kept) / static_cast<double>(kept.size());
    erp.n_epochs = kept.size();
    return erp;
}

/// Equal-weight average of per-subject ERPs of the same condition.
inline ConditionERP grand_mean(const std::vector<ConditionERP>& erps) {
    require(!erps.empty(), "grand_mean: no ERPs");
    const auto& first = erps.front();
    std::vector<const Matrix*> parts;
    for (const auto& e : erps) {
        require(e.channels == first.channels, "grand_mean: channel sets differ");
        require(e.data.rows() == first.data.rows() && e.data.cols() == first.data.cols(),
                "grand_mean: shapes differ");
        require(e.fs == first.fs, "grand_mean: sampling rates differ");
        parts.push_back(&e.data);
    }
    ConditionERP out = first;
    out.data = detail::pairwise_matrix_sum(parts) / static_cast<double>(parts.size());
    out.n_epochs = erps.size();
    return out;
}

/// Subtracts the per-channel mean over the baseline window.
inline ConditionERP baseline_correct(const ConditionERP& erp, const TimeWindow& baseline) {
    require(erp.window.contains(baseline),
            strfmt("baseline_correct: baseline [%g, %g) ms outside epoch [%g, %g) ms", baseline.start_ms,
                   baseline.end_ms, erp.window.start_ms, erp.window.end_ms));
    const long long first = detail::ms_to_samples(baseline.start_ms - erp.window.start_ms, erp.fs);
    const long long count = detail::ms_to_samples(baseline.length_ms(), erp.fs);
    require(count >= 1, "baseline_correct: baseline shorter than one sample");

    ConditionERP out = erp;
    const Vector means = erp.data.middleCols(first, count).rowwise().mean();
    out.data = erp.data.colwise() - means;
    return out;
}

/// ERP container I/O: the recording format with condition metadata header fields.
inline void save_erp(const std::filesystem::path& path, const ConditionERP& erp,
                     RecordingFormat format = RecordingFormat::Csv) {
    std::map<std::string, std::string> extras;
    extras["condition"] = erp.condition_label;
    extras["n_epochs"] = strfmt("%zu", erp.n_epochs);
    if (!erp.attributes.empty()) {
        std::string enc;
        for (const auto& [k, v] : erp.attributes) {
            if (!enc.empty()) enc += '|';
            enc += k + ':' + v;
        }
        extras["attrs"] = enc;
    }
    Recording rec(erp.channels, erp.fs, erp.data, erp.window.start_ms);
    save_recording(path, rec, format, extras);
}

inline ConditionERP load_erp(const std::filesystem::path& path) {
    auto loaded = load_recording_with_extras(path);
    ConditionERP erp;
    erp.channels = loaded.recording.channels;
    erp.fs = loaded.recording.fs;
    const double start = loaded.recording.start_time_ms;
    erp.window = TimeWindow(start, start + 1000.0 * static_cast<double>(loaded.recording.n_samples()) /
                                       loaded.recording.fs);
    erp.data = std::move(loaded.recording.data);
    require(loaded.extras.count("condition"), path.string() + ": ERP file lacks 'condition' field");
    erp.condition_label = loaded.extras.at("condition");
    erp.n_epochs = loaded.extras.count("n_epochs")
                       ? static_cast<std::size_t>(parse_int(loaded.extras.at("n_epochs"), "n_epochs"))
                       : 1;
    if (loaded.extras.count("attrs"))
        for (const auto& kv : split(loaded.extras.at("attrs"), '|')) {
            auto colon = kv.find(':');
            require(colon != std::string::npos, path.string() + ": malformed attrs field");
            erp.attributes[kv.substr(0, colon)] = kv.substr(colon + 1);
        }
    return erp;
}

}  // namespace corrdyn
