#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corrdyn/common.hpp"

namespace corrdyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using AttrMap = std::map<std::string, std::string>;

/// Signed millisecond interval relative to an event onset; half-open [start, end).
struct TimeWindow {
    double start_ms = 0.0;
    double end_ms = 0.0;

    TimeWindow() = default;
    TimeWindow(double start, double end) : start_ms(start), end_ms(end) {
        require(start_ms < end_ms, strfmt("TimeWindow: start %g ms must precede end %g ms", start, end));
    }

    double length_ms() const { return end_ms - start_ms; }

    bool contains(const TimeWindow& inner) const {
        return inner.start_ms >= start_ms && inner.end_ms <= end_ms;
    }
};

/// Multichannel sampled signal, amplitudes in microvolts.
/// data is channels x samples; start_time_ms is the time of sample 0.
struct Recording {
    std::vector<std::string> channels;
    double fs = 0.0;
    Matrix data;
    double start_time_ms = 0.0;

    Recording() = default;
    Recording(std::vector<std::string> ch, double fs_hz, Matrix d, double start_ms = 0.0)
        : channels(std::move(ch)), fs(fs_hz), data(std::move(d)), start_time_ms(start_ms) {
        validate();
    }

    void validate() const {
        require(fs > 0.0, "Recording: sampling rate must be positive");
        require(static_cast<Eigen::Index>(channels.size()) == data.rows(),
                strfmt("Recording: %zu channel labels but %ld data rows", channels.size(), static_cast<long>(data.rows())));
        std::set<std::string> seen(channels.begin(), channels.end());
        require(seen.size() == channels.size(), "Recording: duplicate channel labels");
    }

    Eigen::Index n_channels() const { return data.rows(); }
    Eigen::Index n_samples() const { return data.cols(); }

    Eigen::Index channel_index(const std::string& label) const {
        auto it = std::find(channels.begin(), channels.end(), label);
        require(it != channels.end(), "unknown channel label '" + label + "'");
        return static_cast<Eigen::Index>(it - channels.begin());
    }
};

/// Returns a Recording with exactly the requested channels, in the requested order.
inline Recording select_channels(const Recording& rec, const std::vector<std::string>& labels) {
    Matrix out(static_cast<Eigen::Index>(labels.size()), rec.n_samples());
    for (std::size_t i = 0; i < labels.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = rec.data.row(rec.channel_index(labels[i]));
    return Recording(labels, rec.fs, std::move(out), rec.start_time_ms);
}

struct MontageEntry {
    std::string label;
    double x = 0.0, y = 0.0, z = 0.0;
    bool peripheral = false;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Electrode positions in head coordinates (unit-sphere scale, +x right, +y front, +z up).
struct Montage {
    std::vector<MontageEntry> entries;

    Montage() = default;
    explicit Montage(std::vector<MontageEntry> e) : entries(std::move(e)) { validate(); }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& e : entries) {
            require(seen.insert(e.label).second, "Montage: duplicate label '" + e.label + "'");
            double n = e.norm();
            require(n >= 0.5 && n <= 1.5,
                    strfmt("Montage: '%s' coordinate norm %.3f outside sanity band [0.5, 1.5]", e.label.c_str(), n));
        }
    }

    std::size_t size() const { return entries.size(); }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.label);
        return out;
    }

    std::vector<std::string> non_peripheral_labels() const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (!e.peripheral) out.push_back(e.label);
        return out;
    }

    const MontageEntry& find(const std::string& label) const {
        for (const auto& e : entries)
            if (e.label == label) return e;
        fail("Montage: electrode '" + label + "' not present");
    }
};

struct Event {
    long long onset_sample = 0;
    std::string condition_label;
    AttrMap attributes;
};

/// Stimulus markers; onsets are non-decreasing sample indices.
struct EventList {
    std::vector<Event> events;

    EventList() = default;
    explicit EventList(std::vector<Event> ev) : events(std::move(ev)) { validate(); }

    void validate() const {
        for (std::size_t i = 1; i < events.size(); ++i)
            require(events[i].onset_sample >= events[i - 1].onset_sample,
                    strfmt("EventList: non-monotone onsets at index %zu (%lld after %lld)", i,
                           events[i].onset_sample, events[i - 1].onset_sample));
    }

    void validate_against(const Recording& rec) const {
        for (const auto& e : events)
            require(e.onset_sample >= 0 && e.onset_sample < rec.n_samples(),
                    strfmt("EventList: onset %lld outside recording [0, %ld)", e.onset_sample,
                           static_cast<long>(rec.n_samples())));
    }

    std::size_t size() const { return events.size(); }
};

}  // namespace corrdyn
