#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "corrdyn/types.hpp"

// File containers. The recording format is one UTF-8 header line
//   channels=<n>;fs=<hz>;samples=<m>;unit=uV;labels=<l1,l2,...>[;format=csv|bin][;start_ms=<ms>][;<k>=<v>...]
// followed by the sample block: CSV (one line per channel) or raw
// little-endian float64, channel-major.

namespace corrdyn {

enum class RecordingFormat { Csv, Binary };

namespace detail {

inline std::map<std::string, std::string> parse_header_fields(const std::string& line, const std::string& ctx) {
    std::map<std::string, std::string> fields;
    for (const auto& part : split(line, ';')) {
        if (trim(part).empty()) continue;
        auto eq = part.find('=');
        require(eq != std::string::npos, ctx + ": malformed header field '" + part + "'");
        fields[trim(part.substr(0, eq))] = trim(part.substr(eq + 1));
    }
    return fields;
}

}  // namespace detail

inline void save_recording(const std::filesystem::path& path, const Recording& rec,
                           RecordingFormat format = RecordingFormat::Csv,
                           const std::map<std::string, std::string>& extras = {}) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    std::string labels;
    for (std::size_t i = 0; i < rec.channels.size(); ++i) {
        require(rec.channels[i].find_first_of(",;\n") == std::string::npos,
                "channel label '" + rec.channels[i] + "' contains a reserved character");
        if (i) labels += ',';
        labels += rec.channels[i];
    }
    out << "channels=" << rec.n_channels() << ";fs=" << fmt_full(rec.fs) << ";samples=" << rec.n_samples()
        << ";unit=uV;labels=" << labels << ";format=" << (format == RecordingFormat::Csv ? "csv" : "bin");
    if (rec.start_time_ms != 0.0) out << ";start_ms=" << fmt_full(rec.start_time_ms);
    for (const auto& [k, v] : extras) out << ';' << k << '=' << v;
    out << '\n';
    if (format == RecordingFormat::Csv) {
        for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
            for (Eigen::Index s = 0; s < rec.n_samples(); ++s) {
                if (s) out << ',';
                out << fmt_full(rec.data(c, s));
            }
            out << '\n';
        }
    } else {
        std::vector<double> row(static_cast<std::size_t>(rec.n_samples()));
        for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
            for (Eigen::Index s = 0; s < rec.n_samples(); ++s) row[static_cast<std::size_t>(s)] = rec.data(c, s);
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(double)));
        }
    }
    require(out.good(), "write failed for '" + path.string() + "'");
}

struct LoadedRecording {
    Recording recording;
    std::map<std::string, std::string> extras;  // header fields beyond the core set
};

inline LoadedRecording load_recording_with_extras(const std::filesystem::path& path) {
    const std::string ctx = path.string();
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open recording '" + ctx + "'");
    std::string header;
    require(static_cast<bool>(std::getline(in, header)), ctx + ": missing header line");
    auto fields = detail::parse_header_fields(header, ctx);
    for (const char* key : {"channels", "fs", "samples"})
        require(fields.count(key), ctx + ": header lacks '" + key + "'");

    const auto n_channels = parse_int(fields["channels"], ctx + ": channels");
    const auto n_samples = parse_int(fields["samples"], ctx + ": samples");
    const double fs = parse_double(fields["fs"], ctx + ": fs");
    require(n_channels > 0 && n_samples >= 0, ctx + ": non-positive dimensions");
    if (fields.count("unit")) require(fields["unit"] == "uV", ctx + ": unsupported unit '" + fields["unit"] + "'");

    std::vector<std::string> labels;
    if (fields.count("labels") && !fields["labels"].empty()) {
        labels = split(fields["labels"], ',');
        require(static_cast<long long>(labels.size()) == n_channels,
                ctx + strfmt(": channel mismatch (%zu labels, %lld declared)", labels.size(), n_channels));
    } else {
        for (long long i = 1; i <= n_channels; ++i) labels.push_back(strfmt("ch%lld", i));
    }

    const std::string format = fields.count("format") ? fields["format"] : "csv";
    Matrix data(n_channels, n_samples);
    if (format == "csv") {
        std::string line;
        long long rows = 0;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            require(rows < n_channels, ctx + ": channel mismatch (more data rows than declared channels)");
            auto cells = split(line, ',');
            require(static_cast<long long>(cells.size()) == n_samples,
                    ctx + strfmt(": row %lld has %zu samples, expected %lld", rows, cells.size(), n_samples));
            for (long long s = 0; s < n_samples; ++s)
                data(rows, s) = parse_double(cells[static_cast<std::size_t>(s)], ctx + strfmt(": row %lld", rows));
            ++rows;
        }
        require(rows == n_channels,
                ctx + strfmt(": channel mismatch (%lld data rows, %lld declared)", rows, n_channels));
    } else if (format == "bin") {
        std::vector<double> row(static_cast<std::size_t>(n_samples));
        for (long long c = 0; c < n_channels; ++c) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
            require(in.gcount() == static_cast<std::streamsize>(row.size() * sizeof(double)),
                    ctx + ": channel mismatch (binary block shorter than declared)");
            for (long long s = 0; s < n_samples; ++s) data(c, s) = row[static_cast<std::size_t>(s)];
        }
        char probe;
        require(!in.read(&probe, 1), ctx + ": binary block longer than declared");
    } else {
        fail(ctx + ": unknown format '" + format + "'");
    }

    double start_ms = fields.count("start_ms") ? parse_double(fields["start_ms"], ctx + ": start_ms") : 0.0;
    LoadedRecording out{Recording(std::move(labels), fs, std::move(data), start_ms), {}};
    for (auto& [k, v] : fields)
        if (k != "channels" && k != "fs" && k != "samples" && k != "unit" && k != "labels" && k != "format" &&
            k != "start_ms")
            out.extras.emplace(k, v);
    return out;
}

inline Recording load_recording(const std::filesystem::path& path) {
    return load_recording_with_extras(path).recording;
}

inline void save_montage(const std::filesystem::path& path, const Montage& montage) {
    std::ofstream out(path);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    for (const auto& e : montage.entries)
        out << e.label << ',' << fmt_full(e.x) << ',' << fmt_full(e.y) << ',' << fmt_full(e.z) << ','
            << (e.peripheral ? 1 : 0) << '\n';
    require(out.good(), "write failed for '" + path.string() + "'");
}

inline Montage load_montage(const std::filesystem::path& path) {
    const std::string ctx = path.string();
    std::ifstream in(path);
    require(in.good(), "cannot open montage '" + ctx + "'");
    std::vector<MontageEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto cells = split(line, ',');
        require(cells.size() == 4 || cells.size() == 5, ctx + ": expected 'label,x,y,z[,peripheral]': '" + line + "'");
        MontageEntry e;
        e.label = trim(cells[0]);
        e.x = parse_double(cells[1], ctx);
        e.y = parse_double(cells[2], ctx);
        e.z = parse_double(cells[3], ctx);
        if (cells.size() == 5) {
            auto flag = parse_int(cells[4], ctx + ": peripheral flag");
            require(flag == 0 || flag == 1, ctx + ": peripheral flag must be 0 or 1");
            e.peripheral = flag == 1;
        }
        entries.push_back(std::move(e));
    }
    return Montage(std::move(entries));
}

inline void save_events(const std::filesystem::path& path, const EventList& events) {
    std::ofstream out(path);
    require(out.good(), "cannot open '" + path.string() + "' for writing");
    for (const auto& ev : events.events) {
        out << ev.onset_sample << ',' << ev.condition_label;
        if (!ev.attributes.empty()) {
            out << ',';
            bool first = true;
            for (const auto& [k, v] : ev.attributes) {
                if (!first) out << ';';
                out << k << '=' << v;
                first = false;
            }
        }
        out << '\n';
    }
    require(out.good(), "write failed for '" + path.string() + "'");
}

inline EventList load_events(const std::filesystem::path& path) {
    const std::string ctx = path.string();
    std::ifstream in(path);
    require(in.good(), "cannot open events '" + ctx + "'");
    std::vector<Event> events;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto cells = split(line, ',');
        require(cells.size() == 2 || cells.size() == 3, ctx + ": expected 'onset,label[,attrs]': '" + line + "'");
        Event ev;
        ev.onset_sample = parse_int(cells[0], ctx + ": onset");
        ev.condition_label = trim(cells[1]);
        if (cells.size() == 3 && !trim(cells[2]).empty())
            for (const auto& kv : split(cells[2], ';')) {
                auto eq = kv.find('=');
                require(eq != std::string::npos, ctx + ": malformed attribute '" + kv + "'");
                ev.attributes[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
            }
        events.push_back(std::move(ev));
    }
    return EventList(std::move(events));
}

}  // namespace corrdyn
