#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gait/types.hpp"

namespace gait {

/// Shortest decimal form that parses back to the exact same double.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw CorruptFile("bad float field: '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_i64(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw CorruptFile("bad integer field: '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw CorruptFile("bad unsigned field: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline constexpr std::string_view kSessionCsvHeader =
    "t_us,ax,ay,az,wx,wy,wz,qw,qx,qy,qz,mx,my,mz,label";

inline void write_session_csv(std::ostream& os, const SessionRecording& s) {
    os << kSessionCsvHeader << '\n';
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const RawImuSample& r = s.samples[i];
        os << r.t_us << ',' << fmt_double(r.a_body[0]) << ','
           << fmt_double(r.a_body[1]) << ',' << fmt_double(r.a_body[2]) << ','
           << fmt_double(r.omega_body[0]) << ',' << fmt_double(r.omega_body[1])
           << ',' << fmt_double(r.omega_body[2]) << ','
           << fmt_double(r.orientation.w) << ',' << fmt_double(r.orientation.x)
           << ',' << fmt_double(r.orientation.y) << ','
           << fmt_double(r.orientation.z) << ',';
        if (r.mag) {
            os << fmt_double((*r.mag)[0]) << ',' << fmt_double((*r.mag)[1])
               << ',' << fmt_double((*r.mag)[2]);
        } else {
            os << ",,";
        }
        os << ',';
        if (!s.labels.empty()) os << phase_code(s.labels[i]);
        os << '\n';
    }
}

inline void save_session_csv(const std::filesystem::path& path,
                             const SessionRecording& s) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    write_session_csv(f, s);
    if (!f) throw IoError("write failed: " + path.string());
}

inline SessionRecording read_session_csv(std::istream& is,
                                         const std::string& name = "<stream>") {
    SessionRecording s;
    std::string line;
    if (!std::getline(is, line)) throw CorruptFile(name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kSessionCsvHeader)
        throw CorruptFile(name + ": unexpected header '" + line + "'");
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        auto f = split_fields(line, ',');
        if (f.size() != 15)
            throw CorruptFile(name + ": row " + std::to_string(row) + " has " +
                              std::to_string(f.size()) + " fields, want 15");
        RawImuSample r;
        r.t_us = parse_i64(f[0]);
        for (int k = 0; k < 3; ++k) r.a_body[k] = parse_double(f[1 + k]);
        for (int k = 0; k < 3; ++k) r.omega_body[k] = parse_double(f[4 + k]);
        r.orientation = {parse_double(f[7]), parse_double(f[8]),
                         parse_double(f[9]), parse_double(f[10])};
        const bool has_mag = !(f[11].empty() && f[12].empty() && f[13].empty());
        if (has_mag)
            r.mag = Vec3{parse_double(f[11]), parse_double(f[12]),
                         parse_double(f[13])};
        if (!f[14].empty()) {
            if (s.labels.size() != s.samples.size())
                throw CorruptFile(name + ": label column must be all-present or all-empty");
            s.labels.push_back(phase_from_code(static_cast<int>(parse_i64(f[14]))));
        } else if (!s.labels.empty()) {
            throw CorruptFile(name + ": label column must be all-present or all-empty");
        }
        s.samples.push_back(r);
    }
    return s;
}

inline SessionRecording load_session_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    SessionRecording s = read_session_csv(f, path.string());
    s.meta.subject = path.stem().string();
    return s;
}

inline constexpr std::string_view kStepLogHeader =
    "start_us,end_us,raw_score,norm_score,phases";

inline void write_step_log_row(std::ostream& os, const StepInterval& e) {
    os << e.start_us << ',' << e.end_us << ',' << fmt_double(e.raw_score) << ','
       << fmt_double(e.norm_score) << ',';
    for (std::size_t i = 0; i < e.phases_seen.size(); ++i) {
        if (i) os << '-';
        os << phase_code(e.phases_seen[i]);
    }
    os << '\n';
}

inline void write_step_log(std::ostream& os, const std::vector<StepInterval>& steps) {
    os << kStepLogHeader << '\n';
    for (const StepInterval& e : steps) write_step_log_row(os, e);
}

inline void save_step_log(const std::filesystem::path& path,
                          const std::vector<StepInterval>& steps) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    write_step_log(f, steps);
}

inline std::vector<StepInterval> read_step_log(std::istream& is,
                                               const std::string& name = "<stream>") {
    std::vector<StepInterval> out;
    std::string line;
    if (!std::getline(is, line)) throw CorruptFile(name + ": empty step log");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kStepLogHeader)
        throw CorruptFile(name + ": unexpected step log header");
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_fields(line, ',');
        if (f.size() != 5) throw CorruptFile(name + ": bad step row");
        StepInterval e;
        e.start_us = parse_i64(f[0]);
        e.end_us = parse_i64(f[1]);
        e.raw_score = parse_double(f[2]);
        e.norm_score = parse_double(f[3]);
        for (std::string_view part : split_fields(f[4], '-'))
            if (!part.empty())
                e.phases_seen.push_back(
                    phase_from_code(static_cast<int>(parse_i64(part))));
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace gait
