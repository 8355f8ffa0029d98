#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gait/phase.hpp"
#include "gait/quat.hpp"

namespace gait {

/// Standard gravity, m/s^2. No local calibration.
inline constexpr double kGravity = 9.80665;

/// One raw IMU frame as it arrives off the sensor. The magnetometer triple
/// is carried through file formats but never consumed by the pipeline.
struct RawImuSample {
    std::int64_t t_us = 0;
    Vec3 a_body{};     // m/s^2, body frame
    Vec3 omega_body{}; // rad/s, body frame
    Quat orientation{};
    std::optional<Vec3> mag; // uT, pass-through only
};

/// The 9-channel processed sample. Channel order is a file-format contract:
/// global gravity-free accel (x,y,z), filtered gyro (x,y,z), yaw, pitch, roll.
using MeasurementVector = std::array<double, 9>;

enum Channel : int {
    kAccX = 0, kAccY, kAccZ,
    kGyrX, kGyrY, kGyrZ,
    kYaw, kPitch, kRoll,
};

inline constexpr int kNumChannels = 9;

struct WindowConfig {
    int h = 8;
    int stride = 2;
    double sample_rate_hz = 100.0;

    void validate() const {
        if (h < 1) throw ConfigError("window.h must be >= 1");
        if (stride < 1) throw ConfigError("window.stride must be >= 1");
        if (!(sample_rate_hz > 0)) throw ConfigError("window.sample_rate_hz must be > 0");
    }
};

/// An h x 9 slice of the measurement stream, rows oldest to newest.
struct WindowTensor {
    int h = 0;
    std::vector<double> data; // row-major h x 9
    std::int64_t end_t_us = 0;
    std::optional<GaitPhase> label;

    double* row(int t) { return data.data() + static_cast<std::size_t>(t) * kNumChannels; }
    const double* row(int t) const {
        return data.data() + static_cast<std::size_t>(t) * kNumChannels;
    }
};

struct SessionMeta {
    std::string subject;
    std::string strategy;        // gait strategy tag, empty if unknown
    std::uint64_t seed = 0;      // generator seed, 0 if not synthetic
};

/// A timestamped raw recording, optionally with per-frame ground truth.
struct SessionRecording {
    SessionMeta meta;
    std::vector<RawImuSample> samples;
    std::vector<GaitPhase> labels; // empty, or one per sample

    bool labeled() const { return !labels.empty(); }
    std::size_t size() const { return samples.size(); }
};

/// A validated step: time interval, score, and the contributing phases in
/// confirmation order.
struct StepInterval {
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    double raw_score = 0.0;
    double norm_score = 0.0;
    std::vector<GaitPhase> phases_seen;
};

struct ValidationIssue {
    std::size_t index = 0;
    std::string kind;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
};

namespace detail {
inline bool finite3(const Vec3& v) {
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}
} // namespace detail

/// Structural checks on a session: strictly increasing timestamps, finite
/// numerics, normalizable orientation, label/sample length agreement.
inline ValidationReport validate_session(const SessionRecording& s) {
    ValidationReport report;
    auto add = [&](std::size_t i, std::string kind, std::string msg) {
        report.issues.push_back({i, std::move(kind), std::move(msg)});
    };
    if (!s.labels.empty() && s.labels.size() != s.samples.size()) {
        add(0, "label_mismatch",
            "labels length " + std::to_string(s.labels.size()) + " vs " +
                std::to_string(s.samples.size()) + " samples");
    }
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const RawImuSample& r = s.samples[i];
        if (i > 0 && r.t_us <= s.samples[i - 1].t_us)
            add(i, "non_monotonic", "timestamp does not increase");
        if (!detail::finite3(r.a_body)) add(i, "non_finite", "a_body");
        if (!detail::finite3(r.omega_body)) add(i, "non_finite", "omega_body");
        const Quat& q = r.orientation;
        if (!(std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) &&
              std::isfinite(q.z)))
            add(i, "non_finite", "orientation");
        else if (!(quat_norm(q) > 1e-9))
            add(i, "degenerate_orientation", "quaternion norm ~ 0");
        if (r.mag && !detail::finite3(*r.mag)) add(i, "non_finite", "mag");
    }
    return report;
}

} // namespace gait
