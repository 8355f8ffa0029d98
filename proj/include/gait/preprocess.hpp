#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gait/lowpass.hpp"
#include "gait/types.hpp"

namespace gait {

struct PreprocessConfig {
    double cutoff_hz = 5.0;
    int filter_order = 2;
    std::string euler_convention = "zyx"; // only ZYX intrinsic is supported

    void validate() const {
        if (euler_convention != "zyx")
            throw ConfigError("unsupported euler convention: " + euler_convention);
        if (filter_order != 1 && filter_order != 2)
            throw ConfigError("preprocess.filter_order must be 1 or 2");
        if (!(cutoff_hz > 0)) throw ConfigError("preprocess.cutoff_hz must be > 0");
    }
};

inline LowPassState make_gyro_filter(const PreprocessConfig& cfg,
                                     double sample_rate_hz) {
    cfg.validate();
    return LowPassState(
        butterworth_lowpass(cfg.filter_order, cfg.cutoff_hz, sample_rate_hz));
}

/// Rotate a body-frame acceleration into the global frame and subtract
/// gravity. A stationary sensor maps to ~(0,0,0) regardless of pose.
inline Vec3 remove_gravity(const Vec3& a_body, const Quat& q_unit) {
    Vec3 g = quat_rotate(q_unit, a_body);
    g[2] -= kGravity;
    return g;
}

/// One causal step of the measurement pipeline: normalize the orientation,
/// de-gravity the accel, filter the gyro, append the Euler triple.
inline MeasurementVector assemble_measurement(const RawImuSample& raw,
                                              LowPassState& filt) {
    const Quat q = quat_normalize(raw.orientation);
    const Vec3 acc = remove_gravity(raw.a_body, q);
    const Vec3 gyr = lowpass_step(filt, raw.omega_body);
    const EulerAngles e = quat_to_euler(q);
    return {acc[0], acc[1], acc[2], gyr[0], gyr[1], gyr[2],
            e.yaw,  e.pitch, e.roll};
}

/// Run the whole session through the causal pipeline.
inline std::vector<MeasurementVector> process_session(
    const SessionRecording& s, const PreprocessConfig& cfg,
    double sample_rate_hz) {
    LowPassState filt = make_gyro_filter(cfg, sample_rate_hz);
    std::vector<MeasurementVector> out;
    out.reserve(s.samples.size());
    for (const RawImuSample& r : s.samples)
        out.push_back(assemble_measurement(r, filt));
    return out;
}

/// Slice a measurement stream into h x 9 windows starting at 0, stride,
/// 2*stride, ... Window labels, when labels are given, come from the last
/// frame: the classifier predicts the current phase. Timestamps may be
/// empty, in which case frame index spacing at the configured rate is used.
inline std::vector<WindowTensor> segment_windows(
    std::span<const MeasurementVector> vectors,
    std::span<const std::int64_t> t_us, std::span<const GaitPhase> labels,
    const WindowConfig& cfg) {
    cfg.validate();
    if (!labels.empty() && labels.size() != vectors.size())
        throw LengthError("labels/vectors length mismatch");
    if (!t_us.empty() && t_us.size() != vectors.size())
        throw LengthError("timestamps/vectors length mismatch");
    std::vector<WindowTensor> out;
    const std::int64_t T = static_cast<std::int64_t>(vectors.size());
    if (T < cfg.h) return out;
    const std::int64_t n = (T - cfg.h) / cfg.stride + 1;
    out.reserve(static_cast<std::size_t>(n));
    const double us_per_frame = 1e6 / cfg.sample_rate_hz;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t begin = i * cfg.stride;
        const std::int64_t last = begin + cfg.h - 1;
        WindowTensor w;
        w.h = cfg.h;
        w.data.resize(static_cast<std::size_t>(cfg.h) * kNumChannels);
        for (int r = 0; r < cfg.h; ++r)
            for (int c = 0; c < kNumChannels; ++c)
                w.data[static_cast<std::size_t>(r) * kNumChannels + c] =
                    vectors[static_cast<std::size_t>(begin + r)][static_cast<std::size_t>(c)];
        w.end_t_us = t_us.empty()
                         ? static_cast<std::int64_t>(std::llround(us_per_frame * static_cast<double>(last)))
                         : t_us[static_cast<std::size_t>(last)];
        if (!labels.empty()) w.label = labels[static_cast<std::size_t>(last)];
        out.push_back(std::move(w));
    }
    return out;
}

/// Per-channel z-score statistics, fitted on training windows only and
/// stored inside the model container.
struct NormStats {
    std::array<double, kNumChannels> mean{};
    std::array<double, kNumChannels> std{};
};

inline NormStats fit_normalizer(std::span<const WindowTensor> windows) {
    if (windows.empty()) throw InsufficientData("no windows to fit normalizer");
    NormStats st;
    std::array<double, kNumChannels> sum{}, sumsq{};
    std::size_t n = 0;
    for (const WindowTensor& w : windows) {
        for (int r = 0; r < w.h; ++r) {
            const double* row = w.row(r);
            for (int c = 0; c < kNumChannels; ++c) sum[c] += row[c];
            ++n;
        }
    }
    for (int c = 0; c < kNumChannels; ++c) st.mean[c] = sum[c] / static_cast<double>(n);
    for (const WindowTensor& w : windows) {
        for (int r = 0; r < w.h; ++r) {
            const double* row = w.row(r);
            for (int c = 0; c < kNumChannels; ++c) {
                const double d = row[c] - st.mean[c];
                sumsq[c] += d * d;
            }
        }
    }
    for (int c = 0; c < kNumChannels; ++c) {
        st.std[c] = std::sqrt(sumsq[c] / static_cast<double>(n));
        if (!(st.std[c] > 1e-12)) throw DegenerateChannel(c);
    }
    return st;
}

inline void apply_normalizer_inplace(const NormStats& st, WindowTensor& w) {
    for (int r = 0; r < w.h; ++r) {
        double* row = w.row(r);
        for (int c = 0; c < kNumChannels; ++c)
            row[c] = (row[c] - st.mean[c]) / st.std[c];
    }
}

inline WindowTensor apply_normalizer(const NormStats& st, const WindowTensor& w) {
    WindowTensor out = w;
    apply_normalizer_inplace(st, out);
    return out;
}

} // namespace gait
