#pragma once

#include <array>
#include <cmath>

#include "gait/errors.hpp"
#include "gait/quat.hpp"

namespace gait {

/// Biquad coefficients, direct form I:
///   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct BiquadCoeffs {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

    bool stable() const {
        // stability triangle for the denominator
        return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
    }
};

/// Butterworth low-pass, bilinear transform with pre-warping. order 1 maps
/// to a one-pole section (b2 = a2 = 0), order 2 to the standard biquad.
/// DC gain is exactly 1 by construction.
inline BiquadCoeffs butterworth_lowpass(int order, double cutoff_hz,
                                        double sample_rate_hz) {
    if (order != 1 && order != 2)
        throw ConfigError("low-pass filter order must be 1 or 2");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0))
        throw ConfigError("low-pass cutoff must lie in (0, fs/2)");
    const double k = std::tan(M_PI * cutoff_hz / sample_rate_hz);
    BiquadCoeffs c;
    if (order == 1) {
        const double norm = 1.0 / (1.0 + k);
        c.b0 = k * norm;
        c.b1 = k * norm;
        c.b2 = 0.0;
        c.a1 = (k - 1.0) * norm;
        c.a2 = 0.0;
    } else {
        const double q = 1.0 / std::sqrt(2.0);
        const double norm = 1.0 / (1.0 + k / q + k * k);
        c.b0 = k * k * norm;
        c.b1 = 2.0 * c.b0;
        c.b2 = c.b0;
        c.a1 = 2.0 * (k * k - 1.0) * norm;
        c.a2 = (1.0 - k / q + k * k) * norm;
    }
    return c;
}

/// Per-channel filter memory for the three gyro channels. The state is
/// step-matched on the first sample so the filter starts settled at the
/// first input value instead of ringing from zero.
struct LowPassState {
    BiquadCoeffs coeffs;
    std::array<double, 3> x1{}, x2{}, y1{}, y2{};
    bool primed = false;

    LowPassState() = default;
    explicit LowPassState(const BiquadCoeffs& c) : coeffs(c) {
        if (!c.stable()) throw ConfigError("unstable low-pass coefficients");
    }
};

inline Vec3 lowpass_step(LowPassState& st, const Vec3& in) {
    if (!st.primed) {
        for (int c = 0; c < 3; ++c) {
            st.x1[c] = st.x2[c] = in[c];
            st.y1[c] = st.y2[c] = in[c];
        }
        st.primed = true;
    }
    Vec3 out;
    const BiquadCoeffs& k = st.coeffs;
    for (int c = 0; c < 3; ++c) {
        const double y = k.b0 * in[c] + k.b1 * st.x1[c] + k.b2 * st.x2[c] -
                         k.a1 * st.y1[c] - k.a2 * st.y2[c];
        st.x2[c] = st.x1[c];
        st.x1[c] = in[c];
        st.y2[c] = st.y1[c];
        st.y1[c] = y;
        out[c] = y;
    }
    return out;
}

} // namespace gait
