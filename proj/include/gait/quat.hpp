#pragma once

#include <array>
#include <cmath>

#include "gait/errors.hpp"

namespace gait {

using Vec3 = std::array<double, 3>;

/// Unit quaternion in (w, x, y, z) order, scalar first.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    friend bool operator==(const Quat&, const Quat&) = default;
};

/// Yaw / pitch / roll in radians, ZYX intrinsic order.
struct EulerAngles {
    double yaw = 0.0, pitch = 0.0, roll = 0.0;
};

inline double quat_norm(const Quat& q) {
    return std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
}

inline Quat quat_normalize(const Quat& q) {
    const double n = quat_norm(q);
    if (!(n > 1e-9)) throw DegenerateOrientation();
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

inline Quat quat_conjugate(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Quat quat_multiply(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

/// Rotate a vector from the body frame into the global frame.
inline Vec3 quat_rotate(const Quat& q, const Vec3& v) {
    // v' = v + 2w(u x v) + 2(u x (u x v)), u = (x,y,z)
    const Vec3 u = {q.x, q.y, q.z};
    const Vec3 uxv = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                      u[0] * v[1] - u[1] * v[0]};
    const Vec3 uxuxv = {u[1] * uxv[2] - u[2] * uxv[1],
                        u[2] * uxv[0] - u[0] * uxv[2],
                        u[0] * uxv[1] - u[1] * uxv[0]};
    return {v[0] + 2.0 * (q.w * uxv[0] + uxuxv[0]),
            v[1] + 2.0 * (q.w * uxv[1] + uxuxv[1]),
            v[2] + 2.0 * (q.w * uxv[2] + uxuxv[2])};
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 quat_to_matrix(const Quat& q) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

/// Rotation matrix of a ZYX intrinsic (yaw-pitch-roll) Euler triple.
inline Mat3 euler_zyx_to_matrix(const EulerAngles& e) {
    const double cy = std::cos(e.yaw), sy = std::sin(e.yaw);
    const double cp = std::cos(e.pitch), sp = std::sin(e.pitch);
    const double cr = std::cos(e.roll), sr = std::sin(e.roll);
    return {{{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
             {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
             {-sp, cp * sr, cp * cr}}};
}

/// Yaw/pitch/roll of a unit quaternion, ZYX intrinsic convention.
/// At gimbal lock (|pitch| -> pi/2) the whole remaining rotation goes to
/// yaw and roll is pinned to zero.
inline EulerAngles quat_to_euler(const Quat& q) {
    const double sinp = 2.0 * (q.w * q.y - q.x * q.z);
    EulerAngles e;
    if (sinp >= 1.0 - 1e-12) {
        e.pitch = M_PI / 2.0;
        e.roll = 0.0;
        // row 1 of the matrix degenerates to (0, cos(yaw-roll'), sin(yaw-roll'))
        e.yaw = std::atan2(2.0 * (q.y * q.z - q.w * q.x),
                           1.0 - 2.0 * (q.x * q.x + q.z * q.z));
    } else if (sinp <= -1.0 + 1e-12) {
        e.pitch = -M_PI / 2.0;
        e.roll = 0.0;
        e.yaw = std::atan2(-2.0 * (q.y * q.z - q.w * q.x),
                           1.0 - 2.0 * (q.x * q.x + q.z * q.z));
    } else {
        e.pitch = std::asin(sinp);
        e.yaw = std::atan2(2.0 * (q.x * q.y + q.w * q.z),
                           1.0 - 2.0 * (q.y * q.y + q.z * q.z));
        e.roll = std::atan2(2.0 * (q.y * q.z + q.w * q.x),
                            1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    }
    return e;
}

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
    const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] +
                               axis[2] * axis[2]);
    if (n < 1e-300) return {};
    const double h = 0.5 * angle;
    const double s = std::sin(h) / n;
    return {std::cos(h), axis[0] * s, axis[1] * s, axis[2] * s};
}

/// Advance an orientation by a body-frame angular rate held constant for dt.
inline Quat quat_integrate(const Quat& q, const Vec3& omega_body, double dt) {
    const double wn = std::sqrt(omega_body[0] * omega_body[0] +
                                omega_body[1] * omega_body[1] +
                                omega_body[2] * omega_body[2]);
    if (wn * dt < 1e-14) return q;
    const Quat step = quat_from_axis_angle(omega_body, wn * dt);
    return quat_normalize(quat_multiply(q, step));
}

} // namespace gait
