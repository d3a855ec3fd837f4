#pragma once

#include <cmath>

namespace sbevloc {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::fmod(a + M_PI, 2.0 * M_PI);
    if (r <= 0.0) r += 2.0 * M_PI;
    return r - M_PI;
}

/// Planar pose: translation in meters, yaw in radians within (-pi, pi].
struct PoseSE2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    static PoseSE2 identity() { return {}; }
};

/// Composition a * b (apply b in a's frame).
inline PoseSE2 compose(const PoseSE2& a, const PoseSE2& b) {
    double c = std::cos(a.yaw), s = std::sin(a.yaw);
    return {a.x + c * b.x - s * b.y,
            a.y + s * b.x + c * b.y,
            wrap_angle(a.yaw + b.yaw)};
}

inline PoseSE2 inverse(const PoseSE2& p) {
    double c = std::cos(p.yaw), s = std::sin(p.yaw);
    return {-(c * p.x + s * p.y), -(-s * p.x + c * p.y), wrap_angle(-p.yaw)};
}

/// b expressed in a's frame: a^-1 * b.
inline PoseSE2 relative(const PoseSE2& a, const PoseSE2& b) {
    return compose(inverse(a), b);
}

/// Maps a point from the pose's local frame into the parent frame.
inline void transform_point(const PoseSE2& p, double lx, double ly, double& wx, double& wy) {
    double c = std::cos(p.yaw), s = std::sin(p.yaw);
    wx = p.x + c * lx - s * ly;
    wy = p.y + s * lx + c * ly;
}

inline double planar_distance(const PoseSE2& a, const PoseSE2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double yaw_error(const PoseSE2& a, const PoseSE2& b) {
    return std::fabs(wrap_angle(a.yaw - b.yaw));
}

inline double deg(double rad) { return rad * 180.0 / M_PI; }
inline double rad(double degv) { return degv * M_PI / 180.0; }

}  // namespace sbevloc
