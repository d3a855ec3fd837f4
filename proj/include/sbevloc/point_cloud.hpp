#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sbevloc/geometry.hpp"

namespace sbevloc {

struct Point {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double reflectance = 0.0;  // unitless, nominally in [0, 1]
};

/// A raw LiDAR scan in the sensor frame, meters. May be empty.
struct PointCloud {
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    auto begin() const { return points.begin(); }
    auto end() const { return points.end(); }
};

/// Scan poses in acquisition order; timestamps are scan indices.
struct Trajectory {
    std::vector<PoseSE2> poses;
    std::vector<std::size_t> timestamps;

    std::size_t size() const { return poses.size(); }
};

}  // namespace sbevloc
