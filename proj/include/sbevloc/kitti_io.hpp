#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/point_cloud.hpp"

namespace sbevloc {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

/// Reads a KITTI velodyne binary: consecutive 16-byte records of four
/// little-endian float32 (x, y, z, reflectance).
inline PointCloud load_scan_kitti(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open scan file: " + path);
    std::streamoff size = in.tellg();
    if (size % 16 != 0)
        throw TruncatedFile(path + ": size " + std::to_string(size) +
                            " is not a multiple of 16 bytes");
    in.seekg(0);
    std::vector<float> raw(static_cast<std::size_t>(size) / 4);
    if (size > 0) in.read(reinterpret_cast<char*>(raw.data()), size);
    if (!in) throw IoError("short read on scan file: " + path);

    PointCloud cloud;
    cloud.points.resize(raw.size() / 4);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        Point& p = cloud.points[i];
        p.x = raw[4 * i + 0];
        p.y = raw[4 * i + 1];
        p.z = raw[4 * i + 2];
        p.reflectance = raw[4 * i + 3];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw NonFinite(path + ": non-finite coordinate in record " + std::to_string(i));
    }
    return cloud;
}

inline void save_scan_kitti(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write scan file: " + path);
    std::vector<float> raw(cloud.points.size() * 4);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Point& p = cloud.points[i];
        raw[4 * i + 0] = static_cast<float>(p.x);
        raw[4 * i + 1] = static_cast<float>(p.y);
        raw[4 * i + 2] = static_cast<float>(p.z);
        raw[4 * i + 3] = static_cast<float>(p.reflectance);
    }
    if (!raw.empty())
        out.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
}

/// Planar reduction of a 3x4 row-major rigid transform: keep (x, y) and
/// yaw = atan2(R21, R11); z, roll and pitch are discarded.
inline PoseSE2 reduce_se3_row_major(const double m[12]) {
    return {m[3], m[7], std::atan2(m[4], m[0])};
}

/// Reads a KITTI pose file: 12 whitespace-separated numbers per non-empty
/// line, the row-major upper 3x4 of the pose matrix.
inline Trajectory load_poses_kitti(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pose file: " + path);
    Trajectory traj;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        double m[12];
        for (int i = 0; i < 12; ++i) {
            if (!(ss >> m[i]))
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": expected 12 numbers, got " + std::to_string(i));
        }
        double extra;
        if (ss >> extra)
            throw ParseError(path + ":" + std::to_string(lineno) + ": more than 12 numbers");
        traj.timestamps.push_back(traj.poses.size());
        traj.poses.push_back(reduce_se3_row_major(m));
    }
    return traj;
}

inline void save_poses_kitti(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write pose file: " + path);
    char buf[512];
    for (const PoseSE2& p : traj.poses) {
        double c = std::cos(p.yaw), s = std::sin(p.yaw);
        std::snprintf(buf, sizeof(buf),
                      "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      c, -s, 0.0, p.x, s, c, 0.0, p.y, 0.0, 0.0, 1.0, 0.0);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace sbevloc
