#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/format.hpp"
#include "sbevloc/point_cloud.hpp"
#include "sbevloc/rng.hpp"

namespace sbevloc {

struct Wall {
    double x1, y1, x2, y2;  // endpoints, meters
    double height;          // meters
};

struct Pole {
    double x, y;
    double height;
};

/// Deterministic desk-scale environment: vertical wall planes and poles on
/// the ground plane, everything inside [-extent, extent]^2.
struct SyntheticWorld {
    std::vector<Wall> walls;
    std::vector<Pole> poles;
    double extent = 0.0;
    std::uint64_t seed = 0;
};

/// Rays treat a pole as hit when they pass within this lateral distance of
/// its axis; the returned point is the pole position itself.
inline constexpr double kPoleHitRadius = 0.15;

namespace detail {
inline constexpr std::uint64_t kWallStream = 1ull << 32;
inline constexpr std::uint64_t kPoleStream = 2ull << 32;
inline double clamp_to(double v, double lim) { return std::max(-lim, std::min(lim, v)); }
}  // namespace detail

/// Pure in all arguments; every entity draws from its own (seed, index)
/// stream so the geometry is stable under count changes.
inline SyntheticWorld generate_world(std::uint64_t seed, double extent,
                                     std::size_t n_walls, std::size_t n_poles) {
    if (extent <= 0.0) throw ConfigError("world extent must be positive");
    SyntheticWorld w;
    w.extent = extent;
    w.seed = seed;
    w.walls.reserve(n_walls);
    for (std::size_t i = 0; i < n_walls; ++i) {
        CounterRng rng(seed, detail::kWallStream + i);
        double cx = rng.next_in(-0.9 * extent, 0.9 * extent);
        double cy = rng.next_in(-0.9 * extent, 0.9 * extent);
        double ang = rng.next_in(0.0, M_PI);
        double len = rng.next_in(0.1 * extent, 0.35 * extent);
        double h = rng.next_in(0.5, 4.0);
        double dx = 0.5 * len * std::cos(ang), dy = 0.5 * len * std::sin(ang);
        w.walls.push_back({detail::clamp_to(cx - dx, extent), detail::clamp_to(cy - dy, extent),
                           detail::clamp_to(cx + dx, extent), detail::clamp_to(cy + dy, extent), h});
    }
    w.poles.reserve(n_poles);
    for (std::size_t j = 0; j < n_poles; ++j) {
        CounterRng rng(seed, detail::kPoleStream + j);
        double x = rng.next_in(-0.95 * extent, 0.95 * extent);
        double y = rng.next_in(-0.95 * extent, 0.95 * extent);
        double h = rng.next_in(0.5, 4.0);
        w.poles.push_back({x, y, h});
    }
    return w;
}

/// Casts one ray bundle over 2*pi from the given pose. The first structure
/// hit within range yields one point: walls return the exact intersection,
/// poles return the pole position; z is sampled uniformly on the structure
/// height and range noise (truncated at 6 sigma) acts along the ray. Points
/// are expressed in the sensor frame. Deterministic in rng_seed.
inline PointCloud simulate_scan(const SyntheticWorld& world, const PoseSE2& pose,
                                double range, double angular_res, double noise_sigma,
                                std::uint64_t rng_seed) {
    if (range <= 0.0) throw ConfigError("scan range must be positive");
    if (angular_res <= 0.0) throw ConfigError("angular resolution must be positive");
    PointCloud cloud;
    std::size_t n_rays = static_cast<std::size_t>(std::floor(2.0 * M_PI / angular_res));
    if (n_rays == 0) n_rays = 1;
    double ox = pose.x, oy = pose.y;
    double cyaw = std::cos(pose.yaw), syaw = std::sin(pose.yaw);

    for (std::size_t i = 0; i < n_rays; ++i) {
        double theta = pose.yaw + static_cast<double>(i) * angular_res;
        double dx = std::cos(theta), dy = std::sin(theta);

        double best_t = range;
        double hit_x = 0.0, hit_y = 0.0, hit_h = 0.0;
        bool hit = false;

        for (const Wall& s : world.walls) {
            double ex = s.x2 - s.x1, ey = s.y2 - s.y1;
            double den = dx * ey - dy * ex;
            if (std::fabs(den) < 1e-12) continue;
            double ax = s.x1 - ox, ay = s.y1 - oy;
            double t = (ax * ey - ay * ex) / den;
            double u = (ax * dy - ay * dx) / den;
            if (t > 1e-9 && t <= best_t && u >= 0.0 && u <= 1.0) {
                best_t = t;
                hit_x = ox + t * dx;
                hit_y = oy + t * dy;
                hit_h = s.height;
                hit = true;
            }
        }
        for (const Pole& p : world.poles) {
            double px = p.x - ox, py = p.y - oy;
            double t = px * dx + py * dy;  // closest approach along the ray
            if (t <= 1e-9 || t > best_t) continue;
            double perp = std::fabs(px * dy - py * dx);
            if (perp > kPoleHitRadius) continue;
            best_t = t;
            hit_x = p.x;
            hit_y = p.y;
            hit_h = p.height;
            hit = true;
        }
        if (!hit) continue;

        CounterRng rng(rng_seed, i);
        double z_frac = rng.next_double();
        double noise = rng.next_gaussian();
        noise = std::max(-6.0, std::min(6.0, noise)) * noise_sigma;
        double refl = rng.next_double();

        double wx = hit_x + noise * dx;
        double wy = hit_y + noise * dy;
        // world -> sensor frame
        double lx = wx - ox, ly = wy - oy;
        Point pt;
        pt.x = cyaw * lx + syaw * ly;
        pt.y = -syaw * lx + cyaw * ly;
        pt.z = z_frac * hit_h;
        pt.reflectance = refl;
        cloud.points.push_back(pt);
    }
    return cloud;
}

/// Shortest distance from a world-frame point to any structure (walls as
/// segments, poles as their axis position). Infinity for an empty world.
inline double distance_to_structure(const SyntheticWorld& world, double x, double y) {
    double best = std::numeric_limits<double>::infinity();
    for (const Wall& s : world.walls) {
        double ex = s.x2 - s.x1, ey = s.y2 - s.y1;
        double len2 = ex * ex + ey * ey;
        double u = len2 > 0.0 ? ((x - s.x1) * ex + (y - s.y1) * ey) / len2 : 0.0;
        u = std::max(0.0, std::min(1.0, u));
        best = std::min(best, std::hypot(x - (s.x1 + u * ex), y - (s.y1 + u * ey)));
    }
    for (const Pole& p : world.poles) best = std::min(best, std::hypot(x - p.x, y - p.y));
    return best;
}

// --- plain-text serialization (versioned) -----------------------------------

inline void save_world(const SyntheticWorld& w, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write world file: " + path);
    out << "sbevworld 1\n";
    out << "seed " << w.seed << "\n";
    out << "extent " << fmt_double(w.extent) << "\n";
    out << "walls " << w.walls.size() << "\n";
    for (const Wall& s : w.walls)
        out << "wall " << fmt_double(s.x1) << " " << fmt_double(s.y1) << " "
            << fmt_double(s.x2) << " " << fmt_double(s.y2) << " "
            << fmt_double(s.height) << "\n";
    out << "poles " << w.poles.size() << "\n";
    for (const Pole& p : w.poles)
        out << "pole " << fmt_double(p.x) << " " << fmt_double(p.y) << " "
            << fmt_double(p.height) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline SyntheticWorld load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open world file: " + path);
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError(path + ": " + what);
    };
    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != "sbevworld") throw fail("missing sbevworld header");
    if (version != 1) throw fail("unsupported version " + std::to_string(version));
    SyntheticWorld w;
    std::size_t n = 0;
    if (!(in >> tag >> w.seed) || tag != "seed") throw fail("expected seed");
    if (!(in >> tag >> w.extent) || tag != "extent") throw fail("expected extent");
    if (!(in >> tag >> n) || tag != "walls") throw fail("expected walls count");
    w.walls.resize(n);
    for (Wall& s : w.walls)
        if (!(in >> tag >> s.x1 >> s.y1 >> s.x2 >> s.y2 >> s.height) || tag != "wall")
            throw fail("malformed wall entry");
    if (!(in >> tag >> n) || tag != "poles") throw fail("expected poles count");
    w.poles.resize(n);
    for (Pole& p : w.poles)
        if (!(in >> tag >> p.x >> p.y >> p.height) || tag != "pole")
            throw fail("malformed pole entry");
    return w;
}

// --- trajectory helpers for the synth pipeline -------------------------------

/// Circular loop trajectory; loops > 1 revisits the start of the lap.
/// Yaw points along the direction of travel.
inline Trajectory make_loop_trajectory(double radius, std::size_t n_scans, double loops,
                                       double center_x = 0.0, double center_y = 0.0) {
    Trajectory traj;
    traj.poses.reserve(n_scans);
    for (std::size_t i = 0; i < n_scans; ++i) {
        double phi = 2.0 * M_PI * loops * static_cast<double>(i) / static_cast<double>(n_scans);
        PoseSE2 p;
        p.x = center_x + radius * std::cos(phi);
        p.y = center_y + radius * std::sin(phi);
        p.yaw = wrap_angle(phi + M_PI / 2.0);
        traj.poses.push_back(p);
        traj.timestamps.push_back(i);
    }
    return traj;
}

/// Held-out query poses: each is displaced from a random trajectory pose by a
/// distance in [min_offset, max_offset] with a fully random heading.
inline Trajectory sample_query_poses(const Trajectory& traj, std::size_t count,
                                     double min_offset, double max_offset,
                                     std::uint64_t seed) {
    if (traj.poses.empty()) throw EmptyTrajectory("cannot sample queries from an empty trajectory");
    Trajectory out;
    for (std::size_t q = 0; q < count; ++q) {
        CounterRng rng(seed, q);
        const PoseSE2& base = traj.poses[rng.next_below(traj.poses.size())];
        double dir = rng.next_in(0.0, 2.0 * M_PI);
        double dist = rng.next_in(min_offset, max_offset);
        PoseSE2 p;
        p.x = base.x + dist * std::cos(dir);
        p.y = base.y + dist * std::sin(dir);
        p.yaw = wrap_angle(rng.next_in(-M_PI, M_PI));
        out.poses.push_back(p);
        out.timestamps.push_back(q);
    }
    return out;
}

}  // namespace sbevloc
