#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/point_cloud.hpp"

namespace sbevloc {

/// BEV raster geometry. The image is square with side 2*extent/voxel, which
/// must come out integral.
struct BevConfig {
    double extent = 40.0;        // half-width, meters
    double voxel = 0.4;          // meters per pixel and per 3D filter voxel
    int saturation_count = 8;    // cell count at which intensity saturates
    double z_min = -3.0;
    double z_max = 8.0;

    int image_size() const {
        double s = 2.0 * extent / voxel;
        int n = static_cast<int>(std::lround(s));
        if (n <= 0 || std::fabs(s - n) > 1e-6)
            throw ConfigError("2*extent/voxel must be a positive integer");
        return n;
    }
    void validate() const {
        if (extent <= 0.0) throw ConfigError("bev.extent must be positive");
        if (voxel <= 0.0) throw ConfigError("bev.voxel must be positive");
        if (saturation_count < 1) throw ConfigError("bev.saturation must be >= 1");
        (void)image_size();
    }
};

/// Density image over the sensor-centered BEV window. Cell (r, c) covers
/// x in [-extent + c*voxel, -extent + (c+1)*voxel) and
/// y in (extent - (r+1)*voxel,  extent - r*voxel], so columns increase with
/// +x and rows increase with -y; the sensor sits in cell (H/2, W/2).
struct BevImage {
    int rows = 0;
    int cols = 0;
    double resolution = 0.0;  // meters per pixel
    std::vector<double> pixels;  // row-major, intensities in [0, 1]

    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
    bool square() const { return rows == cols; }

    static BevImage zeros(int rows, int cols, double resolution) {
        BevImage img;
        img.rows = rows;
        img.cols = cols;
        img.resolution = resolution;
        img.pixels.assign(static_cast<std::size_t>(rows) * cols, 0.0);
        return img;
    }
};

/// 3D voxel grid downsampling: one point per occupied voxel, at the centroid
/// of that voxel's points. Output is voxel-index sorted and independent of
/// the input point order (points inside a voxel are averaged in a canonical
/// order).
inline PointCloud voxel_filter(const PointCloud& cloud, double voxel) {
    if (voxel <= 0.0) throw ConfigError("voxel size must be positive");
    struct Entry {
        std::int64_t ix, iy, iz;
        Point p;
    };
    std::vector<Entry> entries;
    entries.reserve(cloud.points.size());
    for (const Point& p : cloud.points) {
        entries.push_back({static_cast<std::int64_t>(std::floor(p.x / voxel)),
                           static_cast<std::int64_t>(std::floor(p.y / voxel)),
                           static_cast<std::int64_t>(std::floor(p.z / voxel)), p});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.ix != b.ix) return a.ix < b.ix;
        if (a.iy != b.iy) return a.iy < b.iy;
        if (a.iz != b.iz) return a.iz < b.iz;
        return std::tie(a.p.x, a.p.y, a.p.z, a.p.reflectance) <
               std::tie(b.p.x, b.p.y, b.p.z, b.p.reflectance);
    });
    PointCloud out;
    std::size_t i = 0;
    while (i < entries.size()) {
        std::size_t j = i;
        double sx = 0.0, sy = 0.0, sz = 0.0, sr = 0.0;
        while (j < entries.size() && entries[j].ix == entries[i].ix &&
               entries[j].iy == entries[i].iy && entries[j].iz == entries[i].iz) {
            sx += entries[j].p.x;
            sy += entries[j].p.y;
            sz += entries[j].p.z;
            sr += entries[j].p.reflectance;
            ++j;
        }
        double n = static_cast<double>(j - i);
        out.points.push_back({sx / n, sy / n, sz / n, sr / n});
        i = j;
    }
    return out;
}

/// Point cloud -> BEV density image: crop to the window, voxel-filter, count
/// per cell, saturate at cfg.saturation_count and normalize to [0, 1].
inline BevImage project(const PointCloud& cloud, const BevConfig& cfg) {
    cfg.validate();
    int n = cfg.image_size();
    BevImage img = BevImage::zeros(n, n, cfg.voxel);

    PointCloud cropped;
    cropped.points.reserve(cloud.points.size());
    for (const Point& p : cloud.points) {
        if (std::fabs(p.x) >= cfg.extent || std::fabs(p.y) >= cfg.extent) continue;
        if (p.z < cfg.z_min || p.z > cfg.z_max) continue;
        cropped.points.push_back(p);
    }
    PointCloud filtered = voxel_filter(cropped, cfg.voxel);

    std::vector<std::uint32_t> counts(static_cast<std::size_t>(n) * n, 0);
    for (const Point& p : filtered.points) {
        int c = static_cast<int>(std::floor((p.x + cfg.extent) / cfg.voxel));
        int r = static_cast<int>(std::floor((cfg.extent - p.y) / cfg.voxel));
        if (r < 0 || r >= n || c < 0 || c >= n) continue;  // boundary rounding
        ++counts[static_cast<std::size_t>(r) * n + c];
    }
    double sat = static_cast<double>(cfg.saturation_count);
    for (std::size_t i = 0; i < counts.size(); ++i)
        img.pixels[i] = std::min<double>(counts[i], sat) / sat;
    return img;
}

enum class Interp { nearest, bilinear };

namespace detail {
/// cos/sin snapped to exact values at multiples of pi/2 so that right-angle
/// rotations are exact pixel permutations.
inline void rotation_coeffs(double angle, double& c, double& s) {
    c = std::cos(angle);
    s = std::sin(angle);
    auto snap = [](double& v) {
        if (std::fabs(v) < 1e-12) v = 0.0;
        else if (std::fabs(v - 1.0) < 1e-12) v = 1.0;
        else if (std::fabs(v + 1.0) < 1e-12) v = -1.0;
    };
    snap(c);
    snap(s);
}
}  // namespace detail

/// Rotates a square image counterclockwise (in the BEV metric frame) about
/// the geometric center of the pixel grid, (H-1)/2. Out-of-bounds source
/// samples read as zero; multiples of pi/2 are exact permutations.
inline BevImage rotate_image(const BevImage& img, double angle,
                             Interp interpolation = Interp::bilinear) {
    if (!img.square()) throw ShapeMismatch("rotate_image requires a square image");
    BevImage out = BevImage::zeros(img.rows, img.cols, img.resolution);
    int n = img.rows;
    double ctr = 0.5 * (n - 1);
    double c, s;
    detail::rotation_coeffs(-angle, c, s);  // dest -> source map

    for (int r = 0; r < n; ++r) {
        for (int col = 0; col < n; ++col) {
            double dr = r - ctr, dc = col - ctr;
            double sr = ctr + c * dr - s * dc;
            double sc = ctr + s * dr + c * dc;
            if (interpolation == Interp::nearest) {
                int ir = static_cast<int>(std::lround(sr));
                int ic = static_cast<int>(std::lround(sc));
                if (ir >= 0 && ir < n && ic >= 0 && ic < n) out.at(r, col) = img.at(ir, ic);
            } else {
                int r0 = static_cast<int>(std::floor(sr));
                int c0 = static_cast<int>(std::floor(sc));
                double fr = sr - r0, fc = sc - c0;
                double acc = 0.0;
                for (int a = 0; a < 2; ++a) {
                    for (int b = 0; b < 2; ++b) {
                        int rr = r0 + a, cc = c0 + b;
                        if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                        double w = (a ? fr : 1.0 - fr) * (b ? fc : 1.0 - fc);
                        if (w != 0.0) acc += w * img.at(rr, cc);
                    }
                }
                out.at(r, col) = acc;
            }
        }
    }
    return out;
}

/// 8-bit binary PGM export, intensity scaled by 255 and floored.
inline void write_pgm(const BevImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write PGM: " + path);
    out << "P5\n" << img.cols << " " << img.rows << "\n255\n";
    std::vector<unsigned char> row(img.cols);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            double v = std::floor(img.at(r, c) * 255.0);
            row[c] = static_cast<unsigned char>(std::max(0.0, std::min(255.0, v)));
        }
        out.write(reinterpret_cast<const char*>(row.data()), img.cols);
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace sbevloc
