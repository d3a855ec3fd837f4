#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/format.hpp"

namespace sbevloc {

struct Keypoint {
    int row = 0;
    int col = 0;
    double score = 0.0;
};

struct FastConfig {
    double threshold = 0.08;  // intensity contrast
    int arc = 9;              // contiguous circle pixels required (FAST-9)
    int nms_radius = 3;       // Chebyshev suppression radius, pixels
    int max_keypoints = 500;
};

/// Radius-3 Bresenham circle, 16 pixels, clockwise from 12 o'clock.
inline constexpr std::array<std::array<int, 2>, 16> kFastCircle = {{
    {-3, 0}, {-3, 1}, {-2, 2}, {-1, 3}, {0, 3}, {1, 3}, {2, 2}, {3, 1},
    {3, 0}, {3, -1}, {2, -2}, {1, -3}, {0, -3}, {-1, -3}, {-2, -2}, {-3, -1},
}};

namespace detail {

/// Longest circular run of set flags; returns (start, length), length 16 when
/// all are set. start is the smallest index beginning a maximal run.
inline std::pair<int, int> longest_circular_run(const std::array<bool, 16>& flags) {
    int total = 0;
    for (bool f : flags) total += f;
    if (total == 16) return {0, 16};
    int best_len = 0, best_start = 0;
    int run = 0;
    for (int i = 0; i < 32; ++i) {
        if (flags[i % 16]) {
            ++run;
            int start = i - run + 1;
            if (start < 16 && run > best_len) {
                best_len = run;
                best_start = start;
            }
        } else {
            run = 0;
        }
    }
    return {best_start, best_len};
}

}  // namespace detail

/// Segment-test FAST detector. A pixel is a corner iff at least cfg.arc
/// contiguous circle pixels are all brighter than I(p)+threshold or all
/// darker than I(p)-threshold; the score sums the contrast margin over that
/// maximal run. Greedy NMS keeps the (score desc, row asc, col asc) strongest
/// within each Chebyshev neighborhood.
inline std::vector<Keypoint> detect_fast(const BevImage& img, const FastConfig& cfg) {
    if (img.rows < 7 || img.cols < 7)
        throw ImageTooSmall("detect_fast needs at least a 7x7 image");
    if (cfg.arc < 9 || cfg.arc > 12) throw ConfigError("fast.arc must be in [9, 12]");
    if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0)
        throw ConfigError("fast.threshold must be in (0, 1)");

    std::vector<Keypoint> corners;
    for (int r = 3; r < img.rows - 3; ++r) {
        for (int c = 3; c < img.cols - 3; ++c) {
            double center = img.at(r, c);
            double hi = center + cfg.threshold;
            double lo = center - cfg.threshold;
            std::array<double, 16> ring;
            std::array<bool, 16> bright, dark;
            int n_bright = 0, n_dark = 0;
            for (int k = 0; k < 16; ++k) {
                ring[k] = img.at(r + kFastCircle[k][0], c + kFastCircle[k][1]);
                bright[k] = ring[k] > hi;
                dark[k] = ring[k] < lo;
                n_bright += bright[k];
                n_dark += dark[k];
            }
            if (n_bright < cfg.arc && n_dark < cfg.arc) continue;

            // With arc >= 9 only one polarity can qualify.
            auto [start, len] = n_bright >= cfg.arc ? detail::longest_circular_run(bright)
                                                    : detail::longest_circular_run(dark);
            if (len < cfg.arc) continue;
            double score = 0.0;
            for (int k = 0; k < len; ++k)
                score += std::fabs(ring[(start + k) % 16] - center) - cfg.threshold;
            corners.push_back({r, c, score});
        }
    }

    std::sort(corners.begin(), corners.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });

    std::vector<Keypoint> kept;
    for (const Keypoint& kp : corners) {
        bool suppressed = false;
        for (const Keypoint& k : kept) {
            if (std::max(std::abs(kp.row - k.row), std::abs(kp.col - k.col)) <= cfg.nms_radius) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(kp);
            if (static_cast<int>(kept.size()) >= cfg.max_keypoints &&
                cfg.max_keypoints > 0)
                break;
        }
    }
    return kept;
}

/// CSV dump (row, col, score), one keypoint per line, for debugging.
inline std::string keypoints_csv(const std::vector<Keypoint>& kps) {
    std::string out = "row,col,score\n";
    for (const Keypoint& k : kps)
        out += std::to_string(k.row) + "," + std::to_string(k.col) + "," +
               fmt_double(k.score) + "\n";
    return out;
}

}  // namespace sbevloc
