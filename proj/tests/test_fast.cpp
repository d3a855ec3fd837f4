#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "sbevloc/fast.hpp"
#include "sbevloc/rng.hpp"

using namespace sbevloc;

namespace {

// Independent reference detector: direct circular-run scan over every pixel
// followed by a quadratic greedy NMS. Deliberately naive.
std::vector<Keypoint> reference_fast(const BevImage& img, const FastConfig& cfg) {
    static const int circle[16][2] = {{-3, 0}, {-3, 1}, {-2, 2}, {-1, 3}, {0, 3}, {1, 3},
                                      {2, 2},  {3, 1},  {3, 0},  {3, -1}, {2, -2}, {1, -3},
                                      {0, -3}, {-1, -3}, {-2, -2}, {-3, -1}};
    std::vector<Keypoint> corners;
    for (int r = 3; r < img.rows - 3; ++r) {
        for (int c = 3; c < img.cols - 3; ++c) {
            double v = img.at(r, c);
            for (int polarity = 0; polarity < 2; ++polarity) {
                // Longest circular run of bright (polarity 0) or dark pixels.
                int best_len = 0, best_start = 0;
                for (int start = 0; start < 16; ++start) {
                    int len = 0;
                    while (len < 16) {
                        double ring = img.at(r + circle[(start + len) % 16][0],
                                             c + circle[(start + len) % 16][1]);
                        bool q = polarity == 0 ? ring > v + cfg.threshold
                                               : ring < v - cfg.threshold;
                        if (!q) break;
                        ++len;
                    }
                    if (len > best_len) {
                        best_len = len;
                        best_start = start;
                    }
                }
                if (best_len >= cfg.arc) {
                    // A run this long is unique for arc >= 9; ensure the start
                    // is the canonical (maximal-run) one by preferring the
                    // earliest start of the maximal length, as above.
                    double score = 0;
                    int len = std::min(best_len, 16);
                    for (int k = 0; k < len; ++k) {
                        double ring = img.at(r + circle[(best_start + k) % 16][0],
                                             c + circle[(best_start + k) % 16][1]);
                        score += std::fabs(ring - v) - cfg.threshold;
                    }
                    corners.push_back({r, c, score});
                    break;  // only one polarity can qualify
                }
            }
        }
    }
    std::stable_sort(corners.begin(), corners.end(), [](const Keypoint& a, const Keypoint& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });
    std::vector<Keypoint> kept;
    for (const Keypoint& kp : corners) {
        bool ok = true;
        for (const Keypoint& q : kept)
            ok = ok && std::max(std::abs(kp.row - q.row), std::abs(kp.col - q.col)) >
                           cfg.nms_radius;
        if (ok) kept.push_back(kp);
    }
    if (cfg.max_keypoints > 0 && static_cast<int>(kept.size()) > cfg.max_keypoints)
        kept.resize(static_cast<std::size_t>(cfg.max_keypoints));
    return kept;
}

BevImage random_image(std::uint64_t seed, int n) {
    BevImage img = BevImage::zeros(n, n, 0.4);
    CounterRng rng(seed);
    for (double& v : img.pixels) v = rng.next_double();
    return img;
}

bool same_keypoints(const std::vector<Keypoint>& a, const std::vector<Keypoint>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].row != b[i].row || a[i].col != b[i].col ||
            std::fabs(a[i].score - b[i].score) > 1e-12)
            return false;
    return true;
}

}  // namespace

TEST_CASE("uniform images have no corners") {
    BevImage img = BevImage::zeros(32, 32, 0.4);
    for (double& v : img.pixels) v = 0.5;
    CHECK(detect_fast(img, FastConfig{}).empty());
}

TEST_CASE("a lone bright pixel is a single corner after NMS") {
    BevImage img = BevImage::zeros(32, 32, 0.4);
    img.at(16, 16) = 1.0;
    FastConfig cfg;
    cfg.threshold = 0.1;
    cfg.arc = 9;
    std::vector<Keypoint> kps = detect_fast(img, cfg);
    std::vector<Keypoint> ref = reference_fast(img, cfg);
    REQUIRE(same_keypoints(kps, ref));
    REQUIRE(kps.size() == 1);
    CHECK(kps[0].row == 16);
    CHECK(kps[0].col == 16);
}

TEST_CASE("detector matches the brute-force reference on random images") {
    FastConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        BevImage img = random_image(1000 + trial, 64);
        REQUIRE(same_keypoints(detect_fast(img, cfg), reference_fast(img, cfg)));
    }
}

TEST_CASE("detector matches the reference across arc lengths") {
    for (int arc : {9, 10, 11, 12}) {
        FastConfig cfg;
        cfg.arc = arc;
        BevImage img = random_image(7 + arc, 48);
        REQUIRE(same_keypoints(detect_fast(img, cfg), reference_fast(img, cfg)));
    }
}

TEST_CASE("detector output is invariant under constant intensity shifts") {
    FastConfig cfg;
    BevImage img = random_image(55, 48);
    for (double& v : img.pixels) v *= 0.5;  // leave headroom for the shift
    std::vector<Keypoint> base = detect_fast(img, cfg);
    BevImage shifted = img;
    for (double& v : shifted.pixels) v += 0.25;
    REQUIRE(same_keypoints(base, detect_fast(shifted, cfg)));
}

TEST_CASE("rotating the image by 90 degrees permutes the keypoint set") {
    FastConfig cfg;
    BevImage img = random_image(73, 64);
    std::vector<Keypoint> base = detect_fast(img, cfg);
    BevImage rot = rotate_image(img, M_PI / 2.0, Interp::nearest);
    std::vector<Keypoint> rotated = detect_fast(rot, cfg);
    REQUIRE(base.size() == rotated.size());

    // dest(r, c) = src(c, W-1-r)  =>  src(r, c) appears at (W-1-c, r).
    auto key = [](const Keypoint& k) { return std::make_pair(k.row, k.col); };
    std::vector<std::pair<int, int>> expected, got;
    for (const Keypoint& k : base) expected.push_back({img.cols - 1 - k.col, k.row});
    for (const Keypoint& k : rotated) got.push_back(key(k));
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    REQUIRE(expected == got);
}

TEST_CASE("no two keypoints fall within the suppression radius") {
    FastConfig cfg;
    BevImage img = random_image(91, 64);
    std::vector<Keypoint> kps = detect_fast(img, cfg);
    REQUIRE(kps.size() > 1);
    for (std::size_t i = 0; i < kps.size(); ++i)
        for (std::size_t j = i + 1; j < kps.size(); ++j)
            REQUIRE(std::max(std::abs(kps[i].row - kps[j].row),
                             std::abs(kps[i].col - kps[j].col)) > cfg.nms_radius);
}

TEST_CASE("keypoints are sorted by descending score and capped") {
    FastConfig cfg;
    cfg.max_keypoints = 5;
    BevImage img = random_image(12, 64);
    std::vector<Keypoint> kps = detect_fast(img, cfg);
    REQUIRE(kps.size() <= 5);
    for (std::size_t i = 1; i < kps.size(); ++i) REQUIRE(kps[i - 1].score >= kps[i].score);
}

TEST_CASE("small images are rejected") {
    BevImage img = BevImage::zeros(6, 6, 0.4);
    CHECK_THROWS_AS(detect_fast(img, FastConfig{}), ImageTooSmall);
}
