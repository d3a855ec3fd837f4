#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sbevloc/rng.hpp"
#include "sbevloc/synthetic.hpp"
#include "sbevloc/triplet.hpp"

using namespace sbevloc;

namespace {
BevImage synthetic_bev(std::uint64_t seed, double pose_x = 0.0, double pose_y = 0.0) {
    SyntheticWorld w = generate_world(seed, 40.0, 40, 80);
    PointCloud scan =
        simulate_scan(w, {pose_x, pose_y, 0.3}, 25.0, 2.0 * M_PI / 720.0, 0.02, seed + 1);
    BevConfig cfg;
    cfg.extent = 12.0;
    cfg.voxel = 0.5;
    cfg.saturation_count = 4;
    return project(scan, cfg);
}

bool images_equal(const BevImage& a, const BevImage& b) {
    return a.rows == b.rows && a.cols == b.cols && a.pixels == b.pixels;
}
}  // namespace

TEST_CASE("geo_distance scales pixel distance by resolution") {
    CHECK(geo_distance({10, 20, 0}, {10, 20, 0}, 0.4) == 0.0);
    CHECK(geo_distance({0, 0, 0}, {3, 4, 0}, 0.4) == Catch::Approx(2.0));
    // 13 px at 0.4 m/px: past the 5 m threshold, so a negative.
    CHECK(geo_distance({100, 100, 0}, {100, 113, 0}, 0.4) == Catch::Approx(5.2));
}

TEST_CASE("fast strategy on a uniform image yields no candidates") {
    BevImage img = BevImage::zeros(64, 64, 0.4);
    CHECK(select_candidates(img, CandidateStrategy::fast, 1).empty());
}

TEST_CASE("longitudinal candidates hug the image centerline") {
    BevImage img = BevImage::zeros(64, 64, 0.4);
    auto cands = select_candidates(img, CandidateStrategy::longitudinal, 3);
    REQUIRE(cands.size() == 200);
    for (const Keypoint& k : cands) {
        CHECK(std::abs(k.col - 32) <= 3);
        CHECK(k.row >= 3);
        CHECK(k.row <= 60);
    }
}

TEST_CASE("random candidates are deterministic in the seed") {
    BevImage img = BevImage::zeros(64, 64, 0.4);
    auto a = select_candidates(img, CandidateStrategy::random, 7);
    auto b = select_candidates(img, CandidateStrategy::random, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].row == b[i].row);
        CHECK(a[i].col == b[i].col);
    }
    auto c = select_candidates(img, CandidateStrategy::random, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        differs = differs || a[i].row != c[i].row || a[i].col != c[i].col;
    CHECK(differs);
}

TEST_CASE("crop_patch centered on the image center is the identity") {
    BevImage img = synthetic_bev(5);
    REQUIRE(img.rows == 48);
    BevImage patch = crop_patch(img, {24, 24, 0}, 48);
    CHECK(images_equal(patch, img));
}

TEST_CASE("crop_patch zero-pads out-of-bounds regions") {
    BevImage img = BevImage::zeros(200, 200, 0.4);
    for (double& v : img.pixels) v = 1.0;
    BevImage patch = crop_patch(img, {0, 0, 0}, 200);
    // Patch pixel (i, j) = img(i - 100, j - 100): rows/cols < 100 are padding.
    for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 200; ++j)
            REQUIRE(patch.at(i, j) == ((i >= 100 && j >= 100) ? 1.0 : 0.0));
}

TEST_CASE("crop_patch addresses the window by index arithmetic") {
    BevImage img = BevImage::zeros(200, 200, 0.4);
    CounterRng rng(31);
    for (double& v : img.pixels) v = rng.next_double();
    BevImage patch = crop_patch(img, {50, 150, 0}, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) REQUIRE(patch.at(i, j) == img.at(48 + i, 148 + j));
}

TEST_CASE("an image with one keypoint has no valid query") {
    BevImage img = BevImage::zeros(64, 64, 0.4);
    img.at(32, 32) = 1.0;  // single corner
    TripletConfig cfg;
    cfg.patch_size = 64;
    CHECK_THROWS_AS(generate_triplet(img, cfg, 1), NoValidQuery);
}

TEST_CASE("position thresholding obeys the constructed distance sets") {
    // Corners at controlled pixel distances from the query corner at (32,32):
    // one at 3 px (1.2 m, the only possible positive at d_th = 5 m) and a
    // ring far beyond 12.5 px.
    BevImage img = BevImage::zeros(64, 64, 0.5);
    img.at(32, 32) = 1.0;
    img.at(32, 35) = 1.0;  // 3 px -> 1.5 m positive
    std::vector<std::pair<int, int>> far = {{32, 2},  {2, 32},  {60, 32}, {32, 62},
                                            {6, 6},   {58, 58}, {6, 58},  {58, 6},
                                            {18, 4},  {4, 18},  {50, 4},  {4, 50}};
    for (auto [r, c] : far) img.at(r, c) = 1.0;

    TripletConfig cfg;
    cfg.patch_size = 64;
    cfg.d_th = 5.0;
    cfg.m_negatives = 10;
    cfg.augment = Augmentation::none;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        PatchTriplet t = generate_triplet(img, cfg, seed);
        double dq = geo_distance(t.centers.query, t.centers.positive, img.resolution);
        REQUIRE(dq < 5.0);
        REQUIRE(t.centers.negatives.size() == 10);
        for (const Keypoint& n : t.centers.negatives)
            REQUIRE(geo_distance(t.centers.query, n, img.resolution) >= 5.0);
        // Only the two near corners can serve as query/positive of each other.
        bool q_near = (t.centers.query.row == 32 &&
                       (t.centers.query.col == 32 || t.centers.query.col == 35));
        REQUIRE(q_near);
    }
}

TEST_CASE("default config mines exactly m=10 negatives from live BEV images") {
    TripletConfig cfg;
    cfg.patch_size = 48;
    cfg.fast.threshold = 0.2;
    BevImage img = synthetic_bev(77);
    PatchTriplet t = generate_triplet(img, cfg, 3);
    CHECK(t.negative_patches.size() == 10);
    CHECK(t.centers.negatives.size() == 10);
    CHECK(t.query_patch.rows == 48);
    CHECK(t.positive_patch.cols == 48);
}

TEST_CASE("triplet generation is bit-identical for identical inputs") {
    BevImage img = synthetic_bev(91);
    TripletConfig cfg;
    cfg.patch_size = 48;
    cfg.fast.threshold = 0.2;
    PatchTriplet a = generate_triplet(img, cfg, 1234);
    PatchTriplet b = generate_triplet(img, cfg, 1234);
    REQUIRE(images_equal(a.query_patch, b.query_patch));
    REQUIRE(images_equal(a.positive_patch, b.positive_patch));
    REQUIRE(a.negative_patches.size() == b.negative_patches.size());
    for (std::size_t i = 0; i < a.negative_patches.size(); ++i)
        REQUIRE(images_equal(a.negative_patches[i], b.negative_patches[i]));

    PatchTriplet c = generate_triplet(img, cfg, 1235);
    CHECK_FALSE(images_equal(a.query_patch, c.query_patch));
}

TEST_CASE("unaugmented full-size query patch reproduces the crop") {
    BevImage img = synthetic_bev(13);
    TripletConfig cfg;
    cfg.patch_size = 48;
    cfg.augment = Augmentation::none;
    cfg.fast.threshold = 0.2;
    PatchTriplet t = generate_triplet(img, cfg, 6);
    BevImage expect = crop_patch(img, t.centers.query, 48);
    REQUIRE(images_equal(t.query_patch, expect));
}

TEST_CASE("thresholding constraints hold across many mined triplets") {
    TripletConfig cfg;
    cfg.patch_size = 48;
    cfg.fast.threshold = 0.2;
    int produced = 0;
    for (std::uint64_t s = 0; s < 25 && produced < 100; ++s) {
        BevImage img = synthetic_bev(200 + s, (s % 5) * 3.0, (s / 5) * 3.0);
        for (std::uint64_t t = 0; t < 8; ++t) {
            PatchTriplet trip;
            try {
                trip = generate_triplet(img, cfg, t);
            } catch (const NoValidQuery&) {
                continue;
            }
            ++produced;
            REQUIRE(geo_distance(trip.centers.query, trip.centers.positive, img.resolution) <
                    cfg.d_th);
            for (const Keypoint& n : trip.centers.negatives)
                REQUIRE(geo_distance(trip.centers.query, n, img.resolution) >= cfg.d_th);
        }
    }
    REQUIRE(produced >= 50);
}
