#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "sbevloc/bev.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/synthetic.hpp"
#include "test_util.hpp"

using namespace sbevloc;

namespace {
PointCloud random_cloud(std::uint64_t seed, int n, double extent = 35.0) {
    CounterRng rng(seed);
    PointCloud c;
    for (int i = 0; i < n; ++i)
        c.points.push_back({rng.next_in(-extent, extent), rng.next_in(-extent, extent),
                            rng.next_in(-2, 6), rng.next_double()});
    return c;
}
}  // namespace

TEST_CASE("voxel_filter merges near-coincident points at their centroid") {
    PointCloud c;
    c.points.push_back({1.00, 1.00, 0.50, 0.2});
    c.points.push_back({1.01, 1.00, 0.50, 0.4});
    PointCloud f = voxel_filter(c, 0.4);
    REQUIRE(f.size() == 1);
    CHECK(f.points[0].x == Catch::Approx(1.005));
    CHECK(f.points[0].y == Catch::Approx(1.0));
    CHECK(f.points[0].reflectance == Catch::Approx(0.3));
}

TEST_CASE("voxel_filter keeps points in distinct voxels") {
    PointCloud c;
    c.points.push_back({0, 0, 0, 0});
    c.points.push_back({1, 1, 1, 0});
    PointCloud f = voxel_filter(c, 0.4);
    REQUIRE(f.size() == 2);
}

TEST_CASE("voxel_filter centroid equals the mean of a single-voxel cluster") {
    // 1000 random points inside the voxel [0.4, 0.8)^3.
    CounterRng rng(17);
    PointCloud c;
    double sx = 0, sy = 0, sz = 0;
    for (int i = 0; i < 1000; ++i) {
        Point p{rng.next_in(0.4, 0.8), rng.next_in(0.4, 0.8), rng.next_in(0.4, 0.8), 0.0};
        sx += p.x;
        sy += p.y;
        sz += p.z;
        c.points.push_back(p);
    }
    PointCloud f = voxel_filter(c, 0.4);
    REQUIRE(f.size() == 1);
    CHECK(f.points[0].x == Catch::Approx(sx / 1000).epsilon(1e-12));
    CHECK(f.points[0].y == Catch::Approx(sy / 1000).epsilon(1e-12));
    CHECK(f.points[0].z == Catch::Approx(sz / 1000).epsilon(1e-12));
}

TEST_CASE("default projection yields a 200x200 image") {
    BevConfig cfg;
    BevImage img = project(random_cloud(1, 500), cfg);
    CHECK(img.rows == 200);
    CHECK(img.cols == 200);
    CHECK(img.resolution == Catch::Approx(0.4));
}

TEST_CASE("projecting an empty cloud yields all zeros") {
    BevImage img = project(PointCloud{}, BevConfig{});
    CHECK(std::all_of(img.pixels.begin(), img.pixels.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("a single origin point lands in cell (100, 100) with intensity 1/8") {
    PointCloud c;
    c.points.push_back({0, 0, 0, 0});
    BevImage img = project(c, BevConfig{});
    CHECK(img.at(100, 100) == Catch::Approx(1.0 / 8.0));
    double total = 0;
    for (double v : img.pixels) total += v;
    CHECK(total == Catch::Approx(1.0 / 8.0));
}

TEST_CASE("projection is invariant to input point order") {
    PointCloud c = random_cloud(5, 3000);
    BevImage a = project(c, BevConfig{});
    CounterRng rng(6);
    rng.shuffle(c.points);
    BevImage b = project(c, BevConfig{});
    REQUIRE(a.pixels == b.pixels);
}

TEST_CASE("adding a point to a cell never decreases its intensity") {
    BevConfig cfg;
    PointCloud c = random_cloud(7, 400);
    BevImage before = project(c, cfg);
    // A point with a fresh z-voxel in an occupied cell.
    c.points.push_back({c.points[0].x, c.points[0].y, c.points[0].z + 2.0, 0.0});
    BevImage after = project(c, cfg);
    for (std::size_t i = 0; i < before.pixels.size(); ++i)
        REQUIRE(after.pixels[i] >= before.pixels[i]);
}

TEST_CASE("intensity saturates at the configured count") {
    BevConfig cfg;
    cfg.saturation_count = 4;
    PointCloud c;
    for (int i = 0; i < 20; ++i) c.points.push_back({0.1, 0.1, 0.3 * i, 0});
    BevImage img = project(c, cfg);
    // (0.1, 0.1) falls in column 100, row 99 (y above the sensor).
    CHECK(img.at(99, 100) == 1.0);
}

TEST_CASE("rotation by zero is the identity") {
    BevImage img = BevImage::zeros(64, 64, 0.4);
    CounterRng rng(9);
    for (double& v : img.pixels) v = rng.next_double();
    BevImage out = rotate_image(img, 0.0, Interp::bilinear);
    REQUIRE(out.pixels == img.pixels);
}

TEST_CASE("quarter rotation maps the documented pixel") {
    // 201x201 image: grid center is pixel (100, 100).
    BevImage img = BevImage::zeros(201, 201, 0.4);
    img.at(100, 150) = 1.0;
    BevImage out = rotate_image(img, M_PI / 2.0, Interp::nearest);
    CHECK(out.at(50, 100) == 1.0);
    double total = 0;
    for (double v : out.pixels) total += v;
    CHECK(total == 1.0);
}

TEST_CASE("four quarter rotations reproduce the image exactly") {
    BevImage img = BevImage::zeros(100, 100, 0.4);
    CounterRng rng(10);
    for (double& v : img.pixels) v = rng.next_double();
    BevImage out = img;
    for (int i = 0; i < 4; ++i) out = rotate_image(out, M_PI / 2.0, Interp::bilinear);
    REQUIRE(out.pixels == img.pixels);
}

TEST_CASE("right-angle rotations preserve the pixel multiset exactly") {
    for (int quarter = 1; quarter <= 3; ++quarter) {
        BevImage img = BevImage::zeros(73, 73, 0.4);
        CounterRng rng(11 + quarter);
        for (double& v : img.pixels) v = rng.next_double();
        BevImage out = rotate_image(img, quarter * M_PI / 2.0, Interp::nearest);
        std::vector<double> a = img.pixels, b = out.pixels;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        REQUIRE(a == b);
    }
}

TEST_CASE("bilinear rotation stays within the input intensity range") {
    BevImage img = BevImage::zeros(50, 50, 0.4);
    CounterRng rng(13);
    for (double& v : img.pixels) v = rng.next_double();
    BevImage out = rotate_image(img, 0.7, Interp::bilinear);
    for (double v : out.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("PGM export writes the expected header and payload") {
    test_util::TempDir dir("pgm");
    BevImage img = BevImage::zeros(4, 4, 0.4);
    img.at(0, 0) = 1.0;
    img.at(1, 2) = 0.5;
    write_pgm(img, dir.str("img.pgm"));
    auto bytes = test_util::read_bytes(dir.str("img.pgm"));
    std::string header(bytes.begin(), bytes.begin() + 11);
    CHECK(header == "P5\n4 4\n255\n");
    REQUIRE(bytes.size() == 11 + 16);
    unsigned char first = static_cast<unsigned char>(bytes[11]);
    CHECK(first == 255);
    unsigned char mid = static_cast<unsigned char>(bytes[11 + 6]);
    CHECK(mid == 127);  // floor(0.5 * 255)
}

TEST_CASE("projection of a simulated scan has content and zero border corners") {
    SyntheticWorld w = generate_world(41, 40.0, 30, 60);
    PointCloud scan = simulate_scan(w, {5, -3, 0.4}, 30.0, 2.0 * M_PI / 720.0, 0.02, 3);
    BevConfig cfg;
    cfg.extent = 12.0;
    cfg.voxel = 0.6;
    BevImage img = project(scan, cfg);
    REQUIRE(img.rows == 40);
    double total = 0;
    for (double v : img.pixels) total += v;
    CHECK(total > 0.0);
}
