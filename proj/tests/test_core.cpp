#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sbevloc/format.hpp"
#include "sbevloc/geometry.hpp"
#include "sbevloc/kitti_io.hpp"
#include "sbevloc/numeric.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/synthetic.hpp"
#include "test_util.hpp"

using namespace sbevloc;

TEST_CASE("ExactSum recovers cancelled small terms") {
    ExactSum s;
    s.add(1e100);
    s.add(1.0);
    s.add(-1e100);
    CHECK(s.total() == 1.0);

    ExactSum t;
    t.add(1e16);
    t.add(1.0);
    t.add(-1e16);
    CHECK(t.total() == 1.0);
}

TEST_CASE("ExactSum totals are independent of summation order") {
    CounterRng rng(99);
    std::vector<double> values;
    for (int i = 0; i < 500; ++i)
        values.push_back((rng.next_double() - 0.5) * std::pow(10.0, rng.next_in(-8, 8)));
    ExactSum a;
    for (double v : values) a.add(v);
    double forward = a.total();

    for (int trial = 0; trial < 10; ++trial) {
        CounterRng shuffler(trial);
        std::vector<double> shuffled = values;
        shuffler.shuffle(shuffled);
        ExactSum b;
        for (double v : shuffled) b.add(v);
        REQUIRE(b.total() == forward);
    }
}

TEST_CASE("CounterRng draws are reproducible and in range") {
    CounterRng a(42, 7), b(42, 7), c(43, 7);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        double va = a.next_double();
        all_equal = all_equal && va == b.next_double();
        any_diff = any_diff || va != c.next_double();
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_diff);

    CounterRng d(1);
    for (int i = 0; i < 200; ++i) CHECK(d.next_below(13) < 13);
}

TEST_CASE("CounterRng sampling without replacement returns distinct indices") {
    CounterRng rng(5);
    auto idx = rng.sample_without_replacement(20, 10);
    REQUIRE(idx.size() == 10);
    std::sort(idx.begin(), idx.end());
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    CHECK(idx.back() < 20);
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(M_PI) == Catch::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == Catch::Approx(M_PI));
    CHECK(wrap_angle(3.0 * M_PI) == Catch::Approx(M_PI));
    CHECK(wrap_angle(0.5) == Catch::Approx(0.5));
    CHECK(wrap_angle(-7.0) == Catch::Approx(-7.0 + 2.0 * M_PI));
}

TEST_CASE("SE2 composition matches the homogeneous matrix product") {
    CounterRng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        PoseSE2 a{rng.next_in(-50, 50), rng.next_in(-50, 50), rng.next_in(-M_PI, M_PI)};
        PoseSE2 b{rng.next_in(-50, 50), rng.next_in(-50, 50), rng.next_in(-M_PI, M_PI)};
        PoseSE2 ab = compose(a, b);

        // 3x3 homogeneous oracle
        double ma[9] = {std::cos(a.yaw), -std::sin(a.yaw), a.x,
                        std::sin(a.yaw), std::cos(a.yaw), a.y, 0, 0, 1};
        double mb[9] = {std::cos(b.yaw), -std::sin(b.yaw), b.x,
                        std::sin(b.yaw), std::cos(b.yaw), b.y, 0, 0, 1};
        double m[9];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                m[3 * r + c] = 0;
                for (int k = 0; k < 3; ++k) m[3 * r + c] += ma[3 * r + k] * mb[3 * k + c];
            }
        REQUIRE(std::fabs(ab.x - m[2]) < 1e-12);
        REQUIRE(std::fabs(ab.y - m[5]) < 1e-12);
        REQUIRE(std::fabs(wrap_angle(ab.yaw - std::atan2(m[3], m[0]))) < 1e-12);
    }
}

TEST_CASE("SE2 inverse composes to identity") {
    PoseSE2 p{3.0, -2.0, 1.1};
    PoseSE2 id = compose(p, inverse(p));
    CHECK(std::fabs(id.x) < 1e-12);
    CHECK(std::fabs(id.y) < 1e-12);
    CHECK(std::fabs(id.yaw) < 1e-12);
}

TEST_CASE("fmt_double round-trips exactly") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -42.0, 0.0, 123456789.123456789}) {
        double back = std::stod(fmt_double(v));
        CHECK(back == v);
    }
}

// --- KITTI binary scans -------------------------------------------------------

TEST_CASE("KITTI scan loader decodes 16-byte records") {
    test_util::TempDir dir("kitti");
    std::vector<float> raw = {1, 2, 3, 0.5f, 4, 5, 6, 0.1f};
    std::vector<char> bytes(raw.size() * 4);
    std::memcpy(bytes.data(), raw.data(), bytes.size());
    test_util::write_bytes(dir.str("scan.bin"), bytes);

    PointCloud cloud = load_scan_kitti(dir.str("scan.bin"));
    REQUIRE(cloud.size() == 2);
    CHECK(cloud.points[0].x == 1.0);
    CHECK(cloud.points[0].y == 2.0);
    CHECK(cloud.points[0].z == 3.0);
    CHECK(cloud.points[0].reflectance == 0.5);
    CHECK(cloud.points[1].x == 4.0);
    CHECK(cloud.points[1].reflectance == Catch::Approx(0.1));
}

TEST_CASE("KITTI scan loader handles empty and truncated files") {
    test_util::TempDir dir("kitti");
    test_util::write_bytes(dir.str("empty.bin"), {});
    CHECK(load_scan_kitti(dir.str("empty.bin")).empty());

    test_util::write_bytes(dir.str("bad.bin"), std::vector<char>(17, 0));
    CHECK_THROWS_AS(load_scan_kitti(dir.str("bad.bin")), TruncatedFile);
}

TEST_CASE("KITTI scan loader rejects non-finite coordinates") {
    test_util::TempDir dir("kitti");
    std::vector<float> raw = {1, std::numeric_limits<float>::quiet_NaN(), 3, 0};
    std::vector<char> bytes(raw.size() * 4);
    std::memcpy(bytes.data(), raw.data(), bytes.size());
    test_util::write_bytes(dir.str("nan.bin"), bytes);
    CHECK_THROWS_AS(load_scan_kitti(dir.str("nan.bin")), NonFinite);
}

TEST_CASE("KITTI scan round-trip is bit-identical") {
    test_util::TempDir dir("kitti");
    CounterRng rng(3);
    PointCloud cloud;
    for (int i = 0; i < 257; ++i)
        cloud.points.push_back({rng.next_in(-80, 80), rng.next_in(-80, 80),
                                rng.next_in(-5, 10), rng.next_double()});
    save_scan_kitti(cloud, dir.str("a.bin"));
    PointCloud reloaded = load_scan_kitti(dir.str("a.bin"));
    save_scan_kitti(reloaded, dir.str("b.bin"));
    REQUIRE(test_util::read_bytes(dir.str("a.bin")) == test_util::read_bytes(dir.str("b.bin")));
}

// --- KITTI poses ----------------------------------------------------------------

TEST_CASE("pose file identity row reduces to the identity pose") {
    test_util::TempDir dir("poses");
    std::ofstream(dir.str("p.txt")) << "1 0 0 0  0 1 0 0  0 0 1 0\n";
    Trajectory t = load_poses_kitti(dir.str("p.txt"));
    REQUIRE(t.size() == 1);
    CHECK(t.poses[0].x == 0.0);
    CHECK(t.poses[0].y == 0.0);
    CHECK(t.poses[0].yaw == 0.0);
}

TEST_CASE("pose file yaw=pi/2 row reduces per the planar rule") {
    // Rz(pi/2) with translation (2, 3, 9), built from the documented
    // reduction rule and inverted by the loader.
    test_util::TempDir dir("poses");
    std::ofstream(dir.str("p.txt")) << "0 -1 0 2  1 0 0 3  0 0 1 9\n";
    Trajectory t = load_poses_kitti(dir.str("p.txt"));
    REQUIRE(t.size() == 1);
    CHECK(t.poses[0].x == Catch::Approx(2.0));
    CHECK(t.poses[0].y == Catch::Approx(3.0));
    CHECK(t.poses[0].yaw == Catch::Approx(M_PI / 2.0));
}

TEST_CASE("pose file with 11 numbers raises ParseError with the line") {
    test_util::TempDir dir("poses");
    std::ofstream(dir.str("p.txt")) << "1 0 0 0 0 1 0 0 0 0 1\n";
    try {
        load_poses_kitti(dir.str("p.txt"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":1") != std::string::npos);
    }
}

TEST_CASE("pose save/load preserves planar poses") {
    test_util::TempDir dir("poses");
    Trajectory t;
    CounterRng rng(8);
    for (int i = 0; i < 25; ++i) {
        t.poses.push_back({rng.next_in(-100, 100), rng.next_in(-100, 100),
                           wrap_angle(rng.next_in(-M_PI, M_PI))});
        t.timestamps.push_back(static_cast<std::size_t>(i));
    }
    save_poses_kitti(t, dir.str("p.txt"));
    Trajectory back = load_poses_kitti(dir.str("p.txt"));
    REQUIRE(back.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(std::fabs(back.poses[i].x - t.poses[i].x) < 1e-12);
        CHECK(std::fabs(back.poses[i].y - t.poses[i].y) < 1e-12);
        CHECK(std::fabs(wrap_angle(back.poses[i].yaw - t.poses[i].yaw)) < 1e-12);
    }
}

// --- synthetic worlds -------------------------------------------------------------

TEST_CASE("generate_world with zero structures is empty and deterministic") {
    SyntheticWorld w = generate_world(7, 100.0, 0, 0);
    CHECK(w.walls.empty());
    CHECK(w.poles.empty());

    SyntheticWorld a = generate_world(7, 100.0, 20, 30);
    SyntheticWorld b = generate_world(7, 100.0, 20, 30);
    test_util::TempDir dir("world");
    save_world(a, dir.str("a.txt"));
    save_world(b, dir.str("b.txt"));
    CHECK(test_util::read_bytes(dir.str("a.txt")) == test_util::read_bytes(dir.str("b.txt")));

    SyntheticWorld c = generate_world(8, 100.0, 20, 30);
    save_world(c, dir.str("c.txt"));
    CHECK(test_util::read_bytes(dir.str("a.txt")) != test_util::read_bytes(dir.str("c.txt")));
}

TEST_CASE("generate_world keeps geometry inside the extent") {
    SyntheticWorld w = generate_world(11, 40.0, 50, 60);
    for (const Wall& s : w.walls) {
        CHECK(std::fabs(s.x1) <= 40.0);
        CHECK(std::fabs(s.y1) <= 40.0);
        CHECK(std::fabs(s.x2) <= 40.0);
        CHECK(std::fabs(s.y2) <= 40.0);
    }
    for (const Pole& p : w.poles) {
        CHECK(std::fabs(p.x) <= 40.0);
        CHECK(std::fabs(p.y) <= 40.0);
    }
}

TEST_CASE("world text format round-trips") {
    test_util::TempDir dir("world");
    SyntheticWorld w = generate_world(123, 60.0, 12, 17);
    save_world(w, dir.str("w.txt"));
    SyntheticWorld back = load_world(dir.str("w.txt"));
    save_world(back, dir.str("w2.txt"));
    CHECK(test_util::read_bytes(dir.str("w.txt")) == test_util::read_bytes(dir.str("w2.txt")));
}

TEST_CASE("simulate_scan on an empty world returns an empty cloud") {
    SyntheticWorld w = generate_world(1, 50.0, 0, 0);
    PointCloud c = simulate_scan(w, {0, 0, 0}, 30.0, 0.01, 0.0, 5);
    CHECK(c.empty());
}

TEST_CASE("simulate_scan hits a pole dead ahead at its exact position") {
    SyntheticWorld w;
    w.extent = 50.0;
    w.poles.push_back({5.0, 0.0, 2.0});
    PointCloud c = simulate_scan(w, {0, 0, 0}, 30.0, 2.0 * M_PI / 720.0, 0.0, 5);
    REQUIRE_FALSE(c.empty());
    bool found = false;
    for (const Point& p : c)
        found = found || (std::fabs(p.x - 5.0) < 1e-9 && std::fabs(p.y) < 1e-9);
    CHECK(found);
}

TEST_CASE("simulate_scan is deterministic in its seed") {
    SyntheticWorld w = generate_world(21, 50.0, 15, 25);
    PoseSE2 pose{3.0, -4.0, 0.7};
    PointCloud a = simulate_scan(w, pose, 30.0, 0.01, 0.05, 77);
    PointCloud b = simulate_scan(w, pose, 30.0, 0.01, 0.05, 77);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
        CHECK(a.points[i].reflectance == b.points[i].reflectance);
    }
}

TEST_CASE("simulated points lie on structures (exactly when noise-free)") {
    SyntheticWorld w = generate_world(33, 50.0, 20, 30);
    PoseSE2 pose{2.0, 1.0, 0.3};

    PointCloud clean = simulate_scan(w, pose, 40.0, 0.01, 0.0, 9);
    REQUIRE_FALSE(clean.empty());
    for (const Point& p : clean) {
        double wx, wy;
        transform_point(pose, p.x, p.y, wx, wy);
        REQUIRE(distance_to_structure(w, wx, wy) < 1e-9);
    }

    double sigma = 0.05;
    PointCloud noisy = simulate_scan(w, pose, 40.0, 0.01, sigma, 9);
    for (const Point& p : noisy) {
        double wx, wy;
        transform_point(pose, p.x, p.y, wx, wy);
        REQUIRE(distance_to_structure(w, wx, wy) <= 6.0 * sigma + 1e-9);
    }
}

TEST_CASE("loop trajectory revisits its start and spaces poses evenly") {
    Trajectory t = make_loop_trajectory(25.0, 300, 1.25);
    REQUIRE(t.size() == 300);
    // 1.25 loops: the final quarter retraces the first quarter.
    std::size_t revisit = 299;
    double best = 1e9;
    for (std::size_t j = 0; j < 100; ++j)
        best = std::min(best, planar_distance(t.poses[revisit], t.poses[j]));
    CHECK(best < 1.0);
}
