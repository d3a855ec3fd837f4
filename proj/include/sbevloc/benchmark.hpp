#pragma once

#include <cstdint>
#include <vector>

#include "sbevloc/config.hpp"
#include "sbevloc/localization.hpp"
#include "sbevloc/metrics.hpp"
#include "sbevloc/synthetic.hpp"
#include "sbevloc/trainer.hpp"

namespace sbevloc {

/// A fully in-memory synthetic run: world, loop trajectory with scans, and
/// held-out displaced query scans. Everything derives from config seeds.
struct SyntheticBenchmark {
    SyntheticWorld world;
    Trajectory traj;
    std::vector<PointCloud> scans;
    Trajectory query_poses;
    std::vector<PointCloud> query_scans;
};

inline SyntheticBenchmark make_benchmark(const Config& cfg) {
    SyntheticBenchmark b;
    b.world = generate_world(cfg.get_seed("world.seed"), cfg.get_double("world.extent"),
                             static_cast<std::size_t>(cfg.get_int("world.walls")),
                             static_cast<std::size_t>(cfg.get_int("world.poles")));
    b.traj = make_loop_trajectory(cfg.get_double("synth.radius"),
                                  static_cast<std::size_t>(cfg.get_int("synth.scans")),
                                  cfg.get_double("synth.loops"));
    double angular_res = 2.0 * M_PI / cfg.get_double("scan.rays");
    double range = cfg.get_double("scan.range");
    double sigma = cfg.get_double("scan.noise_sigma");
    std::uint64_t scan_seed = cfg.get_seed("scan.seed");
    b.scans.reserve(b.traj.poses.size());
    for (std::size_t i = 0; i < b.traj.poses.size(); ++i)
        b.scans.push_back(simulate_scan(b.world, b.traj.poses[i], range, angular_res, sigma,
                                        derive_seed(scan_seed, 0, i)));
    std::size_t n_queries = static_cast<std::size_t>(cfg.get_int("synth.queries"));
    if (n_queries > 0) {
        b.query_poses = sample_query_poses(b.traj, n_queries,
                                           cfg.get_double("synth.query_min_offset"),
                                           cfg.get_double("synth.query_max_offset"),
                                           cfg.get_seed("synth.query_seed"));
        for (std::size_t q = 0; q < b.query_poses.poses.size(); ++q)
            b.query_scans.push_back(simulate_scan(b.world, b.query_poses.poses[q], range,
                                                  angular_res, sigma,
                                                  derive_seed(scan_seed, 1, q)));
    }
    return b;
}

struct BenchmarkEval {
    LocalizationDatabase db;
    std::vector<MatchResult> matches;
    std::vector<LocalizationRecord> records;
    LocalizationSummary summary;
};

/// Builds the keyframe database from the benchmark trajectory and localizes
/// every held-out query; summary.recall is the retrieval recall@1.
inline BenchmarkEval evaluate_benchmark(const SyntheticBenchmark& bench,
                                        const ModelParams& params, const Config& cfg,
                                        int workers = 1) {
    BenchmarkEval ev;
    LocalizationConfig loc = cfg.localization();
    ev.db = build_database(bench.scans, bench.traj, params, cfg.bev(), loc, workers);
    ev.matches.resize(bench.query_scans.size());
    parallel_for(bench.query_scans.size(), workers, [&](std::size_t i) {
        ev.matches[i] = localize(bench.query_scans[i], ev.db, params, loc);
    });
    for (std::size_t i = 0; i < ev.matches.size(); ++i) {
        const MatchResult& m = ev.matches[i];
        ev.records.push_back({bench.query_poses.poses[i],
                              ev.db.entries[static_cast<std::size_t>(m.matched_index)].pose,
                              m.t_global, m.pose_ok});
    }
    ev.summary = localization_eval(ev.records, cfg.eval());
    return ev;
}

/// Mines one triplet per held-out query scan (for ranking-objective checks).
inline std::vector<PatchTriplet> heldout_triplets(const SyntheticBenchmark& bench,
                                                  const Config& cfg, std::uint64_t seed) {
    BevConfig bev_cfg = cfg.bev();
    TripletConfig tcfg = cfg.triplet();
    std::vector<PatchTriplet> out;
    for (std::size_t i = 0; i < bench.query_scans.size(); ++i) {
        BevImage bev = project(bench.query_scans[i], bev_cfg);
        try {
            out.push_back(generate_triplet(bev, tcfg, derive_seed(seed, 2, i)));
        } catch (const NoValidQuery&) {
        }
    }
    return out;
}

}  // namespace sbevloc
