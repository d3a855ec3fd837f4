#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sbevloc/config.hpp"
#include "sbevloc/kitti_io.hpp"
#include "sbevloc/metrics.hpp"
#include "sbevloc/synthetic.hpp"
#include "sbevloc/trainer.hpp"

namespace sbevloc::cli {

namespace fs = std::filesystem;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    bool quiet = false;
    int workers = 1;
};

namespace detail {

inline void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
    cmd->add_option("-c,--config", c.config_path, "configuration file (section.key = value)");
    cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
    auto* out = cmd->add_option("-o,--out", c.out_dir, "output directory");
    if (needs_out) out->required();
    cmd->add_flag("-q,--quiet", c.quiet, "suppress progress logging");
    cmd->add_option("--workers", c.workers, "worker threads for parallel phases");
}

inline Config resolve_config(const Common& c) {
    Config cfg;
    if (!c.config_path.empty()) cfg.parse_file(c.config_path);
    for (const std::string& o : c.overrides) cfg.apply_override(o);
    return cfg;
}

inline void prepare_out(const Common& c, const Config& cfg) {
    fs::create_directories(c.out_dir);
    std::ofstream snap(c.out_dir + "/resolved.cfg", std::ios::trunc);
    snap << cfg.snapshot();
}

inline void log(const Common& c, const std::string& msg) {
    if (!c.quiet) std::cerr << "[sbevloc] " << msg << "\n";
}

inline std::string scan_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06zu.bin", i);
    return buf;
}

inline std::vector<std::string> list_scan_files(const std::string& path) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".bin")
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
    } else if (fs::is_regular_file(path)) {
        files.push_back(path);
    }
    if (files.empty()) throw IoError("no scan files found under: " + path);
    return files;
}

inline std::vector<PointCloud> load_scans(const std::string& path) {
    std::vector<PointCloud> scans;
    for (const std::string& f : list_scan_files(path)) scans.push_back(load_scan_kitti(f));
    return scans;
}

// --- subcommands ------------------------------------------------------------

inline void run_synth(const Common& c, const Config& cfg) {
    SyntheticWorld world = generate_world(cfg.get_seed("world.seed"),
                                          cfg.get_double("world.extent"),
                                          static_cast<std::size_t>(cfg.get_int("world.walls")),
                                          static_cast<std::size_t>(cfg.get_int("world.poles")));
    save_world(world, c.out_dir + "/world.txt");

    Trajectory traj = make_loop_trajectory(cfg.get_double("synth.radius"),
                                           static_cast<std::size_t>(cfg.get_int("synth.scans")),
                                           cfg.get_double("synth.loops"));
    save_poses_kitti(traj, c.out_dir + "/poses.txt");

    double angular_res = 2.0 * M_PI / cfg.get_double("scan.rays");
    double range = cfg.get_double("scan.range");
    double sigma = cfg.get_double("scan.noise_sigma");
    std::uint64_t scan_seed = cfg.get_seed("scan.seed");

    fs::create_directories(c.out_dir + "/scans");
    for (std::size_t i = 0; i < traj.poses.size(); ++i) {
        PointCloud scan = simulate_scan(world, traj.poses[i], range, angular_res, sigma,
                                        derive_seed(scan_seed, 0, i));
        save_scan_kitti(scan, c.out_dir + "/scans/" + scan_name(i));
    }
    log(c, "wrote " + std::to_string(traj.poses.size()) + " scans");

    std::size_t n_queries = static_cast<std::size_t>(cfg.get_int("synth.queries"));
    if (n_queries > 0) {
        Trajectory queries = sample_query_poses(traj, n_queries,
                                                cfg.get_double("synth.query_min_offset"),
                                                cfg.get_double("synth.query_max_offset"),
                                                cfg.get_seed("synth.query_seed"));
        save_poses_kitti(queries, c.out_dir + "/query_poses.txt");
        fs::create_directories(c.out_dir + "/queries");
        for (std::size_t q = 0; q < queries.poses.size(); ++q) {
            PointCloud scan = simulate_scan(world, queries.poses[q], range, angular_res, sigma,
                                            derive_seed(scan_seed, 1, q));
            save_scan_kitti(scan, c.out_dir + "/queries/" + scan_name(q));
        }
        log(c, "wrote " + std::to_string(n_queries) + " query scans");
    }
}

inline void run_project(const Common& c, const Config& cfg, const std::string& scans_path,
                        bool dump_keypoints) {
    BevConfig bev_cfg = cfg.bev();
    FastConfig fast_cfg = cfg.fast();
    for (const std::string& f : list_scan_files(scans_path)) {
        PointCloud scan = load_scan_kitti(f);
        BevImage img = project(scan, bev_cfg);
        std::string stem = fs::path(f).stem().string();
        write_pgm(img, c.out_dir + "/" + stem + ".pgm");
        if (dump_keypoints) {
            std::ofstream kcsv(c.out_dir + "/" + stem + "_keypoints.csv", std::ios::trunc);
            kcsv << keypoints_csv(detect_fast(img, fast_cfg));
        }
    }
    log(c, "projected scans from " + scans_path);
}

inline void run_train(const Common& c, const Config& cfg, const std::string& scans_path,
                      bool dry_run) {
    std::vector<PointCloud> scans = load_scans(scans_path);
    ModelParams params = init_params(cfg.model(), cfg.get_seed("model.seed"));
    TrainConfig tc = cfg.train(c.workers, dry_run);
    TrainResult result =
        train(scans, std::move(params), cfg.bev(), cfg.triplet(), cfg.loss(), tc, c.out_dir);
    if (tc.dry_run) save_checkpoint(result.params, c.out_dir + "/ckpt_final.bin");
    log(c, "trained on " + std::to_string(scans.size()) + " scans; skipped " +
               std::to_string(result.skipped_scans) + " (no valid triplet)");
}

inline void run_build_db(const Common& c, const Config& cfg, const std::string& scans_path,
                         const std::string& poses_path, const std::string& ckpt_path) {
    std::vector<PointCloud> scans = load_scans(scans_path);
    Trajectory traj = load_poses_kitti(poses_path);
    ModelParams params = load_checkpoint(ckpt_path);
    LocalizationDatabase db =
        build_database(scans, traj, params, cfg.bev(), cfg.localization(), c.workers);
    save_database(db, c.out_dir + "/db.bin");
    log(c, "database: " + std::to_string(db.entries.size()) + " keyframes from " +
               std::to_string(scans.size()) + " scans");
}

inline void write_match_row(std::ofstream& out, std::size_t qi, const MatchResult& r) {
    out << qi << "," << r.matched_index << "," << fmt_double(r.descriptor_distance) << ",";
    if (r.pose_ok)
        out << fmt_double(r.t_global.x) << "," << fmt_double(r.t_global.y) << ","
            << fmt_double(r.t_global.yaw) << "," << r.inlier_count << "\n";
    else
        out << "nan,nan,nan,0\n";
}

inline void run_localize(const Common& c, const Config& cfg, const std::string& db_path,
                         const std::string& ckpt_path, const std::string& queries_path) {
    LocalizationDatabase db = load_database(db_path);
    ModelParams params = load_checkpoint(ckpt_path);
    LocalizationConfig loc = cfg.localization();
    std::vector<std::string> files = list_scan_files(queries_path);

    std::vector<MatchResult> results(files.size());
    parallel_for(files.size(), c.workers, [&](std::size_t i) {
        results[i] = localize(load_scan_kitti(files[i]), db, params, loc);
    });
    std::ofstream out(c.out_dir + "/results.csv", std::ios::trunc);
    out << "query,match,desc_distance,tx,ty,yaw,inliers\n";
    for (std::size_t i = 0; i < results.size(); ++i) write_match_row(out, i, results[i]);
    log(c, "localized " + std::to_string(files.size()) + " queries");
}

inline void run_eval_global(const Common& c, const Config& cfg, const std::string& db_path,
                            const std::string& ckpt_path, const std::string& queries_path,
                            const std::string& query_poses_path) {
    LocalizationDatabase db = load_database(db_path);
    ModelParams params = load_checkpoint(ckpt_path);
    LocalizationConfig loc = cfg.localization();
    EvalConfig ev = cfg.eval();
    Trajectory truth = load_poses_kitti(query_poses_path);
    std::vector<std::string> files = list_scan_files(queries_path);
    if (files.size() != truth.poses.size())
        throw ShapeMismatch("query scan count does not match query pose count");

    std::vector<MatchResult> results(files.size());
    parallel_for(files.size(), c.workers, [&](std::size_t i) {
        results[i] = localize(load_scan_kitti(files[i]), db, params, loc);
    });

    std::vector<LocalizationRecord> records;
    std::ofstream out(c.out_dir + "/results.csv", std::ios::trunc);
    out << "query,match,desc_distance,tx,ty,yaw,inliers\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        write_match_row(out, i, results[i]);
        const MatchResult& r = results[i];
        records.push_back({truth.poses[i],
                           db.entries[static_cast<std::size_t>(r.matched_index)].pose,
                           r.t_global, r.pose_ok});
    }
    LocalizationSummary s = localization_eval(records, ev);
    write_summary_csv({{"recall", s.recall},
                       {"success_rate", s.success_rate},
                       {"mean_trans_err", s.mean_trans_err},
                       {"mean_rot_err", s.mean_rot_err},
                       {"total", static_cast<double>(s.total)},
                       {"recognized", static_cast<double>(s.recognized)},
                       {"successes", static_cast<double>(s.successes)}},
                      c.out_dir + "/summary.csv");
    log(c, "recall " + fmt_double(s.recall) + "%, success rate " + fmt_double(s.success_rate) +
               "%");
}

inline void run_eval_loop(const Common& c, const Config& cfg, const std::string& scans_path,
                          const std::string& poses_path, const std::string& ckpt_path) {
    std::vector<PointCloud> scans = load_scans(scans_path);
    Trajectory traj = load_poses_kitti(poses_path);
    ModelParams params = load_checkpoint(ckpt_path);
    BevConfig bev_cfg = cfg.bev();
    EvalConfig ev = cfg.eval();
    if (scans.size() <= static_cast<std::size_t>(ev.exclusion_window))
        throw SequenceTooShort("sequence of " + std::to_string(scans.size()) +
                               " frames needs more than eval.exclusion_window = " +
                               std::to_string(ev.exclusion_window));
    std::vector<FrameData> frames =
        compute_frames(scans, traj, params, bev_cfg, cfg.fast(), c.workers);
    LoopClosureReport report =
        loop_closure_eval(frames, cfg.localization(), ev, bev_cfg.extent, bev_cfg.voxel);
    if (report.has_pr) write_pr_csv(report.pr, c.out_dir + "/pr.csv");
    write_summary_csv({{"ap", report.pr.ap},
                       {"max_f1", report.pr.max_f1},
                       {"r_percent", report.pr.r_percent},
                       {"recall_at_1", report.recall_at_1},
                       {"mean_trans_err", report.mean_trans_err},
                       {"mean_rot_err", report.mean_rot_err},
                       {"n_queries", static_cast<double>(report.n_queries)},
                       {"n_possible", static_cast<double>(report.n_possible)},
                       {"n_pose_pairs", static_cast<double>(report.n_pose_pairs)},
                       {"no_positives", report.note == "NoPositives" ? 1.0 : 0.0}},
                      c.out_dir + "/summary.csv");
    log(c, report.has_pr ? "loop closure AP " + fmt_double(report.pr.ap)
                         : "loop closure: no positive-possible queries");
}

inline void run_ambiguity(const Common& c, const Config& cfg, const std::string& scans_path,
                          const std::string& poses_path, const std::string& ckpt_path) {
    std::vector<PointCloud> scans = load_scans(scans_path);
    Trajectory traj = load_poses_kitti(poses_path);
    ModelParams params = load_checkpoint(ckpt_path);
    std::vector<FrameData> frames =
        compute_frames(scans, traj, params, cfg.bev(), cfg.fast(), c.workers);
    std::size_t qi = static_cast<std::size_t>(cfg.get_int("eval.query_index"));
    write_ambiguity_csv(ambiguity_profile(qi, frames), c.out_dir + "/ambiguity.csv");
    log(c, "ambiguity profile for frame " + std::to_string(qi));
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Returns the process exit
/// code: 0 success, 1 usage error, 2 data error, 3 numerical abort.
inline int run(std::vector<std::string> args) {
    CLI::App app{"S-BEVLoc: self-supervised BEV LiDAR global localization"};
    app.require_subcommand(1);
    bool show_keys = false;
    app.add_flag("--config-help", show_keys, "list all config keys with defaults and exit");

    Common synth_c, project_c, train_c, builddb_c, localize_c, evglobal_c, evloop_c, amb_c;
    std::string scans_path, poses_path, ckpt_path, db_path, queries_path, query_poses_path;
    bool dump_keypoints = false, dry_run = false;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic world, scans and poses");
    detail::add_common(synth, synth_c);

    CLI::App* proj = app.add_subcommand("project", "project scans to BEV images (PGM)");
    detail::add_common(proj, project_c);
    proj->add_option("--scans", scans_path, "scan file or directory")->required();
    proj->add_flag("--keypoints", dump_keypoints, "also dump FAST keypoints as CSV");

    CLI::App* tr = app.add_subcommand("train", "self-supervised training (no pose input)");
    detail::add_common(tr, train_c);
    tr->add_option("--scans", scans_path, "scan directory")->required();
    tr->add_flag("--dry-run", dry_run, "skip updates; write the initialization checkpoint");

    CLI::App* bdb = app.add_subcommand("build-db", "build the keyframe localization database");
    detail::add_common(bdb, builddb_c);
    bdb->add_option("--scans", scans_path, "scan directory")->required();
    bdb->add_option("--poses", poses_path, "KITTI pose file")->required();
    bdb->add_option("--ckpt", ckpt_path, "model checkpoint")->required();

    CLI::App* loc = app.add_subcommand("localize", "retrieve and estimate query poses");
    detail::add_common(loc, localize_c);
    loc->add_option("--db", db_path, "database file")->required();
    loc->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    loc->add_option("--queries", queries_path, "query scan file or directory")->required();

    CLI::App* evg = app.add_subcommand("eval-global", "global localization metrics");
    detail::add_common(evg, evglobal_c);
    evg->add_option("--db", db_path, "database file")->required();
    evg->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    evg->add_option("--queries", queries_path, "query scan directory")->required();
    evg->add_option("--query-poses", query_poses_path, "ground-truth query poses")->required();

    CLI::App* evl = app.add_subcommand("eval-loop", "loop closure protocol metrics");
    detail::add_common(evl, evloop_c);
    evl->add_option("--scans", scans_path, "scan directory")->required();
    evl->add_option("--poses", poses_path, "KITTI pose file")->required();
    evl->add_option("--ckpt", ckpt_path, "model checkpoint")->required();

    CLI::App* amb = app.add_subcommand("ambiguity", "descriptor vs geographic distance profile");
    detail::add_common(amb, amb_c);
    amb->add_option("--scans", scans_path, "scan directory")->required();
    amb->add_option("--poses", poses_path, "KITTI pose file")->required();
    amb->add_option("--ckpt", ckpt_path, "model checkpoint")->required();

    std::vector<const char*> argv;
    argv.push_back("sbevloc");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 1;
    }
    if (show_keys) {
        for (const ConfigKey& k : config_registry())
            std::cout << k.key << " = " << k.default_value << "  # " << k.help << "\n";
        return 0;
    }

    try {
        auto dispatch = [&](const Common& c, auto&& fn) {
            Config cfg = detail::resolve_config(c);
            detail::prepare_out(c, cfg);
            fn(c, cfg);
        };
        if (synth->parsed())
            dispatch(synth_c, [&](const Common& c, const Config& cfg) { detail::run_synth(c, cfg); });
        else if (proj->parsed())
            dispatch(project_c, [&](const Common& c, const Config& cfg) {
                detail::run_project(c, cfg, scans_path, dump_keypoints);
            });
        else if (tr->parsed())
            dispatch(train_c, [&](const Common& c, const Config& cfg) {
                detail::run_train(c, cfg, scans_path, dry_run);
            });
        else if (bdb->parsed())
            dispatch(builddb_c, [&](const Common& c, const Config& cfg) {
                detail::run_build_db(c, cfg, scans_path, poses_path, ckpt_path);
            });
        else if (loc->parsed())
            dispatch(localize_c, [&](const Common& c, const Config& cfg) {
                detail::run_localize(c, cfg, db_path, ckpt_path, queries_path);
            });
        else if (evg->parsed())
            dispatch(evglobal_c, [&](const Common& c, const Config& cfg) {
                detail::run_eval_global(c, cfg, db_path, ckpt_path, queries_path,
                                        query_poses_path);
            });
        else if (evl->parsed())
            dispatch(evloop_c, [&](const Common& c, const Config& cfg) {
                detail::run_eval_loop(c, cfg, scans_path, poses_path, ckpt_path);
            });
        else if (amb->parsed())
            dispatch(amb_c, [&](const Common& c, const Config& cfg) {
                detail::run_ambiguity(c, cfg, scans_path, poses_path, ckpt_path);
            });
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind) {
            case ErrorKind::usage: return 1;
            case ErrorKind::data: return 2;
            case ErrorKind::numeric: return 3;
        }
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace sbevloc::cli
