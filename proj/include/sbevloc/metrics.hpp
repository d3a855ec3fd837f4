#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/format.hpp"
#include "sbevloc/geometry.hpp"
#include "sbevloc/localization.hpp"

namespace sbevloc {

struct EvalConfig {
    double positive_radius = 5.0;    // meters; true positive gate
    double loc_success_trans = 2.0;  // meters
    double loc_success_rot = 5.0;    // degrees
    int exclusion_window = 100;      // most recent frames hidden from loop retrieval

    void validate() const {
        if (positive_radius <= 0.0 || loc_success_trans <= 0.0 || loc_success_rot <= 0.0 ||
            exclusion_window <= 0)
            throw ConfigError("evaluation thresholds must be positive");
    }
};

struct PrPoint {
    double threshold;  // descriptor distance acceptance level
    double precision;
    double recall;
};

struct PrSummary {
    std::vector<PrPoint> points;
    double ap = 0.0;
    double max_f1 = 0.0;
    double r_percent = 0.0;  // max recall at 100% precision, in percent
};

/// One retrieval outcome to be swept by the PR threshold.
struct ScoredQuery {
    double distance;        // descriptor distance of the top-1 candidate
    bool positive_possible; // some candidate lies within the positive radius
    bool correct;           // the top-1 candidate does
};

/// Percentage of results whose match lies within the positive radius.
inline double recall_at_1(const std::vector<std::pair<PoseSE2, PoseSE2>>& results,
                          const EvalConfig& cfg) {
    if (results.empty()) throw EmptyResults("recall_at_1 on empty results");
    std::size_t hit = 0;
    for (const auto& [query, matched] : results)
        if (planar_distance(query, matched) < cfg.positive_radius) ++hit;
    return 100.0 * static_cast<double>(hit) / static_cast<double>(results.size());
}

/// Threshold sweep over descriptor distances. A query is accepted at
/// threshold t when its distance is <= t; precision counts correct accepts
/// over accepts, recall counts them over positive-possible queries. AP is the
/// step-wise sum (R_i - R_{i-1}) * P_i, without interpolation.
inline PrSummary pr_curve(const std::vector<ScoredQuery>& scored) {
    if (scored.empty()) throw EmptyResults("pr_curve on empty input");
    std::size_t n_possible = 0;
    for (const ScoredQuery& s : scored) n_possible += s.positive_possible;
    if (n_possible == 0) throw NoPositives("no query has a reachable positive");

    std::vector<double> thresholds;
    thresholds.reserve(scored.size());
    for (const ScoredQuery& s : scored) thresholds.push_back(s.distance);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    PrSummary out;
    double prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t accepts = 0, correct = 0;
        for (const ScoredQuery& s : scored) {
            if (s.distance <= t) {
                ++accepts;
                correct += s.correct;
            }
        }
        double precision = static_cast<double>(correct) / static_cast<double>(accepts);
        double recall = static_cast<double>(correct) / static_cast<double>(n_possible);
        out.points.push_back({t, precision, recall});
        out.ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        if (precision + recall > 0.0)
            out.max_f1 = std::max(out.max_f1, 2.0 * precision * recall / (precision + recall));
        if (precision == 1.0) out.r_percent = std::max(out.r_percent, 100.0 * recall);
    }
    return out;
}

// --- per-frame evaluation data ---------------------------------------------------

/// Everything the loop-closure and ambiguity protocols need per frame.
struct FrameData {
    PoseSE2 pose;
    GlobalDescriptor descriptor;
    std::vector<Keypoint> keypoints;
    std::vector<std::vector<double>> features;
};

inline std::vector<FrameData> compute_frames(const std::vector<PointCloud>& scans,
                                             const Trajectory& traj, const ModelParams& params,
                                             const BevConfig& bev_cfg, const FastConfig& fast_cfg,
                                             int workers = 1) {
    if (scans.size() != traj.poses.size())
        throw ShapeMismatch("scan count does not match pose count");
    std::vector<FrameData> frames(scans.size());
    parallel_for(scans.size(), workers, [&](std::size_t i) {
        FrameData& f = frames[i];
        f.pose = traj.poses[i];
        BevImage bev = project(scans[i], bev_cfg);
        DescribeResult d = describe(bev, params);
        f.descriptor = std::move(d.descriptor);
        f.keypoints = detect_fast(bev, fast_cfg);
        f.features.reserve(f.keypoints.size());
        for (const Keypoint& kp : f.keypoints)
            f.features.push_back(sample_local_feature(d.fmap, kp));
    });
    return frames;
}

inline double descriptor_distance(const GlobalDescriptor& a, const GlobalDescriptor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

struct RelPoseEstimate {
    PoseSE2 t_rel;
    int inliers = 0;
    bool ok = false;
};

inline RelPoseEstimate estimate_relative_pose(const FrameData& query, const FrameData& match,
                                              const LocalizationConfig& cfg, double extent,
                                              double voxel) {
    RelPoseEstimate out;
    std::vector<std::pair<int, int>> pairs =
        match_features(query.features, match.features, cfg.ratio_test);
    std::vector<Correspondence> corr;
    corr.reserve(pairs.size());
    for (auto [qi, di] : pairs)
        corr.push_back({query.keypoints[static_cast<std::size_t>(qi)],
                        match.keypoints[static_cast<std::size_t>(di)]});
    if (corr.size() < 2) return out;
    try {
        RansacResult rr = ransac_se2(corr, cfg.ransac_threshold, cfg.ransac_iters,
                                     cfg.ransac_seed, cfg.min_consensus);
        out.t_rel = relative_pose_from_pixels(rr.pose_px, extent, voxel);
        out.inliers = rr.inlier_count;
        out.ok = true;
    } catch (const NoConsensus&) {
    }
    return out;
}

// --- loop closure protocol --------------------------------------------------------

struct LoopClosureReport {
    std::size_t n_queries = 0;
    std::size_t n_possible = 0;
    bool has_pr = false;
    PrSummary pr;
    std::string note;            // "NoPositives" when the trajectory is loop-free
    double recall_at_1 = 0.0;    // percent over positive-possible queries
    double mean_trans_err = 0.0; // meters, over correctly recognized pairs with a pose
    double mean_rot_err = 0.0;   // degrees
    std::size_t n_pose_pairs = 0;
};

/// Each frame past the exclusion window queries all frames at least
/// exclusion_window older than itself; descriptor distances feed the PR
/// sweep and correct matches get a RANSAC relative-pose error measurement.
inline LoopClosureReport loop_closure_eval(const std::vector<FrameData>& frames,
                                           const LocalizationConfig& loc_cfg,
                                           const EvalConfig& eval_cfg, double extent,
                                           double voxel) {
    eval_cfg.validate();
    std::size_t window = static_cast<std::size_t>(eval_cfg.exclusion_window);
    if (frames.size() <= window)
        throw SequenceTooShort("sequence length " + std::to_string(frames.size()) +
                               " does not exceed the exclusion window " + std::to_string(window));
    LoopClosureReport report;
    std::vector<ScoredQuery> scored;
    double terr_sum = 0.0, rerr_sum = 0.0;
    for (std::size_t i = window + 1; i < frames.size(); ++i) {
        std::size_t limit = i - window;  // candidates are [0, limit)
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        bool possible = false;
        for (std::size_t j = 0; j < limit; ++j) {
            double d = descriptor_distance(frames[i].descriptor, frames[j].descriptor);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(j);
            }
            possible = possible ||
                       planar_distance(frames[i].pose, frames[j].pose) < eval_cfg.positive_radius;
        }
        bool correct = best >= 0 && planar_distance(frames[i].pose, frames[best].pose) <
                                        eval_cfg.positive_radius;
        scored.push_back({best_d, possible, correct});
        ++report.n_queries;
        report.n_possible += possible;
        if (correct) {
            RelPoseEstimate est = estimate_relative_pose(frames[i], frames[best], loc_cfg,
                                                         extent, voxel);
            if (est.ok) {
                PoseSE2 gt = relative(frames[best].pose, frames[i].pose);
                terr_sum += planar_distance(est.t_rel, gt);
                rerr_sum += deg(yaw_error(est.t_rel, gt));
                ++report.n_pose_pairs;
            }
        }
    }
    if (report.n_possible == 0) {
        report.note = "NoPositives";
    } else {
        report.pr = pr_curve(scored);
        report.has_pr = true;
        std::size_t correct = 0;
        for (const ScoredQuery& s : scored) correct += s.correct;
        report.recall_at_1 =
            100.0 * static_cast<double>(correct) / static_cast<double>(report.n_possible);
    }
    if (report.n_pose_pairs > 0) {
        report.mean_trans_err = terr_sum / static_cast<double>(report.n_pose_pairs);
        report.mean_rot_err = rerr_sum / static_cast<double>(report.n_pose_pairs);
    }
    return report;
}

// --- global localization metrics ----------------------------------------------------

struct LocalizationRecord {
    PoseSE2 truth;        // ground-truth query pose
    PoseSE2 matched_pose; // retrieved keyframe's pose
    PoseSE2 estimated;    // composed global pose estimate
    bool pose_ok = false;
};

struct LocalizationSummary {
    double recall = 0.0;        // percent recognized within the positive radius
    double success_rate = 0.0;  // percent within the translation and rotation gates
    double mean_trans_err = 0.0;
    double mean_rot_err = 0.0;  // degrees
    std::size_t total = 0;
    std::size_t recognized = 0;
    std::size_t successes = 0;
};

/// Success requires both gates (e_t below loc_success_trans and e_r below
/// loc_success_rot); mean errors are taken over recognized queries with a
/// pose estimate.
inline LocalizationSummary localization_eval(const std::vector<LocalizationRecord>& records,
                                             const EvalConfig& cfg) {
    if (records.empty()) throw EmptyResults("localization_eval on empty results");
    LocalizationSummary s;
    s.total = records.size();
    double terr = 0.0, rerr = 0.0;
    std::size_t measured = 0;
    for (const LocalizationRecord& r : records) {
        bool recognized = planar_distance(r.truth, r.matched_pose) < cfg.positive_radius;
        s.recognized += recognized;
        if (!r.pose_ok) continue;
        double et = planar_distance(r.truth, r.estimated);
        double er = deg(yaw_error(r.truth, r.estimated));
        if (et < cfg.loc_success_trans && er < cfg.loc_success_rot) ++s.successes;
        if (recognized) {
            terr += et;
            rerr += er;
            ++measured;
        }
    }
    s.recall = 100.0 * static_cast<double>(s.recognized) / static_cast<double>(s.total);
    s.success_rate = 100.0 * static_cast<double>(s.successes) / static_cast<double>(s.total);
    if (measured > 0) {
        s.mean_trans_err = terr / static_cast<double>(measured);
        s.mean_rot_err = rerr / static_cast<double>(measured);
    }
    return s;
}

// --- ambiguity profile -----------------------------------------------------------------

struct AmbiguityRow {
    double signed_geo_dist;  // meters; negative for frames earlier than the query
    double feat_dist;        // descriptor Euclidean distance
};

/// Descriptor distance against geographic distance for every frame except
/// the query itself; the sign encodes chronological order.
inline std::vector<AmbiguityRow> ambiguity_profile(std::size_t query_index,
                                                   const std::vector<FrameData>& frames) {
    if (query_index >= frames.size()) throw OutOfBounds("ambiguity query index out of range");
    std::vector<AmbiguityRow> rows;
    rows.reserve(frames.size() - 1);
    for (std::size_t j = 0; j < frames.size(); ++j) {
        if (j == query_index) continue;
        double geo = planar_distance(frames[query_index].pose, frames[j].pose);
        rows.push_back({j < query_index ? -geo : geo,
                        descriptor_distance(frames[query_index].descriptor,
                                            frames[j].descriptor)});
    }
    return rows;
}

// --- CSV emission ------------------------------------------------------------------------

inline void write_pr_csv(const PrSummary& pr, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out << "threshold,precision,recall\n";
    for (const PrPoint& p : pr.points)
        out << fmt_double(p.threshold) << "," << fmt_double(p.precision) << ","
            << fmt_double(p.recall) << "\n";
}

inline void write_summary_csv(const std::vector<std::pair<std::string, double>>& rows,
                              const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out << "metric,value\n";
    for (const auto& [k, v] : rows) out << k << "," << fmt_double(v) << "\n";
}

inline void write_ambiguity_csv(const std::vector<AmbiguityRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out << "geo_dist,feat_dist\n";
    for (const AmbiguityRow& r : rows)
        out << fmt_double(r.signed_geo_dist) << "," << fmt_double(r.feat_dist) << "\n";
}

}  // namespace sbevloc
