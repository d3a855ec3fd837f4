#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/extractor.hpp"
#include "sbevloc/fast.hpp"
#include "sbevloc/parallel.hpp"
#include "sbevloc/point_cloud.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/tensor_file.hpp"

namespace sbevloc {

struct LocalizationConfig {
    double keyframe_spacing = 1.0;   // meters of travel between keyframes
    double ransac_threshold = 2.0;   // inlier radius, pixels
    int ransac_iters = 500;
    int min_consensus = 4;           // NoConsensus below this inlier count
    std::uint64_t ransac_seed = 0;
    double ratio_test = 0.0;         // 0 disables; else best/second < ratio required
    FastConfig fast;

    void validate() const {
        if (keyframe_spacing <= 0.0) throw ConfigError("db.spacing must be positive");
        if (ransac_threshold <= 0.0) throw ConfigError("loc.ransac_threshold must be positive");
        if (ransac_iters < 1) throw ConfigError("loc.ransac_iters must be >= 1");
    }
};

struct DatabaseEntry {
    BevImage bev;
    PoseSE2 pose;
    GlobalDescriptor descriptor;
    std::vector<Keypoint> keypoints;
    std::vector<std::vector<double>> local_features;  // unit vectors, one per keypoint
};

struct LocalizationDatabase {
    std::vector<DatabaseEntry> entries;
    BevConfig bev_cfg;  // geometry every query must be projected with
};

struct Correspondence {
    Keypoint query;
    Keypoint db;
};

struct MatchResult {
    int matched_index = -1;
    double descriptor_distance = 0.0;
    std::vector<Correspondence> correspondences;
    PoseSE2 t_rel;     // query pose in the matched keyframe's frame, meters
    PoseSE2 t_global;  // t_match * t_rel
    int inlier_count = 0;
    bool pose_ok = false;
    std::string failure;  // set when pose estimation failed
};

/// Unit-normalized feature column at the keypoint pixel (nearest sampling).
inline std::vector<double> sample_local_feature(const FeatureMap& fmap, const Keypoint& kp) {
    if (kp.row < 0 || kp.row >= fmap.rows || kp.col < 0 || kp.col >= fmap.cols)
        throw OutOfBounds("keypoint outside the feature map");
    const double* p = fmap.at(kp.row, kp.col);
    std::vector<double> f(p, p + fmap.channels);
    double n2 = 0.0;
    for (double v : f) n2 += v * v;
    double n = std::sqrt(n2);
    if (n >= kNormEps)
        for (double& v : f) v /= n;
    else
        std::fill(f.begin(), f.end(), 0.0);
    return f;
}

/// Mutual nearest-neighbor matching on Euclidean feature distance, ties to
/// the lowest index. ratio > 0 additionally applies Lowe's test on the query
/// side.
inline std::vector<std::pair<int, int>> match_features(
    const std::vector<std::vector<double>>& query_feats,
    const std::vector<std::vector<double>>& db_feats, double ratio = 0.0) {
    auto dist2 = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a[i] - b[i];
            s += d * d;
        }
        return s;
    };
    std::vector<std::pair<int, int>> out;
    if (query_feats.empty() || db_feats.empty()) return out;

    std::vector<int> best_db(query_feats.size(), -1);
    std::vector<double> best_d(query_feats.size()), second_d(query_feats.size());
    for (std::size_t i = 0; i < query_feats.size(); ++i) {
        double b1 = std::numeric_limits<double>::infinity();
        double b2 = b1;
        int bj = -1;
        for (std::size_t j = 0; j < db_feats.size(); ++j) {
            double d = dist2(query_feats[i], db_feats[j]);
            if (d < b1) {
                b2 = b1;
                b1 = d;
                bj = static_cast<int>(j);
            } else if (d < b2) {
                b2 = d;
            }
        }
        best_db[i] = bj;
        best_d[i] = b1;
        second_d[i] = b2;
    }
    std::vector<int> best_query(db_feats.size(), -1);
    for (std::size_t j = 0; j < db_feats.size(); ++j) {
        double b1 = std::numeric_limits<double>::infinity();
        int bi = -1;
        for (std::size_t i = 0; i < query_feats.size(); ++i) {
            double d = dist2(query_feats[i], db_feats[j]);
            if (d < b1) {
                b1 = d;
                bi = static_cast<int>(i);
            }
        }
        best_query[j] = bi;
    }
    for (std::size_t i = 0; i < query_feats.size(); ++i) {
        int j = best_db[i];
        if (j < 0 || best_query[j] != static_cast<int>(i)) continue;
        if (ratio > 0.0 && std::isfinite(second_d[i]) &&
            !(std::sqrt(best_d[i]) < ratio * std::sqrt(second_d[i])))
            continue;
        out.push_back({static_cast<int>(i), j});
    }
    return out;
}

// --- RANSAC rigid alignment in pixel space -----------------------------------

struct RansacResult {
    PoseSE2 pose_px;  // (x, y) = (row, col) displacement in pixels, yaw in radians
    std::vector<bool> inliers;
    int inlier_count = 0;
};

namespace detail {
struct Rigid2 {
    double c = 1.0, s = 0.0, tr = 0.0, tc = 0.0;
    void apply(double r, double col, double& or_, double& oc) const {
        or_ = c * r - s * col + tr;
        oc = s * r + c * col + tc;
    }
};
}  // namespace detail

/// 2-point RANSAC for the rigid transform mapping query pixel locations to
/// database pixel locations, followed by a closed-form least-squares refit on
/// the consensus set. Deterministic in rng_seed.
inline RansacResult ransac_se2(const std::vector<Correspondence>& corr, double inlier_threshold,
                               int max_iters, std::uint64_t rng_seed, int min_consensus = 4) {
    if (corr.size() < 2)
        throw TooFewCorrespondences("RANSAC needs at least 2 correspondences, got " +
                                    std::to_string(corr.size()));
    const std::size_t n = corr.size();
    const double thr2 = inlier_threshold * inlier_threshold;
    CounterRng rng(rng_seed, 0);

    auto model_from = [&](std::size_t i, std::size_t j, detail::Rigid2& m) {
        double vax = corr[j].query.row - corr[i].query.row;
        double vay = corr[j].query.col - corr[i].query.col;
        double vbx = corr[j].db.row - corr[i].db.row;
        double vby = corr[j].db.col - corr[i].db.col;
        if (std::hypot(vax, vay) < 1e-9) return false;
        double ang = std::atan2(vax * vby - vay * vbx, vax * vbx + vay * vby);
        m.c = std::cos(ang);
        m.s = std::sin(ang);
        m.tr = corr[i].db.row - (m.c * corr[i].query.row - m.s * corr[i].query.col);
        m.tc = corr[i].db.col - (m.s * corr[i].query.row + m.c * corr[i].query.col);
        return true;
    };
    auto score = [&](const detail::Rigid2& m, std::vector<bool>& mask, double& rms) {
        int count = 0;
        double se = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pr, pc;
            m.apply(corr[i].query.row, corr[i].query.col, pr, pc);
            double e2 = (pr - corr[i].db.row) * (pr - corr[i].db.row) +
                        (pc - corr[i].db.col) * (pc - corr[i].db.col);
            bool in = e2 <= thr2;
            mask[i] = in;
            if (in) {
                ++count;
                se += e2;
            }
        }
        rms = count > 0 ? std::sqrt(se / count) : std::numeric_limits<double>::infinity();
        return count;
    };

    int best_count = -1;
    double best_rms = std::numeric_limits<double>::infinity();
    std::vector<bool> best_mask(n, false), mask(n, false);
    for (int it = 0; it < max_iters; ++it) {
        std::size_t i = rng.next_below(n);
        std::size_t j = rng.next_below(n - 1);
        if (j >= i) ++j;
        detail::Rigid2 m;
        if (!model_from(i, j, m)) continue;
        double rms;
        int count = score(m, mask, rms);
        if (count > best_count || (count == best_count && rms < best_rms)) {
            best_count = count;
            best_rms = rms;
            best_mask = mask;
        }
    }
    if (best_count < min_consensus)
        throw NoConsensus("best consensus " + std::to_string(std::max(best_count, 0)) +
                          " below minimum " + std::to_string(min_consensus));

    // Least-squares refit on the consensus set: centroid subtraction and the
    // atan2 of the 2x2 cross-covariance terms.
    double mar = 0.0, mac = 0.0, mbr = 0.0, mbc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!best_mask[i]) continue;
        mar += corr[i].query.row;
        mac += corr[i].query.col;
        mbr += corr[i].db.row;
        mbc += corr[i].db.col;
    }
    mar /= best_count;
    mac /= best_count;
    mbr /= best_count;
    mbc /= best_count;
    double s_dot = 0.0, s_cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!best_mask[i]) continue;
        double ar = corr[i].query.row - mar, ac = corr[i].query.col - mac;
        double br = corr[i].db.row - mbr, bc = corr[i].db.col - mbc;
        s_dot += ar * br + ac * bc;
        s_cross += ar * bc - ac * br;
    }
    double ang = (s_dot == 0.0 && s_cross == 0.0) ? 0.0 : std::atan2(s_cross, s_dot);
    detail::Rigid2 refined;
    refined.c = std::cos(ang);
    refined.s = std::sin(ang);
    refined.tr = mbr - (refined.c * mar - refined.s * mac);
    refined.tc = mbc - (refined.s * mar + refined.c * mac);

    RansacResult res;
    res.pose_px = {refined.tr, refined.tc, wrap_angle(ang)};
    res.inliers = best_mask;
    res.inlier_count = best_count;
    return res;
}

/// Converts a pixel-space rigid transform to the metric SE(2) relative pose.
/// Cell centers map to metric coordinates by x = (col+0.5)*voxel - extent,
/// y = extent - (row+0.5)*voxel; that map is a scaled rotation, so the angle
/// carries over and only the translation needs conjugation.
inline PoseSE2 relative_pose_from_pixels(const PoseSE2& px, double extent, double voxel) {
    double ex = 0.5 * voxel - extent;
    double ey = extent - 0.5 * voxel;
    double c = std::cos(px.yaw), s = std::sin(px.yaw);
    // D*u with D = [[0, voxel], [-voxel, 0]]
    double dux = voxel * px.y;
    double duy = -voxel * px.x;
    PoseSE2 rel;
    rel.x = (1.0 - c) * ex + s * ey + dux;
    rel.y = -s * ex + (1.0 - c) * ey + duy;
    rel.yaw = px.yaw;
    return rel;
}

// --- database -----------------------------------------------------------------

/// Keyframes are scans whose cumulative travel distance since the previous
/// keyframe reaches the spacing threshold; the first scan is always kept.
inline std::vector<std::size_t> select_keyframes(const Trajectory& traj, double spacing) {
    if (traj.poses.empty()) throw EmptyTrajectory("no poses to select keyframes from");
    std::vector<std::size_t> kept{0};
    double travelled = 0.0;
    for (std::size_t i = 1; i < traj.poses.size(); ++i) {
        travelled += planar_distance(traj.poses[i - 1], traj.poses[i]);
        if (travelled >= spacing) {
            kept.push_back(i);
            travelled = 0.0;
        }
    }
    return kept;
}

inline DatabaseEntry make_database_entry(const PointCloud& scan, const PoseSE2& pose,
                                         const ModelParams& params, const BevConfig& bev_cfg,
                                         const LocalizationConfig& cfg) {
    DatabaseEntry e;
    e.bev = project(scan, bev_cfg);
    e.pose = pose;
    DescribeResult d = describe(e.bev, params);
    e.descriptor = std::move(d.descriptor);
    e.keypoints = detect_fast(e.bev, cfg.fast);
    e.local_features.reserve(e.keypoints.size());
    for (const Keypoint& kp : e.keypoints)
        e.local_features.push_back(sample_local_feature(d.fmap, kp));
    return e;
}

inline LocalizationDatabase build_database(const std::vector<PointCloud>& scans,
                                           const Trajectory& traj, const ModelParams& params,
                                           const BevConfig& bev_cfg,
                                           const LocalizationConfig& cfg, int workers = 1) {
    if (scans.size() != traj.poses.size())
        throw ShapeMismatch("scan count does not match pose count");
    cfg.validate();
    std::vector<std::size_t> kept = select_keyframes(traj, cfg.keyframe_spacing);
    LocalizationDatabase db;
    db.bev_cfg = bev_cfg;
    db.entries.resize(kept.size());
    parallel_for(kept.size(), workers, [&](std::size_t i) {
        db.entries[i] = make_database_entry(scans[kept[i]], traj.poses[kept[i]], params,
                                            bev_cfg, cfg);
    });
    return db;
}

/// Exhaustive nearest neighbor by Euclidean descriptor distance; ties go to
/// the lowest index.
inline std::pair<int, double> retrieve(const GlobalDescriptor& query,
                                       const LocalizationDatabase& db) {
    if (db.entries.empty()) throw EmptyDatabase("retrieve on an empty database");
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        const GlobalDescriptor& d = db.entries[i].descriptor;
        if (d.size() != query.size()) throw ShapeMismatch("descriptor size mismatch in retrieve");
        double s = 0.0;
        for (std::size_t c = 0; c < d.size(); ++c) {
            double diff = query[c] - d[c];
            s += diff * diff;
        }
        if (s < best_d2) {
            best_d2 = s;
            best = static_cast<int>(i);
        }
    }
    return {best, std::sqrt(best_d2)};
}

/// Full pipeline for one query scan: project, describe, retrieve, match local
/// features, RANSAC, and compose T_global = T_match * T_rel. Pose-estimation
/// failures (too few matches or no consensus) are reported in the result
/// rather than thrown, keeping the retrieval outcome available.
inline MatchResult localize(const PointCloud& query_scan, const LocalizationDatabase& db,
                            const ModelParams& params, const LocalizationConfig& cfg) {
    BevImage bev = project(query_scan, db.bev_cfg);
    DescribeResult d = describe(bev, params);
    MatchResult res;
    auto [idx, dist] = retrieve(d.descriptor, db);
    res.matched_index = idx;
    res.descriptor_distance = dist;
    const DatabaseEntry& entry = db.entries[static_cast<std::size_t>(idx)];

    std::vector<Keypoint> qkp = detect_fast(bev, cfg.fast);
    std::vector<std::vector<double>> qfeat;
    qfeat.reserve(qkp.size());
    for (const Keypoint& kp : qkp) qfeat.push_back(sample_local_feature(d.fmap, kp));

    std::vector<std::pair<int, int>> pairs =
        match_features(qfeat, entry.local_features, cfg.ratio_test);
    res.correspondences.reserve(pairs.size());
    for (auto [qi, di] : pairs)
        res.correspondences.push_back({qkp[static_cast<std::size_t>(qi)],
                                       entry.keypoints[static_cast<std::size_t>(di)]});
    try {
        RansacResult rr = ransac_se2(res.correspondences, cfg.ransac_threshold,
                                     cfg.ransac_iters, cfg.ransac_seed, cfg.min_consensus);
        res.inlier_count = rr.inlier_count;
        res.t_rel = relative_pose_from_pixels(rr.pose_px, db.bev_cfg.extent, db.bev_cfg.voxel);
        res.t_global = compose(entry.pose, res.t_rel);
        res.pose_ok = true;
    } catch (const TooFewCorrespondences& e) {
        res.failure = e.what();
    } catch (const NoConsensus& e) {
        res.failure = e.what();
    }
    return res;
}

// --- database container file ----------------------------------------------------

inline constexpr char kDatabaseMagic[8] = {'S', 'B', 'E', 'V', 'L', 'D', 'B', '\0'};
inline constexpr std::uint32_t kDatabaseVersion = 1;

inline void save_database(const LocalizationDatabase& db, const std::string& path) {
    std::vector<NamedTensor> tensors;
    tensors.push_back({"db.meta",
                       {6},
                       {static_cast<double>(db.entries.size()), db.bev_cfg.extent,
                        db.bev_cfg.voxel, static_cast<double>(db.bev_cfg.saturation_count),
                        db.bev_cfg.z_min, db.bev_cfg.z_max}});
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        const DatabaseEntry& e = db.entries[i];
        std::string p = "e" + std::to_string(i);
        tensors.push_back({p + ".pose", {3}, {e.pose.x, e.pose.y, e.pose.yaw}});
        tensors.push_back({p + ".desc", {e.descriptor.size()}, e.descriptor});
        tensors.push_back({p + ".bev",
                           {static_cast<std::size_t>(e.bev.rows),
                            static_cast<std::size_t>(e.bev.cols)},
                           e.bev.pixels});
        NamedTensor kp{p + ".kp", {e.keypoints.size(), 3}, {}};
        kp.data.reserve(e.keypoints.size() * 3);
        for (const Keypoint& k : e.keypoints) {
            kp.data.push_back(k.row);
            kp.data.push_back(k.col);
            kp.data.push_back(k.score);
        }
        tensors.push_back(std::move(kp));
        std::size_t c = e.local_features.empty() ? 0 : e.local_features.front().size();
        NamedTensor ft{p + ".feat", {e.local_features.size(), c}, {}};
        for (const auto& f : e.local_features) ft.data.insert(ft.data.end(), f.begin(), f.end());
        tensors.push_back(std::move(ft));
    }
    write_tensor_file(path, kDatabaseMagic, kDatabaseVersion, tensors);
}

inline LocalizationDatabase load_database(const std::string& path) {
    std::vector<NamedTensor> tensors = read_tensor_file(path, kDatabaseMagic, kDatabaseVersion);
    auto find = [&](const std::string& name) -> NamedTensor& {
        for (NamedTensor& t : tensors)
            if (t.name == name) return t;
        throw ParseError(path + ": missing tensor " + name);
    };
    NamedTensor& meta = find("db.meta");
    if (meta.data.size() != 6) throw ParseError(path + ": bad db.meta");
    LocalizationDatabase db;
    std::size_t count = static_cast<std::size_t>(meta.data[0]);
    db.bev_cfg.extent = meta.data[1];
    db.bev_cfg.voxel = meta.data[2];
    db.bev_cfg.saturation_count = static_cast<int>(meta.data[3]);
    db.bev_cfg.z_min = meta.data[4];
    db.bev_cfg.z_max = meta.data[5];
    db.entries.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string p = "e" + std::to_string(i);
        DatabaseEntry& e = db.entries[i];
        NamedTensor& pose = find(p + ".pose");
        e.pose = {pose.data.at(0), pose.data.at(1), pose.data.at(2)};
        e.descriptor = find(p + ".desc").data;
        NamedTensor& bev = find(p + ".bev");
        e.bev.rows = static_cast<int>(bev.shape.at(0));
        e.bev.cols = static_cast<int>(bev.shape.at(1));
        e.bev.resolution = db.bev_cfg.voxel;
        e.bev.pixels = bev.data;
        NamedTensor& kp = find(p + ".kp");
        for (std::size_t k = 0; k < kp.shape.at(0); ++k)
            e.keypoints.push_back({static_cast<int>(kp.data[3 * k]),
                                   static_cast<int>(kp.data[3 * k + 1]), kp.data[3 * k + 2]});
        NamedTensor& ft = find(p + ".feat");
        std::size_t c = ft.shape.at(1);
        for (std::size_t k = 0; k < ft.shape.at(0); ++k)
            e.local_features.emplace_back(ft.data.begin() + static_cast<long>(k * c),
                                          ft.data.begin() + static_cast<long>((k + 1) * c));
    }
    return db;
}

}  // namespace sbevloc
