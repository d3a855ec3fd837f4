#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/fast.hpp"
#include "sbevloc/rng.hpp"

namespace sbevloc {

enum class CandidateStrategy { fast, random, longitudinal };
enum class Augmentation { none, rotate, rotate_flip };

inline CandidateStrategy parse_strategy(const std::string& s) {
    if (s == "fast") return CandidateStrategy::fast;
    if (s == "random") return CandidateStrategy::random;
    if (s == "longitudinal") return CandidateStrategy::longitudinal;
    throw ConfigError("unknown point selection strategy: " + s);
}

inline Augmentation parse_augmentation(const std::string& s) {
    if (s == "none") return Augmentation::none;
    if (s == "rotate") return Augmentation::rotate;
    if (s == "rotate_flip") return Augmentation::rotate_flip;
    throw ConfigError("unknown augmentation: " + s);
}

struct TripletConfig {
    double d_th = 5.0;      // positive/negative position threshold, meters
    int m_negatives = 10;
    int patch_size = 200;   // r, pixels
    CandidateStrategy strategy = CandidateStrategy::fast;
    Augmentation augment = Augmentation::rotate;
    FastConfig fast;        // candidate detector settings for strategy=fast

    void validate() const {
        if (d_th <= 0.0) throw ConfigError("triplet.dth must be positive");
        if (m_negatives < 1) throw ConfigError("triplet.m must be >= 1");
        if (patch_size < 1) throw ConfigError("triplet.r must be >= 1");
    }
};

struct CenterTriplet {
    Keypoint query;
    Keypoint positive;
    std::vector<Keypoint> negatives;
};

struct PatchTriplet {
    BevImage query_patch;
    BevImage positive_patch;
    std::vector<BevImage> negative_patches;
    CenterTriplet centers;
};

/// Geographic distance between two pixel locations: Euclidean pixel distance
/// scaled by the BEV resolution.
inline double geo_distance(const Keypoint& a, const Keypoint& b, double resolution) {
    if (resolution <= 0.0) throw ConfigError("resolution must be positive");
    return std::hypot(static_cast<double>(a.row - b.row),
                      static_cast<double>(a.col - b.col)) * resolution;
}

namespace detail {
inline constexpr std::uint64_t kCandidateStream = 0x43414E44ull;  // random/longitudinal draws
inline constexpr std::uint64_t kPickStream = 0x5049434Bull;       // triplet member choice
inline constexpr std::uint64_t kAugmentStream = 0x41554731ull;    // augmentation draws
inline constexpr int kRandomCandidateCount = 200;
}  // namespace detail

/// Patch-center candidates. fast runs the corner detector; random spreads
/// points across the image; longitudinal confines them to within 3 columns
/// of the vertical centerline (the traveling direction in BEV).
inline std::vector<Keypoint> select_candidates(const BevImage& img, CandidateStrategy strategy,
                                               std::uint64_t rng_seed,
                                               const FastConfig& fast_cfg = {}) {
    if (img.rows < 7 || img.cols < 7) throw ImageTooSmall("candidate selection needs >= 7x7");
    if (strategy == CandidateStrategy::fast) return detect_fast(img, fast_cfg);

    CounterRng rng(rng_seed, detail::kCandidateStream);
    const int margin = 3;  // keep the keypoint circle in bounds
    std::vector<Keypoint> out;
    out.reserve(detail::kRandomCandidateCount);
    for (int i = 0; i < detail::kRandomCandidateCount; ++i) {
        Keypoint kp;
        kp.row = margin + static_cast<int>(rng.next_below(img.rows - 2 * margin));
        if (strategy == CandidateStrategy::random) {
            kp.col = margin + static_cast<int>(rng.next_below(img.cols - 2 * margin));
        } else {
            int jitter = static_cast<int>(rng.next_below(7)) - 3;  // [-3, 3]
            kp.col = std::clamp(img.cols / 2 + jitter, margin, img.cols - 1 - margin);
        }
        kp.score = 0.0;
        out.push_back(kp);
    }
    return out;
}

/// r x r crop centered on the keypoint; out-of-bounds reads are zero.
inline BevImage crop_patch(const BevImage& img, const Keypoint& center, int r) {
    if (r < 1) throw ConfigError("patch size must be >= 1");
    BevImage patch = BevImage::zeros(r, r, img.resolution);
    int r0 = center.row - r / 2;
    int c0 = center.col - r / 2;
    int i_lo = std::max(0, -r0), i_hi = std::min(r, img.rows - r0);
    int j_lo = std::max(0, -c0), j_hi = std::min(r, img.cols - c0);
    for (int i = i_lo; i < i_hi; ++i)
        for (int j = j_lo; j < j_hi; ++j)
            patch.at(i, j) = img.at(r0 + i, c0 + j);
    return patch;
}

namespace detail {
inline BevImage flip_horizontal(const BevImage& img) {
    BevImage out = BevImage::zeros(img.rows, img.cols, img.resolution);
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) out.at(r, c) = img.at(r, img.cols - 1 - c);
    return out;
}

inline BevImage augment_patch(BevImage patch, Augmentation mode, CounterRng& rng) {
    if (mode == Augmentation::none) return patch;
    double angle = rng.next_in(0.0, 2.0 * M_PI);
    if (mode == Augmentation::rotate_flip && rng.next_double() < 0.5)
        patch = flip_horizontal(patch);
    return rotate_image(patch, angle, Interp::bilinear);
}
}  // namespace detail

/// Single-image triplet mining: candidates are position-thresholded at d_th
/// against a uniformly chosen query, patches are cropped around the selected
/// centers and augmented. Bit-identical for identical (img, cfg, rng_seed).
inline PatchTriplet generate_triplet(const BevImage& img, const TripletConfig& cfg,
                                     std::uint64_t rng_seed) {
    cfg.validate();
    std::vector<Keypoint> cand =
        select_candidates(img, cfg.strategy, rng_seed, cfg.fast);
    std::size_t n = cand.size();

    std::vector<std::size_t> eligible;
    std::vector<std::vector<std::size_t>> pos_of(n), neg_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = geo_distance(cand[i], cand[j], img.resolution);
            if (d < cfg.d_th) pos_of[i].push_back(j);
            else neg_of[i].push_back(j);
        }
        if (!pos_of[i].empty() && neg_of[i].size() >= static_cast<std::size_t>(cfg.m_negatives))
            eligible.push_back(i);
    }
    if (eligible.empty())
        throw NoValidQuery("no candidate admits a positive and " +
                           std::to_string(cfg.m_negatives) + " negatives (candidates: " +
                           std::to_string(n) + ")");

    CounterRng pick(rng_seed, detail::kPickStream);
    std::size_t q = eligible[pick.next_below(eligible.size())];
    const auto& pos = pos_of[q];
    const auto& neg = neg_of[q];
    std::size_t p = pos[pick.next_below(pos.size())];
    std::vector<std::size_t> neg_idx =
        pick.sample_without_replacement(neg.size(), static_cast<std::size_t>(cfg.m_negatives));

    PatchTriplet out;
    out.centers.query = cand[q];
    out.centers.positive = cand[p];
    for (std::size_t k : neg_idx) out.centers.negatives.push_back(cand[neg[k]]);

    CounterRng aug(rng_seed, detail::kAugmentStream);
    out.query_patch =
        detail::augment_patch(crop_patch(img, out.centers.query, cfg.patch_size), cfg.augment, aug);
    out.positive_patch =
        detail::augment_patch(crop_patch(img, out.centers.positive, cfg.patch_size), cfg.augment, aug);
    for (const Keypoint& nk : out.centers.negatives)
        out.negative_patches.push_back(
            detail::augment_patch(crop_patch(img, nk, cfg.patch_size), cfg.augment, aug));
    return out;
}

}  // namespace sbevloc
