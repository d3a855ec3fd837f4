#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/extractor.hpp"
#include "sbevloc/format.hpp"
#include "sbevloc/loss.hpp"
#include "sbevloc/optimizer.hpp"
#include "sbevloc/parallel.hpp"
#include "sbevloc/point_cloud.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/triplet.hpp"

namespace sbevloc {

struct StepLogEntry {
    int epoch;
    int step;  // optimizer step index within the run
    double loss;
};

struct TrainResult {
    ModelParams params;
    std::vector<StepLogEntry> step_log;
    std::vector<std::pair<int, double>> epoch_means;
    std::size_t skipped_scans = 0;  // scans with no valid triplet query
};

namespace detail {

struct TripletGrad {
    ModelParams grads;
    double loss = 0.0;
    bool valid = false;
};

/// Forward + loss + backward for one scan's triplet. Pure given its inputs.
inline TripletGrad triplet_gradient(const BevImage& bev, const ModelParams& params,
                                    const TripletConfig& tcfg, const LossConfig& lcfg,
                                    std::uint64_t triplet_seed) {
    TripletGrad out;
    out.grads = zeros_like(params);
    PatchTriplet trip;
    try {
        trip = generate_triplet(bev, tcfg, triplet_seed);
    } catch (const NoValidQuery&) {
        return out;  // valid stays false; caller counts the skip
    }
    ForwardCache cq = forward_cached(trip.query_patch, params);
    ForwardCache cp = forward_cached(trip.positive_patch, params);
    std::vector<ForwardCache> cns;
    cns.reserve(trip.negative_patches.size());
    std::vector<GlobalDescriptor> vns;
    for (const BevImage& np : trip.negative_patches) {
        cns.push_back(forward_cached(np, params));
        vns.push_back(cns.back().descriptor);
    }
    LossResult lr = triplet_loss(cq.descriptor, cp.descriptor, vns, lcfg);
    out.loss = lr.value;
    backward(cq, params, lr.d_query, out.grads);
    backward(cp, params, lr.d_positive, out.grads);
    for (std::size_t j = 0; j < cns.size(); ++j)
        backward(cns[j], params, lr.d_negatives[j], out.grads);
    out.valid = true;
    return out;
}

inline void accumulate_scaled(ModelParams& into, ModelParams& from, double scale) {
    auto ti = collect_tensors(into);
    auto tf = collect_tensors(from);
    for (std::size_t t = 0; t < ti.size(); ++t)
        for (std::size_t i = 0; i < ti[t]->size(); ++i) (*ti[t])[i] += scale * (*tf[t])[i];
}

}  // namespace detail

/// Checks Eq.-style ranking on one triplet: positive similarity strictly
/// above the best negative similarity (cosine on descriptors).
inline bool objective_holds(const ModelParams& params, const PatchTriplet& trip) {
    GlobalDescriptor vq = describe(trip.query_patch, params).descriptor;
    GlobalDescriptor vp = describe(trip.positive_patch, params).descriptor;
    double sp = detail::dot(vq, vp);
    for (const BevImage& np : trip.negative_patches) {
        GlobalDescriptor vn = describe(np, params).descriptor;
        if (detail::dot(vq, vn) >= sp) return false;
    }
    return true;
}

/// Self-supervised training: per epoch the scans are visited in a seeded
/// shuffled order, each contributing one mined triplet; batches are averaged,
/// clipped at the global-norm limit and applied with AdamW. No pose input
/// exists anywhere on this path. Deterministic in cfg.seed for any worker
/// count (per-triplet gradients are reduced in scan order).
inline TrainResult train(const std::vector<PointCloud>& scans, ModelParams initial_params,
                         const BevConfig& bev_cfg, const TripletConfig& tcfg,
                         const LossConfig& lcfg, const TrainConfig& cfg,
                         const std::string& checkpoint_dir = "") {
    if (scans.empty()) throw NoScans("training requires at least one scan");
    cfg.validate();
    tcfg.validate();
    lcfg.validate();

    TrainResult result;
    result.params = std::move(initial_params);
    if (cfg.dry_run) return result;

    namespace fs = std::filesystem;
    std::ofstream step_log, epoch_log;
    if (!checkpoint_dir.empty()) {
        fs::create_directories(checkpoint_dir);
        step_log.open(checkpoint_dir + "/loss_log.csv", std::ios::trunc);
        step_log << "epoch,step,loss\n";
        epoch_log.open(checkpoint_dir + "/epoch_loss.csv", std::ios::trunc);
        epoch_log << "epoch,mean_loss\n";
    }

    // BEV projection is pure per scan; do it once up front.
    std::vector<BevImage> bevs(scans.size());
    parallel_for(scans.size(), cfg.workers,
                 [&](std::size_t i) { bevs[i] = project(scans[i], bev_cfg); });

    OptimizerState state = OptimizerState::init(result.params);
    int step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(scans.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        CounterRng shuffle_rng(cfg.seed, (1ull << 40) + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        int epoch_loss_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<detail::TripletGrad> slots(end - start);
            parallel_for(end - start, cfg.workers, [&](std::size_t s) {
                std::size_t scan = order[start + s];
                std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), scan);
                slots[s] = detail::triplet_gradient(bevs[scan], result.params, tcfg, lcfg, seed);
            });

            int n_valid = 0;
            for (const auto& s : slots) n_valid += s.valid;
            result.skipped_scans += (end - start) - static_cast<std::size_t>(n_valid);
            if (n_valid == 0) continue;

            ModelParams grads = zeros_like(result.params);
            double batch_loss = 0.0;
            for (auto& s : slots) {
                if (!s.valid) continue;
                detail::accumulate_scaled(grads, s.grads, 1.0 / n_valid);
                batch_loss += s.loss / n_valid;
            }
            if (!std::isfinite(batch_loss))
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                                     " step " + std::to_string(step_index));
            clip_global_norm(grads, cfg.clip_norm);
            adamw_step(result.params, grads, state, cfg);

            result.step_log.push_back({epoch, step_index, batch_loss});
            if (step_log.is_open())
                step_log << epoch << "," << step_index << "," << fmt_double(batch_loss) << "\n";
            epoch_loss_sum += batch_loss;
            ++epoch_loss_count;
            ++step_index;
        }

        double mean = epoch_loss_count > 0 ? epoch_loss_sum / epoch_loss_count : 0.0;
        result.epoch_means.push_back({epoch, mean});
        if (epoch_log.is_open()) epoch_log << epoch << "," << fmt_double(mean) << "\n";
        if (!checkpoint_dir.empty()) {
            char name[48];
            std::snprintf(name, sizeof(name), "/ckpt_epoch_%04d.bin", epoch);
            save_checkpoint(result.params, checkpoint_dir + name);
        }
    }
    if (!checkpoint_dir.empty())
        save_checkpoint(result.params, checkpoint_dir + "/ckpt_final.bin");
    return result;
}

}  // namespace sbevloc
