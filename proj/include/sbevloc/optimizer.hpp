#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/model.hpp"

namespace sbevloc {

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 50;
    int batch_size = 4;  // triplets per optimizer step
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 10.0;  // global gradient norm limit, <= 0 disables
    std::uint64_t seed = 0;
    int workers = 1;
    bool dry_run = false;  // skip all updates, return the initialization

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("train.lr must be positive");
        if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch must be >= 1");
    }
};

/// First/second moment accumulators mirroring the parameter shapes.
struct OptimizerState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;

    static OptimizerState init(const ModelParams& params) {
        return {zeros_like(params), zeros_like(params), 0};
    }
};

namespace detail {
inline std::vector<std::vector<double>*> collect_tensors(ModelParams& p) {
    std::vector<std::vector<double>*> out;
    p.for_each_tensor([&](const std::string&, std::vector<double>& v,
                          const std::vector<std::size_t>&) { out.push_back(&v); });
    return out;
}
}  // namespace detail

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(ModelParams& grads, double max_norm) {
    auto tensors = detail::collect_tensors(grads);
    double n2 = 0.0;
    for (auto* t : tensors)
        for (double g : *t) n2 += g * g;
    double norm = std::sqrt(n2);
    if (max_norm > 0.0 && norm > max_norm) {
        double scale = max_norm / norm;
        for (auto* t : tensors)
            for (double& g : *t) g *= scale;
    }
    return norm;
}

/// Decoupled weight decay Adam update:
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr*(mhat/(sqrt(vhat)+eps) + wd*theta)
inline void adamw_step(ModelParams& params, ModelParams& grads, OptimizerState& state,
                       const TrainConfig& cfg) {
    auto tp = detail::collect_tensors(params);
    auto tg = detail::collect_tensors(grads);
    auto tm = detail::collect_tensors(state.m);
    auto tv = detail::collect_tensors(state.v);
    if (tp.size() != tg.size() || tp.size() != tm.size() || tp.size() != tv.size())
        throw ShapeMismatch("optimizer state does not match parameters");

    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < tp.size(); ++t) {
        std::vector<double>& p = *tp[t];
        const std::vector<double>& g = *tg[t];
        std::vector<double>& m = *tm[t];
        std::vector<double>& v = *tv[t];
        if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
            throw ShapeMismatch("gradient tensor size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                         cfg.weight_decay * p[i]);
        }
    }
}

}  // namespace sbevloc
