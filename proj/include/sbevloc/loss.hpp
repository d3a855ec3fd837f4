#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/extractor.hpp"

namespace sbevloc {

enum class LossKind { softcos, softcos_l2, lazy_triplet };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "softcos") return LossKind::softcos;
    if (s == "softcos_l2") return LossKind::softcos_l2;
    if (s == "lazy_triplet") return LossKind::lazy_triplet;
    throw ConfigError("unknown loss kind: " + s);
}

struct LossConfig {
    LossKind kind = LossKind::softcos;
    double tau = 0.1;     // softplus temperature
    double margin = 0.3;  // lazy triplet margin

    void validate() const {
        if (tau <= 0.0) throw ConfigError("loss.tau must be positive");
        if (margin < 0.0) throw ConfigError("loss.margin must be >= 0");
    }
};

/// Temperature-scaled softplus tau*log(1+exp(x/tau)) in overflow-safe form.
inline double softplus(double x, double tau) {
    if (tau <= 0.0) throw ConfigError("softplus temperature must be positive");
    if (x > 0.0) return x + tau * std::log1p(std::exp(-x / tau));
    return tau * std::log1p(std::exp(x / tau));
}

/// d/dx of softplus: the logistic function at x/tau.
inline double softplus_grad(double x, double tau) {
    return 1.0 / (1.0 + std::exp(-x / tau));
}

/// Loss value plus gradients with respect to each input descriptor.
struct LossResult {
    double value = 0.0;
    std::vector<double> d_query;
    std::vector<double> d_positive;
    std::vector<std::vector<double>> d_negatives;
};

namespace detail {

inline double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// cos(a, b) with gradients d cos/da and d cos/db (accumulated with weight).
struct CosTerm {
    double value;
    double na, nb, dotab;
};

inline CosTerm cosine(const std::vector<double>& a, const std::vector<double>& b) {
    CosTerm t;
    t.na = norm_of(a);
    t.nb = norm_of(b);
    if (t.na < kNormEps || t.nb < kNormEps)
        throw DegenerateDescriptor("cosine similarity of a zero-norm descriptor");
    t.dotab = dot(a, b);
    t.value = t.dotab / (t.na * t.nb);
    return t;
}

/// grad += weight * d cos(a,b)/da.
inline void add_cosine_grad(const CosTerm& t, const std::vector<double>& a,
                            const std::vector<double>& b, double weight,
                            std::vector<double>& grad) {
    double inv = 1.0 / (t.na * t.nb);
    double self = t.dotab / (t.na * t.na * t.na * t.nb);
    for (std::size_t i = 0; i < a.size(); ++i) grad[i] += weight * (b[i] * inv - a[i] * self);
}

/// Euclidean distance with gradient support; zero-distance pairs get a zero
/// (sub)gradient.
inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void add_euclid_grad(const std::vector<double>& a, const std::vector<double>& b,
                            double dist, double weight, std::vector<double>& grad_a) {
    if (dist < kNormEps) return;
    for (std::size_t i = 0; i < a.size(); ++i) grad_a[i] += weight * (a[i] - b[i]) / dist;
}

inline void check_triplet(const GlobalDescriptor& vq, const GlobalDescriptor& vp,
                          const std::vector<GlobalDescriptor>& vns) {
    if (vns.empty()) throw EmptyNegatives("loss needs at least one negative");
    for (const GlobalDescriptor& n : vns)
        if (n.size() != vq.size()) throw ShapeMismatch("descriptor size mismatch in triplet");
    if (vp.size() != vq.size()) throw ShapeMismatch("descriptor size mismatch in triplet");
}

inline LossResult zero_result(const GlobalDescriptor& vq, std::size_t n_neg) {
    LossResult r;
    r.d_query.assign(vq.size(), 0.0);
    r.d_positive.assign(vq.size(), 0.0);
    r.d_negatives.assign(n_neg, std::vector<double>(vq.size(), 0.0));
    return r;
}

}  // namespace detail

/// SoftCos: softplus(max_j s_j^- - s^+, tau) over cosine similarities.
/// Gradients flow through s^+ and the arg-max negative only (ties take the
/// lowest index).
inline LossResult softcos_loss(const GlobalDescriptor& vq, const GlobalDescriptor& vp,
                               const std::vector<GlobalDescriptor>& vns, double tau) {
    detail::check_triplet(vq, vp, vns);
    detail::CosTerm sp = detail::cosine(vq, vp);
    std::vector<detail::CosTerm> sn(vns.size());
    std::size_t best = 0;
    for (std::size_t j = 0; j < vns.size(); ++j) {
        sn[j] = detail::cosine(vq, vns[j]);
        if (sn[j].value > sn[best].value) best = j;
    }
    double x = sn[best].value - sp.value;
    LossResult r = detail::zero_result(vq, vns.size());
    r.value = softplus(x, tau);
    double g = softplus_grad(x, tau);
    detail::add_cosine_grad(sn[best], vq, vns[best], g, r.d_query);
    detail::add_cosine_grad(sn[best], vns[best], vq, g, r.d_negatives[best]);
    detail::add_cosine_grad(sp, vq, vp, -g, r.d_query);
    detail::add_cosine_grad(sp, vp, vq, -g, r.d_positive);
    return r;
}

/// SoftCos with Euclidean distance: softplus(d+ - min_j d_j^-, tau).
inline LossResult softcos_l2_loss(const GlobalDescriptor& vq, const GlobalDescriptor& vp,
                                  const std::vector<GlobalDescriptor>& vns, double tau) {
    detail::check_triplet(vq, vp, vns);
    double dp = detail::euclid(vq, vp);
    std::vector<double> dn(vns.size());
    std::size_t best = 0;
    for (std::size_t j = 0; j < vns.size(); ++j) {
        dn[j] = detail::euclid(vq, vns[j]);
        if (dn[j] < dn[best]) best = j;
    }
    double x = dp - dn[best];
    LossResult r = detail::zero_result(vq, vns.size());
    r.value = softplus(x, tau);
    double g = softplus_grad(x, tau);
    detail::add_euclid_grad(vq, vp, dp, g, r.d_query);
    detail::add_euclid_grad(vp, vq, dp, g, r.d_positive);
    detail::add_euclid_grad(vq, vns[best], dn[best], -g, r.d_query);
    detail::add_euclid_grad(vns[best], vq, dn[best], -g, r.d_negatives[best]);
    return r;
}

/// Lazy triplet: max_j [d+ - d_j^- + margin]_+ ; the hinge zeroes gradients
/// for satisfied triplets.
inline LossResult lazy_triplet_loss(const GlobalDescriptor& vq, const GlobalDescriptor& vp,
                                    const std::vector<GlobalDescriptor>& vns, double margin) {
    detail::check_triplet(vq, vp, vns);
    double dp = detail::euclid(vq, vp);
    std::vector<double> dn(vns.size());
    std::size_t best = 0;
    for (std::size_t j = 0; j < vns.size(); ++j) {
        dn[j] = detail::euclid(vq, vns[j]);
        if (dn[j] < dn[best]) best = j;
    }
    double pre = dp - dn[best] + margin;
    LossResult r = detail::zero_result(vq, vns.size());
    if (pre <= 0.0) return r;  // clamped: value 0, zero gradients
    r.value = pre;
    detail::add_euclid_grad(vq, vp, dp, 1.0, r.d_query);
    detail::add_euclid_grad(vp, vq, dp, 1.0, r.d_positive);
    detail::add_euclid_grad(vq, vns[best], dn[best], -1.0, r.d_query);
    detail::add_euclid_grad(vns[best], vq, dn[best], -1.0, r.d_negatives[best]);
    return r;
}

/// Dispatch on the configured loss kind.
inline LossResult triplet_loss(const GlobalDescriptor& vq, const GlobalDescriptor& vp,
                               const std::vector<GlobalDescriptor>& vns, const LossConfig& cfg) {
    switch (cfg.kind) {
        case LossKind::softcos: return softcos_loss(vq, vp, vns, cfg.tau);
        case LossKind::softcos_l2: return softcos_l2_loss(vq, vp, vns, cfg.tau);
        case LossKind::lazy_triplet: return lazy_triplet_loss(vq, vp, vns, cfg.margin);
    }
    throw ConfigError("invalid loss kind");
}

}  // namespace sbevloc
