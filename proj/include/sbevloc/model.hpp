#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"
#include "sbevloc/rng.hpp"
#include "sbevloc/tensor_file.hpp"

namespace sbevloc {

/// Feature extractor dimensions. The stack is a small shared CNN applied
/// under rotations (REM) followed by NetVLAD pooling; feature_dim is the last
/// convolution width.
struct ModelConfig {
    std::vector<int> conv_channels{8, 16, 16};
    int kernel = 3;
    int rotations = 8;  // REM rotation count
    int clusters = 64;  // NetVLAD K

    int feature_dim() const { return conv_channels.back(); }
    int descriptor_dim() const { return clusters * conv_channels.back(); }

    void validate() const {
        if (conv_channels.empty()) throw ConfigError("model.channels must be non-empty");
        for (int c : conv_channels)
            if (c < 1) throw ConfigError("model.channels entries must be >= 1");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("model.kernel must be odd and >= 1");
        if (rotations < 1) throw ConfigError("model.rotations must be >= 1");
        if (clusters < 2) throw ConfigError("model.clusters must be >= 2");
    }
};

struct ConvLayer {
    int in_ch = 0, out_ch = 0, kernel = 0;
    std::vector<double> w;  // layout (kernel, kernel, in_ch, out_ch)
    std::vector<double> b;  // (out_ch)
};

/// Trainable parameters; the gradient buffer uses the same structure.
struct ModelParams {
    ModelConfig cfg;
    std::vector<ConvLayer> conv;
    std::vector<double> vlad_centers;   // (K, C)
    std::vector<double> vlad_assign_w;  // (K, C)
    std::vector<double> vlad_assign_b;  // (K)

    /// Visits every parameter tensor in a fixed order.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (std::size_t i = 0; i < conv.size(); ++i) {
            fn("conv" + std::to_string(i) + ".w", conv[i].w,
               std::vector<std::size_t>{static_cast<std::size_t>(conv[i].kernel),
                                        static_cast<std::size_t>(conv[i].kernel),
                                        static_cast<std::size_t>(conv[i].in_ch),
                                        static_cast<std::size_t>(conv[i].out_ch)});
            fn("conv" + std::to_string(i) + ".b", conv[i].b,
               std::vector<std::size_t>{static_cast<std::size_t>(conv[i].out_ch)});
        }
        std::size_t k = static_cast<std::size_t>(cfg.clusters);
        std::size_t c = static_cast<std::size_t>(cfg.feature_dim());
        fn("vlad.centers", vlad_centers, std::vector<std::size_t>{k, c});
        fn("vlad.assign_w", vlad_assign_w, std::vector<std::size_t>{k, c});
        fn("vlad.assign_b", vlad_assign_b, std::vector<std::size_t>{k});
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, std::vector<double>& v,
                            const std::vector<std::size_t>&) { n += v.size(); });
        return n;
    }
};

/// Same shapes as params, all zeros; used as the gradient accumulator.
inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    for (ConvLayer& l : z.conv) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::fill(z.vlad_centers.begin(), z.vlad_centers.end(), 0.0);
    std::fill(z.vlad_assign_w.begin(), z.vlad_assign_w.end(), 0.0);
    std::fill(z.vlad_assign_b.begin(), z.vlad_assign_b.end(), 0.0);
    return z;
}

namespace detail {
inline constexpr std::uint64_t kConvInitStream = 0x636F6E76ull;
inline constexpr std::uint64_t kVladInitStream = 0x766C6164ull;
inline constexpr double kVladInitAlpha = 10.0;
}  // namespace detail

/// Glorot-uniform convolutions, zero biases; NetVLAD centers from a standard
/// normal with the distance-based soft-assignment init w_k = 2a*c_k,
/// b_k = -a*|c_k|^2, which makes untrained assignments follow center
/// proximity.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    int in_ch = 1;
    for (std::size_t l = 0; l < cfg.conv_channels.size(); ++l) {
        ConvLayer layer;
        layer.in_ch = in_ch;
        layer.out_ch = cfg.conv_channels[l];
        layer.kernel = cfg.kernel;
        layer.w.resize(static_cast<std::size_t>(cfg.kernel) * cfg.kernel * in_ch * layer.out_ch);
        layer.b.assign(static_cast<std::size_t>(layer.out_ch), 0.0);
        double fan_in = static_cast<double>(cfg.kernel) * cfg.kernel * in_ch;
        double fan_out = static_cast<double>(cfg.kernel) * cfg.kernel * layer.out_ch;
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        CounterRng rng(seed, detail::kConvInitStream + l);
        for (double& w : layer.w) w = rng.next_in(-bound, bound);
        p.conv.push_back(std::move(layer));
        in_ch = cfg.conv_channels[l];
    }

    int K = cfg.clusters, C = cfg.feature_dim();
    p.vlad_centers.resize(static_cast<std::size_t>(K) * C);
    p.vlad_assign_w.resize(static_cast<std::size_t>(K) * C);
    p.vlad_assign_b.resize(static_cast<std::size_t>(K));
    CounterRng rng(seed, detail::kVladInitStream);
    for (int k = 0; k < K; ++k) {
        double norm2 = 0.0;
        for (int c = 0; c < C; ++c) {
            double v = rng.next_gaussian();
            p.vlad_centers[static_cast<std::size_t>(k) * C + c] = v;
            norm2 += v * v;
        }
        for (int c = 0; c < C; ++c)
            p.vlad_assign_w[static_cast<std::size_t>(k) * C + c] =
                2.0 * detail::kVladInitAlpha * p.vlad_centers[static_cast<std::size_t>(k) * C + c];
        p.vlad_assign_b[static_cast<std::size_t>(k)] = -detail::kVladInitAlpha * norm2;
    }
    return p;
}

// --- checkpoint container -----------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'S', 'B', 'E', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(ModelParams& params, const std::string& path) {
    std::vector<NamedTensor> tensors;
    params.for_each_tensor([&](const std::string& name, std::vector<double>& v,
                               const std::vector<std::size_t>& shape) {
        tensors.push_back({name, shape, v});
    });
    tensors.push_back({"meta.rotations", {1}, {static_cast<double>(params.cfg.rotations)}});
    write_tensor_file(path, kCheckpointMagic, kCheckpointVersion, tensors);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::vector<NamedTensor> tensors = read_tensor_file(path, kCheckpointMagic, kCheckpointVersion);
    auto find = [&](const std::string& name) -> NamedTensor& {
        for (NamedTensor& t : tensors)
            if (t.name == name) return t;
        throw ParseError(path + ": missing tensor " + name);
    };

    ModelParams p;
    p.cfg.conv_channels.clear();
    for (std::size_t l = 0;; ++l) {
        std::string wname = "conv" + std::to_string(l) + ".w";
        bool found = false;
        for (NamedTensor& t : tensors) found = found || t.name == wname;
        if (!found) break;
        NamedTensor& w = find(wname);
        NamedTensor& b = find("conv" + std::to_string(l) + ".b");
        if (w.shape.size() != 4 || w.shape[0] != w.shape[1])
            throw ParseError(path + ": bad conv weight shape in " + wname);
        ConvLayer layer;
        layer.kernel = static_cast<int>(w.shape[0]);
        layer.in_ch = static_cast<int>(w.shape[2]);
        layer.out_ch = static_cast<int>(w.shape[3]);
        layer.w = w.data;
        layer.b = b.data;
        p.conv.push_back(std::move(layer));
        p.cfg.conv_channels.push_back(p.conv.back().out_ch);
    }
    if (p.conv.empty()) throw ParseError(path + ": checkpoint has no conv layers");
    p.cfg.kernel = p.conv.front().kernel;

    NamedTensor& centers = find("vlad.centers");
    if (centers.shape.size() != 2) throw ParseError(path + ": bad vlad.centers shape");
    p.cfg.clusters = static_cast<int>(centers.shape[0]);
    if (static_cast<int>(centers.shape[1]) != p.cfg.feature_dim())
        throw ParseError(path + ": vlad.centers width does not match the conv stack");
    p.vlad_centers = centers.data;
    p.vlad_assign_w = find("vlad.assign_w").data;
    p.vlad_assign_b = find("vlad.assign_b").data;
    p.cfg.rotations = static_cast<int>(find("meta.rotations").data.at(0));
    p.cfg.validate();
    return p;
}

}  // namespace sbevloc
