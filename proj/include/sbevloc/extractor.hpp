#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/model.hpp"
#include "sbevloc/numeric.hpp"

namespace sbevloc {

/// Dense per-pixel features, channel-last storage.
struct FeatureMap {
    int rows = 0, cols = 0, channels = 0;
    std::vector<double> data;

    double* at(int r, int c) {
        return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
    }
    const double* at(int r, int c) const {
        return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
    }
    std::size_t locations() const { return static_cast<std::size_t>(rows) * cols; }

    static FeatureMap zeros(int rows, int cols, int channels) {
        FeatureMap f;
        f.rows = rows;
        f.cols = cols;
        f.channels = channels;
        f.data.assign(static_cast<std::size_t>(rows) * cols * channels, 0.0);
        return f;
    }
};

using GlobalDescriptor = std::vector<double>;

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kNormEps = 1e-12;

inline bool is_degenerate(const GlobalDescriptor& d) {
    double n2 = 0.0;
    for (double v : d) n2 += v * v;
    return std::sqrt(n2) < kNormEps;
}

namespace detail {

inline FeatureMap image_as_feature_map(const BevImage& img) {
    FeatureMap f;
    f.rows = img.rows;
    f.cols = img.cols;
    f.channels = 1;
    f.data = img.pixels;
    return f;
}

inline void conv_layer_forward(const FeatureMap& in, const ConvLayer& l, FeatureMap& out) {
    if (in.channels != l.in_ch) throw ShapeMismatch("conv input channels mismatch");
    out = FeatureMap::zeros(in.rows, in.cols, l.out_ch);
    const int k = l.kernel, off = l.kernel / 2;
    const int in_ch = l.in_ch, out_ch = l.out_ch;
    for (int r = 0; r < in.rows; ++r) {
        for (int c = 0; c < in.cols; ++c) {
            double* op = out.at(r, c);
            for (int co = 0; co < out_ch; ++co) op[co] = l.b[co];
            int dr_lo = std::max(0, off - r), dr_hi = std::min(k, in.rows + off - r);
            int dc_lo = std::max(0, off - c), dc_hi = std::min(k, in.cols + off - c);
            for (int dr = dr_lo; dr < dr_hi; ++dr) {
                for (int dc = dc_lo; dc < dc_hi; ++dc) {
                    const double* ip = in.at(r + dr - off, c + dc - off);
                    const double* wp = l.w.data() +
                        (static_cast<std::size_t>(dr) * k + dc) * in_ch * out_ch;
                    for (int ci = 0; ci < in_ch; ++ci) {
                        double v = ip[ci];
                        const double* wr = wp + static_cast<std::size_t>(ci) * out_ch;
                        for (int co = 0; co < out_ch; ++co) op[co] += v * wr[co];
                    }
                }
            }
        }
    }
}

/// dW/db accumulation and input gradient for one layer.
inline void conv_layer_backward(const FeatureMap& in, const ConvLayer& l, const FeatureMap& dz,
                                ConvLayer& grad, FeatureMap* din) {
    const int k = l.kernel, off = l.kernel / 2;
    const int in_ch = l.in_ch, out_ch = l.out_ch;
    if (din) *din = FeatureMap::zeros(in.rows, in.cols, in_ch);
    for (int r = 0; r < in.rows; ++r) {
        for (int c = 0; c < in.cols; ++c) {
            const double* dzp = dz.at(r, c);
            for (int co = 0; co < out_ch; ++co) grad.b[co] += dzp[co];
            int dr_lo = std::max(0, off - r), dr_hi = std::min(k, in.rows + off - r);
            int dc_lo = std::max(0, off - c), dc_hi = std::min(k, in.cols + off - c);
            for (int dr = dr_lo; dr < dr_hi; ++dr) {
                for (int dc = dc_lo; dc < dc_hi; ++dc) {
                    const double* ip = in.at(r + dr - off, c + dc - off);
                    std::size_t base = (static_cast<std::size_t>(dr) * k + dc) * in_ch * out_ch;
                    double* dwp = grad.w.data() + base;
                    for (int ci = 0; ci < in_ch; ++ci) {
                        double v = ip[ci];
                        double* dwr = dwp + static_cast<std::size_t>(ci) * out_ch;
                        for (int co = 0; co < out_ch; ++co) dwr[co] += v * dzp[co];
                    }
                    if (din) {
                        double* dxp = din->at(r + dr - off, c + dc - off);
                        const double* wp = l.w.data() + base;
                        for (int ci = 0; ci < in_ch; ++ci) {
                            const double* wr = wp + static_cast<std::size_t>(ci) * out_ch;
                            double s = 0.0;
                            for (int co = 0; co < out_ch; ++co) s += dzp[co] * wr[co];
                            dxp[ci] += s;
                        }
                    }
                }
            }
        }
    }
}

inline void leaky_forward(FeatureMap& f) {
    for (double& v : f.data)
        if (v < 0.0) v *= kLeakySlope;
}

/// Bilinear rotation of a square feature map about the grid center, shared
/// geometry with rotate_image. Transpose scatters gradients back through the
/// same sampling weights.
template <bool Transpose>
inline void rotate_fmap_kernel(const FeatureMap& a, double angle, FeatureMap& b) {
    const int n = a.rows, ch = a.channels;
    const double ctr = 0.5 * (n - 1);
    double c, s;
    rotation_coeffs(-angle, c, s);
    for (int r = 0; r < n; ++r) {
        double dr = r - ctr;
        for (int col = 0; col < n; ++col) {
            double dc = col - ctr;
            double sr = ctr + c * dr - s * dc;
            double sc = ctr + s * dr + c * dc;
            int r0 = static_cast<int>(std::floor(sr));
            int c0 = static_cast<int>(std::floor(sc));
            double fr = sr - r0, fc = sc - c0;
            for (int ai = 0; ai < 2; ++ai) {
                int rr = r0 + ai;
                if (rr < 0 || rr >= n) continue;
                double wa = ai ? fr : 1.0 - fr;
                if (wa == 0.0) continue;
                for (int bi = 0; bi < 2; ++bi) {
                    int cc = c0 + bi;
                    if (cc < 0 || cc >= n) continue;
                    double w = wa * (bi ? fc : 1.0 - fc);
                    if (w == 0.0) continue;
                    if constexpr (Transpose) {
                        double* dst = b.at(rr, cc);
                        const double* src = a.at(r, col);
                        for (int q = 0; q < ch; ++q) dst[q] += w * src[q];
                    } else {
                        double* dst = b.at(r, col);
                        const double* src = a.at(rr, cc);
                        for (int q = 0; q < ch; ++q) dst[q] += w * src[q];
                    }
                }
            }
        }
    }
}

inline FeatureMap rotate_fmap(const FeatureMap& f, double angle) {
    if (f.rows != f.cols) throw ShapeMismatch("feature map rotation requires square maps");
    FeatureMap out = FeatureMap::zeros(f.rows, f.cols, f.channels);
    rotate_fmap_kernel<false>(f, angle, out);
    return out;
}

inline void rotate_fmap_transpose_accum(const FeatureMap& dout, double angle, FeatureMap& dsrc) {
    rotate_fmap_kernel<true>(dout, angle, dsrc);
}

/// Backward of y = v / ||v|| evaluated from the normalized output:
/// dv = (dy - y (y . dy)) / ||v||.
inline void l2_normalize_backward(const double* y, double norm, const double* dy, double* dv,
                                  std::size_t n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += y[i] * dy[i];
    for (std::size_t i = 0; i < n; ++i) dv[i] = (dy[i] - y[i] * dot) / norm;
}

}  // namespace detail

// --- convolution stack --------------------------------------------------------

namespace detail {
inline void check_stack(const ModelParams& params) {
    if (params.conv.empty()) throw ShapeMismatch("model has no conv layers");
    if (params.conv.front().in_ch != 1) throw ShapeMismatch("first conv layer must take 1 channel");
    for (std::size_t l = 1; l < params.conv.size(); ++l)
        if (params.conv[l].in_ch != params.conv[l - 1].out_ch)
            throw ShapeMismatch("conv layer channel chain mismatch");
}

struct StackCache {
    FeatureMap input;              // layer-0 input
    std::vector<FeatureMap> pre;   // pre-activation output per layer
};

inline FeatureMap conv_stack_forward(const BevImage& img, const ModelParams& params,
                                     StackCache* cache) {
    check_stack(params);
    FeatureMap x = image_as_feature_map(img);
    if (cache) cache->input = x;
    FeatureMap z;
    for (std::size_t l = 0; l < params.conv.size(); ++l) {
        conv_layer_forward(x, params.conv[l], z);
        if (cache) cache->pre.push_back(z);
        x = std::move(z);
        if (l + 1 < params.conv.size()) leaky_forward(x);
    }
    return x;
}

inline void conv_stack_backward(const StackCache& cache, const ModelParams& params,
                                FeatureMap dz, ModelParams& grads) {
    const std::size_t L = params.conv.size();
    for (std::size_t li = L; li-- > 0;) {
        FeatureMap x;
        const FeatureMap* xin;
        if (li == 0) {
            xin = &cache.input;
        } else {
            x = cache.pre[li - 1];
            leaky_forward(x);
            xin = &x;
        }
        FeatureMap din;
        conv_layer_backward(*xin, params.conv[li], dz, grads.conv[li], li > 0 ? &din : nullptr);
        if (li > 0) {
            const FeatureMap& pre = cache.pre[li - 1];
            for (std::size_t i = 0; i < din.data.size(); ++i)
                if (pre.data[i] < 0.0) din.data[i] *= kLeakySlope;
            dz = std::move(din);
        }
    }
}
}  // namespace detail

/// The shared convolution stack: stride-1, same-size zero padding, leaky
/// rectifier (slope 0.1) between layers and none after the last.
inline FeatureMap conv_forward(const BevImage& img, const ModelParams& params) {
    return detail::conv_stack_forward(img, params, nullptr);
}

// --- rotation equivariant module ----------------------------------------------

/// Everything backward() needs: per-branch activations, the REM argmax
/// routing, NetVLAD assignments and normalization state.
struct ForwardCache {
    std::vector<detail::StackCache> branches;
    std::vector<std::uint8_t> argmax;   // winning rotation index per fmap element
    FeatureMap fmap;                    // REM output
    std::vector<double> assigns;        // (H*W, K) soft-assignments
    double global_norm = 0.0;           // pre-normalization descriptor norm
    std::vector<double> row_norms;      // (K) pre-intra-norm row norms
    GlobalDescriptor descriptor;
    int n_rot = 0;
};

namespace detail {
inline FeatureMap rem_forward_impl(const BevImage& img, const ModelParams& params,
                                   ForwardCache* cache) {
    if (!img.square()) throw ShapeMismatch("rem_forward requires a square image");
    const int n_rot = params.cfg.rotations;
    FeatureMap out;
    std::vector<std::uint8_t>* argmax = cache ? &cache->argmax : nullptr;
    for (int k = 0; k < n_rot; ++k) {
        double theta = 2.0 * M_PI * k / n_rot;
        StackCache local;
        StackCache* sc = cache ? &local : nullptr;
        FeatureMap f;
        if (k == 0) {
            f = conv_stack_forward(img, params, sc);
        } else {
            BevImage rotated = rotate_image(img, theta, Interp::bilinear);
            f = conv_stack_forward(rotated, params, sc);
            f = rotate_fmap(f, -theta);
        }
        if (cache) cache->branches.push_back(std::move(local));
        if (k == 0) {
            out = std::move(f);
            if (argmax) argmax->assign(out.data.size(), 0);
        } else {
            for (std::size_t i = 0; i < out.data.size(); ++i) {
                if (f.data[i] > out.data[i]) {  // ties keep the lowest rotation
                    out.data[i] = f.data[i];
                    if (argmax) (*argmax)[i] = static_cast<std::uint8_t>(k);
                }
            }
        }
    }
    if (cache) cache->n_rot = n_rot;
    return out;
}
}  // namespace detail

/// Rotation equivariant features: element-wise max over the conv stack
/// applied at N_rot orientations, each aligned back to the input frame.
inline FeatureMap rem_forward(const BevImage& img, const ModelParams& params) {
    return detail::rem_forward_impl(img, params, nullptr);
}

// --- NetVLAD --------------------------------------------------------------------

namespace detail {
inline GlobalDescriptor netvlad_forward_impl(const FeatureMap& fmap, const ModelParams& params,
                                             ForwardCache* cache) {
    const int K = params.cfg.clusters, C = params.cfg.feature_dim();
    if (fmap.channels != C) throw ShapeMismatch("feature map width does not match NetVLAD");
    if (static_cast<int>(params.vlad_centers.size()) != K * C ||
        static_cast<int>(params.vlad_assign_w.size()) != K * C ||
        static_cast<int>(params.vlad_assign_b.size()) != K)
        throw ShapeMismatch("NetVLAD parameter sizes inconsistent");

    const std::size_t HW = fmap.locations();
    std::vector<double> logits(K);
    // Exact accumulation makes the pooled rows independent of the spatial
    // iteration order, so permuting locations leaves the descriptor
    // bit-identical.
    std::vector<ExactSum> sums(static_cast<std::size_t>(K) * C);
    if (cache) cache->assigns.assign(HW * K, 0.0);

    for (std::size_t i = 0; i < HW; ++i) {
        const double* x = fmap.data.data() + i * C;
        double maxl = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            const double* w = params.vlad_assign_w.data() + static_cast<std::size_t>(k) * C;
            double l = params.vlad_assign_b[k];
            for (int c = 0; c < C; ++c) l += w[c] * x[c];
            logits[k] = l;
            maxl = std::max(maxl, l);
        }
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
            logits[k] = std::exp(logits[k] - maxl);
            denom += logits[k];
        }
        for (int k = 0; k < K; ++k) {
            double a = logits[k] / denom;
            if (cache) cache->assigns[i * K + k] = a;
            if (a == 0.0) continue;
            const double* ctr = params.vlad_centers.data() + static_cast<std::size_t>(k) * C;
            ExactSum* row = sums.data() + static_cast<std::size_t>(k) * C;
            for (int c = 0; c < C; ++c) row[c].add(a * (x[c] - ctr[c]));
        }
    }

    GlobalDescriptor desc(static_cast<std::size_t>(K) * C, 0.0);
    std::vector<double> row_norms(K, 0.0);
    for (int k = 0; k < K; ++k) {
        double n2 = 0.0;
        for (int c = 0; c < C; ++c) {
            double v = sums[static_cast<std::size_t>(k) * C + c].total();
            desc[static_cast<std::size_t>(k) * C + c] = v;
            n2 += v * v;
        }
        double norm = std::sqrt(n2);
        row_norms[k] = norm;
        for (int c = 0; c < C; ++c) {
            double& v = desc[static_cast<std::size_t>(k) * C + c];
            v = norm < kNormEps ? 0.0 : v / norm;
        }
    }
    double g2 = 0.0;
    for (double v : desc) g2 += v * v;
    double gnorm = std::sqrt(g2);
    for (double& v : desc) v = gnorm < kNormEps ? 0.0 : v / gnorm;

    if (cache) {
        cache->row_norms = std::move(row_norms);
        cache->global_norm = gnorm;
        cache->descriptor = desc;
    }
    return desc;
}
}  // namespace detail

/// Soft-assigned VLAD pooling with intra- and global L2 normalization
/// (epsilon-guarded; an all-zero vector stays zero rather than becoming NaN).
inline GlobalDescriptor netvlad_forward(const FeatureMap& fmap, const ModelParams& params) {
    return detail::netvlad_forward_impl(fmap, params, nullptr);
}

// --- full descriptor ------------------------------------------------------------

struct DescribeResult {
    GlobalDescriptor descriptor;
    FeatureMap fmap;
};

/// REM features plus their NetVLAD descriptor; the feature map is returned
/// for keypoint-level reuse by localization.
inline DescribeResult describe(const BevImage& img, const ModelParams& params) {
    DescribeResult res;
    res.fmap = rem_forward(img, params);
    res.descriptor = netvlad_forward(res.fmap, params);
    return res;
}

/// Forward pass retaining all state needed for backward().
inline ForwardCache forward_cached(const BevImage& img, const ModelParams& params) {
    ForwardCache cache;
    cache.fmap = detail::rem_forward_impl(img, params, &cache);
    detail::netvlad_forward_impl(cache.fmap, params, &cache);
    return cache;
}

/// Reverse-mode gradients of the descriptor with respect to every parameter,
/// accumulated into grads. The REM max routes through the winning rotation
/// only; rotations backpropagate through their bilinear sampling weights.
inline void backward(const ForwardCache& cache, const ModelParams& params,
                     const GlobalDescriptor& ddesc, ModelParams& grads) {
    if (cache.branches.empty() || cache.assigns.empty())
        throw MissingCache("backward requires a cache from forward_cached");
    const int K = params.cfg.clusters, C = params.cfg.feature_dim();
    if (static_cast<int>(ddesc.size()) != K * C)
        throw ShapeMismatch("descriptor gradient size mismatch");
    const FeatureMap& fmap = cache.fmap;
    const std::size_t HW = fmap.locations();

    // Descriptor normalizations (global, then per row).
    std::vector<double> dV(static_cast<std::size_t>(K) * C, 0.0);
    if (cache.global_norm >= kNormEps) {
        std::vector<double> du(static_cast<std::size_t>(K) * C);
        detail::l2_normalize_backward(cache.descriptor.data(), cache.global_norm, ddesc.data(),
                                      du.data(), du.size());
        std::vector<double> nhat(C);
        for (int k = 0; k < K; ++k) {
            double rn = cache.row_norms[k];
            if (rn < kNormEps) continue;  // degenerate row: gradient stops
            const double* dslice = du.data() + static_cast<std::size_t>(k) * C;
            for (int c = 0; c < C; ++c)
                nhat[c] = cache.descriptor[static_cast<std::size_t>(k) * C + c] * cache.global_norm;
            detail::l2_normalize_backward(nhat.data(), rn, dslice,
                                          dV.data() + static_cast<std::size_t>(k) * C, C);
        }
    }

    // NetVLAD pooling backward.
    FeatureMap dfmap = FeatureMap::zeros(fmap.rows, fmap.cols, C);
    std::vector<double> da(K), dl(K), a_total(K, 0.0);
    for (std::size_t i = 0; i < HW; ++i) {
        const double* x = fmap.data.data() + i * C;
        const double* a = cache.assigns.data() + i * K;
        double* dx = dfmap.data.data() + i * C;
        double ssum = 0.0;
        for (int k = 0; k < K; ++k) {
            const double* dVk = dV.data() + static_cast<std::size_t>(k) * C;
            const double* ctr = params.vlad_centers.data() + static_cast<std::size_t>(k) * C;
            double d = 0.0;
            for (int c = 0; c < C; ++c) d += dVk[c] * (x[c] - ctr[c]);
            da[k] = d;
            ssum += a[k] * d;
            a_total[k] += a[k];
            for (int c = 0; c < C; ++c) dx[c] += a[k] * dVk[c];
        }
        for (int k = 0; k < K; ++k) {
            dl[k] = a[k] * (da[k] - ssum);
            if (dl[k] == 0.0) continue;
            double* dw = grads.vlad_assign_w.data() + static_cast<std::size_t>(k) * C;
            const double* w = params.vlad_assign_w.data() + static_cast<std::size_t>(k) * C;
            for (int c = 0; c < C; ++c) {
                dw[c] += dl[k] * x[c];
                dx[c] += dl[k] * w[c];
            }
            grads.vlad_assign_b[k] += dl[k];
        }
    }
    for (int k = 0; k < K; ++k) {
        const double* dVk = dV.data() + static_cast<std::size_t>(k) * C;
        double* dc = grads.vlad_centers.data() + static_cast<std::size_t>(k) * C;
        for (int c = 0; c < C; ++c) dc[c] -= a_total[k] * dVk[c];
    }

    // REM max: route each element's gradient to its winning branch.
    for (int k = 0; k < cache.n_rot; ++k) {
        FeatureMap masked = FeatureMap::zeros(fmap.rows, fmap.cols, C);
        bool any = false;
        for (std::size_t i = 0; i < masked.data.size(); ++i) {
            if (cache.argmax[i] == k && dfmap.data[i] != 0.0) {
                masked.data[i] = dfmap.data[i];
                any = true;
            }
        }
        if (!any) continue;
        double theta = 2.0 * M_PI * k / cache.n_rot;
        if (k == 0) {
            detail::conv_stack_backward(cache.branches[k], params, std::move(masked), grads);
        } else {
            FeatureMap dconv = FeatureMap::zeros(fmap.rows, fmap.cols, C);
            detail::rotate_fmap_transpose_accum(masked, -theta, dconv);
            detail::conv_stack_backward(cache.branches[k], params, std::move(dconv), grads);
        }
    }
}

}  // namespace sbevloc
