#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "gait/errors.hpp"
#include "gait/rng.hpp"
#include "gait/types.hpp"

namespace gait {

/// Architecture of the gait-phase classifier: a causal dilated temporal
/// convolution stack with residual blocks, last-step read-out, and a dense
/// softmax head.
struct TcnConfig {
    int input_channels = kNumChannels;
    int num_blocks = 2;
    int channels = 96;
    int kernel_size = 2;
    std::vector<int> dilations = {1, 2}; // one per block, shared by both convs
    double spatial_dropout = 0.255;
    int dense_units = 96;
    int num_classes = kNumPhases;

    void validate() const {
        if (input_channels < 1 || num_blocks < 1 || channels < 1 ||
            kernel_size < 1 || dense_units < 1 || num_classes < 2)
            throw ConfigError("tcn sizes must be positive");
        if (static_cast<int>(dilations.size()) != num_blocks)
            throw ConfigError("tcn.dilations must list one dilation per block");
        for (int d : dilations)
            if (d < 1) throw ConfigError("tcn dilations must be >= 1");
        if (!(spatial_dropout >= 0.0 && spatial_dropout < 1.0))
            throw ConfigError("tcn.spatial_dropout must lie in [0, 1)");
    }

    /// Frames of history influencing the last-step output.
    int receptive_field() const {
        int rf = 1;
        for (int d : dilations) rf += 2 * (kernel_size - 1) * d;
        return rf;
    }
};

/// One convolution layer. Weight layout is [out_ch][tap][in_ch] with the
/// in-channel axis contiguous; tap index kk reaches input frame t - kk*d,
/// so tap 0 is the current frame.
template <typename T>
struct ConvLayerT {
    int out_ch = 0, in_ch = 0, k = 1;
    std::vector<T> w; // out_ch * k * in_ch
    std::vector<T> b; // out_ch

    std::size_t params() const { return w.size() + b.size(); }
};

template <typename T>
struct BlockWeightsT {
    ConvLayerT<T> conv1, conv2;
    bool has_proj = false;
    ConvLayerT<T> proj; // 1x1, only when in/out channel counts differ
};

template <typename T>
struct TcnWeightsT {
    std::vector<BlockWeightsT<T>> blocks;
    std::vector<T> dense_w, dense_b; // dense_units x channels
    std::vector<T> out_w, out_b;     // num_classes x dense_units

    std::size_t params() const {
        std::size_t n = dense_w.size() + dense_b.size() + out_w.size() + out_b.size();
        for (const auto& blk : blocks) {
            n += blk.conv1.params() + blk.conv2.params();
            if (blk.has_proj) n += blk.proj.params();
        }
        return n;
    }
};

using TcnWeights = TcnWeightsT<double>;

inline std::int64_t param_count(const TcnConfig& cfg) {
    cfg.validate();
    std::int64_t n = 0;
    int in_ch = cfg.input_channels;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        n += static_cast<std::int64_t>(cfg.channels) * in_ch * cfg.kernel_size + cfg.channels;
        n += static_cast<std::int64_t>(cfg.channels) * cfg.channels * cfg.kernel_size + cfg.channels;
        if (in_ch != cfg.channels)
            n += static_cast<std::int64_t>(cfg.channels) * in_ch + cfg.channels;
        in_ch = cfg.channels;
    }
    n += static_cast<std::int64_t>(cfg.dense_units) * cfg.channels + cfg.dense_units;
    n += static_cast<std::int64_t>(cfg.num_classes) * cfg.dense_units + cfg.num_classes;
    return n;
}

namespace detail {

inline void he_uniform_fill(std::span<double> w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w) v = rng.uniform(-bound, bound);
}

inline ConvLayerT<double> init_conv(int out_ch, int in_ch, int k, Rng& rng) {
    ConvLayerT<double> L;
    L.out_ch = out_ch;
    L.in_ch = in_ch;
    L.k = k;
    L.w.resize(static_cast<std::size_t>(out_ch) * k * in_ch);
    L.b.assign(static_cast<std::size_t>(out_ch), 0.0);
    he_uniform_fill(L.w, in_ch * k, rng);
    return L;
}

} // namespace detail

/// He-uniform weights, zero biases, fully determined by the seed.
inline TcnWeights init_weights(const TcnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x7c1));
    TcnWeights w;
    int in_ch = cfg.input_channels;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        BlockWeightsT<double> blk;
        blk.conv1 = detail::init_conv(cfg.channels, in_ch, cfg.kernel_size, rng);
        blk.conv2 = detail::init_conv(cfg.channels, cfg.channels, cfg.kernel_size, rng);
        if (in_ch != cfg.channels) {
            blk.has_proj = true;
            blk.proj = detail::init_conv(cfg.channels, in_ch, 1, rng);
        }
        w.blocks.push_back(std::move(blk));
        in_ch = cfg.channels;
    }
    w.dense_w.resize(static_cast<std::size_t>(cfg.dense_units) * cfg.channels);
    detail::he_uniform_fill(w.dense_w, cfg.channels, rng);
    w.dense_b.assign(static_cast<std::size_t>(cfg.dense_units), 0.0);
    w.out_w.resize(static_cast<std::size_t>(cfg.num_classes) * cfg.dense_units);
    detail::he_uniform_fill(w.out_w, cfg.dense_units, rng);
    w.out_b.assign(static_cast<std::size_t>(cfg.num_classes), 0.0);
    return w;
}

/// out[t, co] = b[co] + sum_kk sum_ci w[co,kk,ci] * in[t - kk*d, ci],
/// frames before the start read as zero. Output length equals input length,
/// and out[t] never touches input rows beyond t: the layer is causal.
template <typename T>
void dilated_causal_conv(const T* in, int rows, int in_ch,
                         const ConvLayerT<T>& L, int dilation, T* out) {
    for (int t = 0; t < rows; ++t) {
        T* orow = out + static_cast<std::size_t>(t) * L.out_ch;
        for (int co = 0; co < L.out_ch; ++co) orow[co] = L.b[co];
        for (int kk = 0; kk < L.k; ++kk) {
            const int src = t - kk * dilation;
            if (src < 0) continue;
            const T* irow = in + static_cast<std::size_t>(src) * in_ch;
            for (int co = 0; co < L.out_ch; ++co) {
                const T* wrow = L.w.data() +
                                (static_cast<std::size_t>(co) * L.k + kk) * in_ch;
                T acc = 0;
                for (int ci = 0; ci < in_ch; ++ci) acc += wrow[ci] * irow[ci];
                orow[co] += acc;
            }
        }
    }
}

template <typename T>
void softmax_inplace(std::span<T> v) {
    T mx = v[0];
    for (T x : v) mx = x > mx ? x : mx;
    T sum = 0;
    for (T& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (T& x : v) x /= sum;
}

/// Scratch buffers for the forward pass so streaming inference does not
/// allocate per frame.
template <typename T>
struct TcnWorkspace {
    std::vector<T> cur, c1, c2, res, dense;
};

/// Inference-only forward pass (dropout off). `input` is the normalized
/// h x input_channels window, row-major oldest to newest. Returns class
/// probabilities for the last frame.
template <typename T>
std::vector<T> tcn_infer(const TcnConfig& cfg, const TcnWeightsT<T>& w,
                         const T* input, int rows, TcnWorkspace<T>& ws) {
    if (rows < 1) throw ShapeError("window must have at least one row");
    const int C = cfg.channels;
    ws.cur.assign(input, input + static_cast<std::size_t>(rows) * cfg.input_channels);
    int in_ch = cfg.input_channels;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        const auto& blk = w.blocks[static_cast<std::size_t>(b)];
        const int d = cfg.dilations[static_cast<std::size_t>(b)];
        // the swap below can leave these at the input width, so resize per block
        ws.c1.resize(static_cast<std::size_t>(rows) * C);
        ws.c2.resize(static_cast<std::size_t>(rows) * C);
        ws.res.resize(static_cast<std::size_t>(rows) * C);
        dilated_causal_conv(ws.cur.data(), rows, in_ch, blk.conv1, d, ws.c1.data());
        for (T& x : ws.c1) x = x > 0 ? x : 0;
        dilated_causal_conv(ws.c1.data(), rows, C, blk.conv2, d, ws.c2.data());
        for (T& x : ws.c2) x = x > 0 ? x : 0;
        if (blk.has_proj) {
            dilated_causal_conv(ws.cur.data(), rows, in_ch, blk.proj, 1, ws.res.data());
            for (std::size_t i = 0; i < ws.c2.size(); ++i) ws.c2[i] += ws.res[i];
        } else {
            for (std::size_t i = 0; i < ws.c2.size(); ++i) ws.c2[i] += ws.cur[i];
        }
        std::swap(ws.cur, ws.c2);
        in_ch = C;
    }
    // last-step read-out keeps the "current phase" semantics causal
    const T* last = ws.cur.data() + static_cast<std::size_t>(rows - 1) * C;
    ws.dense.assign(static_cast<std::size_t>(cfg.dense_units), T(0));
    for (int u = 0; u < cfg.dense_units; ++u) {
        const T* wrow = w.dense_w.data() + static_cast<std::size_t>(u) * C;
        T acc = w.dense_b[static_cast<std::size_t>(u)];
        for (int c = 0; c < C; ++c) acc += wrow[c] * last[c];
        ws.dense[static_cast<std::size_t>(u)] = acc > 0 ? acc : 0;
    }
    std::vector<T> logits(static_cast<std::size_t>(cfg.num_classes));
    for (int k = 0; k < cfg.num_classes; ++k) {
        const T* wrow = w.out_w.data() + static_cast<std::size_t>(k) * cfg.dense_units;
        T acc = w.out_b[static_cast<std::size_t>(k)];
        for (int u = 0; u < cfg.dense_units; ++u) acc += wrow[u] * ws.dense[static_cast<std::size_t>(u)];
        logits[static_cast<std::size_t>(k)] = acc;
    }
    softmax_inplace(std::span<T>(logits));
    return logits;
}

template <typename T>
ConvLayerT<T> cast_conv(const ConvLayerT<double>& L) {
    ConvLayerT<T> out;
    out.out_ch = L.out_ch;
    out.in_ch = L.in_ch;
    out.k = L.k;
    out.w.assign(L.w.begin(), L.w.end());
    out.b.assign(L.b.begin(), L.b.end());
    return out;
}

template <typename T>
TcnWeightsT<T> cast_weights(const TcnWeights& w) {
    TcnWeightsT<T> out;
    for (const auto& blk : w.blocks) {
        BlockWeightsT<T> nb;
        nb.conv1 = cast_conv<T>(blk.conv1);
        nb.conv2 = cast_conv<T>(blk.conv2);
        nb.has_proj = blk.has_proj;
        if (blk.has_proj) nb.proj = cast_conv<T>(blk.proj);
        out.blocks.push_back(std::move(nb));
    }
    out.dense_w.assign(w.dense_w.begin(), w.dense_w.end());
    out.dense_b.assign(w.dense_b.begin(), w.dense_b.end());
    out.out_w.assign(w.out_w.begin(), w.out_w.end());
    out.out_b.assign(w.out_b.begin(), w.out_b.end());
    return out;
}

} // namespace gait
