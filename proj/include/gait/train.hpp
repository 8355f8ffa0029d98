#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gait/model.hpp"

namespace gait {

struct TrainConfig {
    double learning_rate = 8.9e-4;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 100;
    int patience = 10; // epochs without val-loss improvement before stopping
    double val_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
        if (patience < 1) throw ConfigError("train.patience must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0))
            throw ConfigError("train.val_fraction must lie in (0, 1)");
    }
};

/// All labeled windows of one recording. The train/validation split is done
/// at this granularity: windows overlap within a session, so splitting by
/// window would leak.
struct SessionWindows {
    std::string id;
    std::vector<WindowTensor> windows;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0, train_acc = 0;
    double val_loss = 0, val_acc = 0;
};

struct TrainResult {
    TcnModel model;
    std::vector<EpochStats> history;
    std::vector<std::string> train_sessions, val_sessions;
};

/// A batch of normalized windows; x[i] points at rows*input_channels
/// doubles, y[i] is the zero-based class index.
struct TrainBatch {
    int rows = 0;
    std::vector<const double*> x;
    std::vector<int> y;
};

namespace detail {

inline constexpr double kProbClamp = 1e-12;

struct BlockCache {
    std::vector<double> x;   // block input
    std::vector<double> p1;  // conv1 pre-activation
    std::vector<double> d1;  // conv2 input (post relu + dropout)
    std::vector<double> p2;  // conv2 pre-activation
    std::vector<double> mask1, mask2; // per-channel keep/scale factors
};

struct SampleCache {
    std::vector<BlockCache> blocks;
    std::vector<double> x_out;     // final block output
    std::vector<double> dense_pre, dense_act;
    std::vector<double> probs;
};

/// Train-mode forward for one sample. With rng == nullptr (or p == 0) the
/// arithmetic matches tcn_infer exactly, which the tests pin down.
inline void forward_train(const TcnConfig& cfg, const TcnWeights& w,
                          const double* input, int rows, Rng* rng, double p,
                          SampleCache& cache) {
    const int C = cfg.channels;
    cache.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
    const bool drop = rng != nullptr && p > 0.0;
    const double keep_scale = drop ? 1.0 / (1.0 - p) : 1.0;
    std::vector<double>* cur = nullptr;
    int in_ch = cfg.input_channels;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
        if (b == 0)
            bc.x.assign(input, input + static_cast<std::size_t>(rows) * in_ch);
        else
            bc.x = *cur;
        const auto& blk = w.blocks[static_cast<std::size_t>(b)];
        const int d = cfg.dilations[static_cast<std::size_t>(b)];
        const std::size_t n = static_cast<std::size_t>(rows) * C;
        bc.p1.resize(n);
        dilated_causal_conv(bc.x.data(), rows, in_ch, blk.conv1, d, bc.p1.data());
        bc.mask1.assign(static_cast<std::size_t>(C), keep_scale);
        if (drop)
            for (double& m : bc.mask1) m = rng->uniform() < p ? 0.0 : keep_scale;
        bc.d1.resize(n);
        for (int t = 0; t < rows; ++t)
            for (int c = 0; c < C; ++c) {
                const std::size_t i = static_cast<std::size_t>(t) * C + c;
                const double a = bc.p1[i] > 0 ? bc.p1[i] : 0;
                bc.d1[i] = a * bc.mask1[static_cast<std::size_t>(c)];
            }
        bc.p2.resize(n);
        dilated_causal_conv(bc.d1.data(), rows, C, blk.conv2, d, bc.p2.data());
        bc.mask2.assign(static_cast<std::size_t>(C), keep_scale);
        if (drop)
            for (double& m : bc.mask2) m = rng->uniform() < p ? 0.0 : keep_scale;
        cache.x_out.resize(n);
        for (int t = 0; t < rows; ++t)
            for (int c = 0; c < C; ++c) {
                const std::size_t i = static_cast<std::size_t>(t) * C + c;
                const double a = bc.p2[i] > 0 ? bc.p2[i] : 0;
                cache.x_out[i] = a * bc.mask2[static_cast<std::size_t>(c)];
            }
        if (blk.has_proj) {
            std::vector<double> res(n);
            dilated_causal_conv(bc.x.data(), rows, in_ch, blk.proj, 1, res.data());
            for (std::size_t i = 0; i < n; ++i) cache.x_out[i] += res[i];
        } else {
            for (std::size_t i = 0; i < n; ++i) cache.x_out[i] += bc.x[i];
        }
        cur = &cache.x_out;
        in_ch = C;
        if (b + 1 < cfg.num_blocks) {
            // next iteration copies cur into its own cache slot
        }
    }
    const double* last = cache.x_out.data() + static_cast<std::size_t>(rows - 1) * C;
    cache.dense_pre.resize(static_cast<std::size_t>(cfg.dense_units));
    cache.dense_act.resize(static_cast<std::size_t>(cfg.dense_units));
    for (int u = 0; u < cfg.dense_units; ++u) {
        const double* wrow = w.dense_w.data() + static_cast<std::size_t>(u) * C;
        double acc = w.dense_b[static_cast<std::size_t>(u)];
        for (int c = 0; c < C; ++c) acc += wrow[c] * last[c];
        cache.dense_pre[static_cast<std::size_t>(u)] = acc;
        cache.dense_act[static_cast<std::size_t>(u)] = acc > 0 ? acc : 0;
    }
    cache.probs.resize(static_cast<std::size_t>(cfg.num_classes));
    for (int k = 0; k < cfg.num_classes; ++k) {
        const double* wrow = w.out_w.data() + static_cast<std::size_t>(k) * cfg.dense_units;
        double acc = w.out_b[static_cast<std::size_t>(k)];
        for (int u = 0; u < cfg.dense_units; ++u)
            acc += wrow[u] * cache.dense_act[static_cast<std::size_t>(u)];
        cache.probs[static_cast<std::size_t>(k)] = acc;
    }
    softmax_inplace(std::span<double>(cache.probs));
}

/// Gradients of a conv layer given upstream dout; din may be null for the
/// first layer. din must be zeroed by the caller.
inline void conv_backward(const double* in, int rows, int in_ch,
                          const ConvLayerT<double>& L, int dilation,
                          const double* dout, ConvLayerT<double>& dL,
                          double* din) {
    for (int t = 0; t < rows; ++t) {
        const double* drow = dout + static_cast<std::size_t>(t) * L.out_ch;
        for (int co = 0; co < L.out_ch; ++co) dL.b[static_cast<std::size_t>(co)] += drow[co];
        for (int kk = 0; kk < L.k; ++kk) {
            const int src = t - kk * dilation;
            if (src < 0) continue;
            const double* irow = in + static_cast<std::size_t>(src) * in_ch;
            double* dirow = din ? din + static_cast<std::size_t>(src) * in_ch : nullptr;
            for (int co = 0; co < L.out_ch; ++co) {
                const double g = drow[co];
                if (g == 0.0) continue;
                const std::size_t wbase = (static_cast<std::size_t>(co) * L.k + kk) * in_ch;
                double* dwrow = dL.w.data() + wbase;
                const double* wrow = L.w.data() + wbase;
                if (dirow) {
                    for (int ci = 0; ci < in_ch; ++ci) {
                        dwrow[ci] += g * irow[ci];
                        dirow[ci] += g * wrow[ci];
                    }
                } else {
                    for (int ci = 0; ci < in_ch; ++ci) dwrow[ci] += g * irow[ci];
                }
            }
        }
    }
}

inline void backward_sample(const TcnConfig& cfg, const TcnWeights& w,
                            const SampleCache& cache, int rows, int label,
                            double inv_batch, TcnWeights& grad) {
    const int C = cfg.channels;
    const int K = cfg.num_classes;
    const int D = cfg.dense_units;
    // softmax + cross entropy
    std::vector<double> dz(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        dz[static_cast<std::size_t>(k)] =
            (cache.probs[static_cast<std::size_t>(k)] - (k == label ? 1.0 : 0.0)) * inv_batch;
    std::vector<double> da(static_cast<std::size_t>(D), 0.0);
    for (int k = 0; k < K; ++k) {
        const double g = dz[static_cast<std::size_t>(k)];
        double* dwrow = grad.out_w.data() + static_cast<std::size_t>(k) * D;
        const double* wrow = w.out_w.data() + static_cast<std::size_t>(k) * D;
        grad.out_b[static_cast<std::size_t>(k)] += g;
        for (int u = 0; u < D; ++u) {
            dwrow[u] += g * cache.dense_act[static_cast<std::size_t>(u)];
            da[static_cast<std::size_t>(u)] += g * wrow[u];
        }
    }
    const double* last = cache.x_out.data() + static_cast<std::size_t>(rows - 1) * C;
    std::vector<double> df(static_cast<std::size_t>(C), 0.0);
    for (int u = 0; u < D; ++u) {
        const double du =
            cache.dense_pre[static_cast<std::size_t>(u)] > 0 ? da[static_cast<std::size_t>(u)] : 0.0;
        if (du == 0.0) continue;
        grad.dense_b[static_cast<std::size_t>(u)] += du;
        double* dwrow = grad.dense_w.data() + static_cast<std::size_t>(u) * C;
        const double* wrow = w.dense_w.data() + static_cast<std::size_t>(u) * C;
        for (int c = 0; c < C; ++c) {
            dwrow[c] += du * last[c];
            df[static_cast<std::size_t>(c)] += du * wrow[c];
        }
    }
    // gradient w.r.t. the last block's output: only the read-out row is hit
    std::vector<double> dy(static_cast<std::size_t>(rows) * C, 0.0);
    for (int c = 0; c < C; ++c)
        dy[static_cast<std::size_t>(rows - 1) * C + c] = df[static_cast<std::size_t>(c)];

    for (int b = cfg.num_blocks - 1; b >= 0; --b) {
        const BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
        const auto& blk = w.blocks[static_cast<std::size_t>(b)];
        auto& gblk = grad.blocks[static_cast<std::size_t>(b)];
        const int d = cfg.dilations[static_cast<std::size_t>(b)];
        const int in_ch = blk.conv1.in_ch;
        const std::size_t n = static_cast<std::size_t>(rows) * C;
        // through dropout2 + relu2
        std::vector<double> dp2(n);
        for (int t = 0; t < rows; ++t)
            for (int c = 0; c < C; ++c) {
                const std::size_t i = static_cast<std::size_t>(t) * C + c;
                dp2[i] = bc.p2[i] > 0 ? dy[i] * bc.mask2[static_cast<std::size_t>(c)] : 0.0;
            }
        std::vector<double> dd1(n, 0.0);
        conv_backward(bc.d1.data(), rows, C, blk.conv2, d, dp2.data(), gblk.conv2,
                      dd1.data());
        std::vector<double> dp1(n);
        for (int t = 0; t < rows; ++t)
            for (int c = 0; c < C; ++c) {
                const std::size_t i = static_cast<std::size_t>(t) * C + c;
                dp1[i] = bc.p1[i] > 0 ? dd1[i] * bc.mask1[static_cast<std::size_t>(c)] : 0.0;
            }
        std::vector<double> dx(static_cast<std::size_t>(rows) * in_ch, 0.0);
        conv_backward(bc.x.data(), rows, in_ch, blk.conv1, d, dp1.data(), gblk.conv1,
                      dx.data());
        // residual branch
        if (blk.has_proj) {
            conv_backward(bc.x.data(), rows, in_ch, blk.proj, 1, dy.data(), gblk.proj,
                          dx.data());
        } else {
            for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i];
        }
        dy = std::move(dx);
    }
}

} // namespace detail

/// Mean cross-entropy over a batch plus gradients for every weight array.
/// Passing a dropout RNG enables spatial dropout with probability p.
inline double loss_and_grad(const TcnConfig& cfg, const TcnWeights& w,
                            const TrainBatch& batch, Rng* dropout_rng, double p,
                            TcnWeights& grad,
                            std::vector<int>* argmax_out = nullptr) {
    if (batch.x.empty()) throw InsufficientData("empty training batch");
    const double inv_batch = 1.0 / static_cast<double>(batch.x.size());
    double loss = 0.0;
    detail::SampleCache cache;
    if (argmax_out) argmax_out->clear();
    for (std::size_t i = 0; i < batch.x.size(); ++i) {
        detail::forward_train(cfg, w, batch.x[i], batch.rows, dropout_rng, p, cache);
        const int y = batch.y[i];
        loss -= std::log(std::max(cache.probs[static_cast<std::size_t>(y)],
                                  detail::kProbClamp)) * inv_batch;
        if (argmax_out) {
            int best = 0;
            for (int k = 1; k < cfg.num_classes; ++k)
                if (cache.probs[static_cast<std::size_t>(k)] >
                    cache.probs[static_cast<std::size_t>(best)])
                    best = k;
            argmax_out->push_back(best);
        }
        detail::backward_sample(cfg, w, cache, batch.rows, y, inv_batch, grad);
    }
    return loss;
}

/// Loss of a batch without gradients (dropout off).
inline double batch_loss(const TcnConfig& cfg, const TcnWeights& w,
                         const TrainBatch& batch,
                         std::vector<int>* argmax_out = nullptr) {
    detail::SampleCache cache;
    double loss = 0.0;
    if (argmax_out) argmax_out->clear();
    for (std::size_t i = 0; i < batch.x.size(); ++i) {
        detail::forward_train(cfg, w, batch.x[i], batch.rows, nullptr, 0.0, cache);
        loss -= std::log(std::max(cache.probs[static_cast<std::size_t>(batch.y[i])],
                                  detail::kProbClamp));
        if (argmax_out) {
            int best = 0;
            for (int k = 1; k < cfg.num_classes; ++k)
                if (cache.probs[static_cast<std::size_t>(k)] >
                    cache.probs[static_cast<std::size_t>(best)])
                    best = k;
            argmax_out->push_back(best);
        }
    }
    return batch.x.empty() ? 0.0 : loss / static_cast<double>(batch.x.size());
}

namespace detail {

inline std::vector<std::vector<double>*> weight_arrays(TcnWeights& w) {
    std::vector<std::vector<double>*> out;
    visit_arrays(w, [&](const std::string&, std::vector<double>& a) { out.push_back(&a); });
    return out;
}

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
};

inline AdamState make_adam(TcnWeights& w) {
    AdamState st;
    for (auto* a : weight_arrays(w)) {
        st.m.emplace_back(a->size(), 0.0);
        st.v.emplace_back(a->size(), 0.0);
    }
    return st;
}

inline void adam_step(TcnWeights& w, TcnWeights& grad, AdamState& st,
                      const TrainConfig& tc) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(st.t));
    auto ws = weight_arrays(w);
    auto gs = weight_arrays(grad);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        auto& wa = *ws[i];
        auto& ga = *gs[i];
        auto& m = st.m[i];
        auto& v = st.v[i];
        for (std::size_t j = 0; j < wa.size(); ++j) {
            m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * ga[j];
            v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * ga[j] * ga[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            wa[j] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.epsilon);
        }
    }
}

inline void zero_grad(TcnWeights& g) {
    visit_arrays(g, [](const std::string&, std::vector<double>& a) {
        std::fill(a.begin(), a.end(), 0.0);
    });
}

} // namespace detail

/// Train a classifier on labeled windows grouped by session. Deterministic
/// for a fixed seed: split, batching, initialization and dropout all derive
/// from it. Returns the weights with the best validation loss.
inline TrainResult train_tcn(const std::vector<SessionWindows>& data,
                             const TcnConfig& arch, const TrainConfig& tc,
                             const WindowConfig& wc, const PreprocessConfig& pc) {
    arch.validate();
    tc.validate();
    wc.validate();
    if (arch.receptive_field() > wc.h)
        throw ConfigError("window h smaller than receptive field");
    if (data.size() < 2)
        throw InsufficientData("need at least 2 sessions for a session-level split");

    // session-level split
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(mix_seed(tc.seed, 11));
    split_rng.shuffle(order.begin(), order.end());
    const std::size_t n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(tc.val_fraction * static_cast<double>(data.size()))),
        1, data.size() - 1);

    TrainResult result;
    std::vector<const WindowTensor*> train_ptrs, val_ptrs;
    std::set<int> all_classes, train_classes;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const SessionWindows& s = data[order[pos]];
        const bool is_val = pos < n_val;
        (is_val ? result.val_sessions : result.train_sessions).push_back(s.id);
        for (const WindowTensor& w : s.windows) {
            if (!w.label) throw LengthError("training window without label: " + s.id);
            all_classes.insert(phase_index(*w.label));
            if (is_val) {
                val_ptrs.push_back(&w);
            } else {
                train_ptrs.push_back(&w);
                train_classes.insert(phase_index(*w.label));
            }
        }
    }
    if (train_ptrs.empty()) throw InsufficientData("no training windows");
    for (int c : all_classes)
        if (!train_classes.count(c))
            throw MissingClass("class " + std::to_string(c + 1) +
                               " absent from the training split");

    std::vector<WindowTensor> train_copy;
    train_copy.reserve(train_ptrs.size());
    for (const auto* w : train_ptrs) train_copy.push_back(*w);
    const NormStats norm = fit_normalizer(train_copy);

    const int h = wc.h;
    const std::size_t wlen = static_cast<std::size_t>(h) * kNumChannels;
    auto flatten = [&](const std::vector<const WindowTensor*>& ptrs,
                       std::vector<double>& x, std::vector<int>& y) {
        x.resize(ptrs.size() * wlen);
        y.resize(ptrs.size());
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            WindowTensor w = *ptrs[i];
            if (w.h != h) throw ShapeError("window height mismatch");
            apply_normalizer_inplace(norm, w);
            std::copy(w.data.begin(), w.data.end(), x.begin() + static_cast<std::ptrdiff_t>(i * wlen));
            y[i] = phase_index(*w.label);
        }
    };
    std::vector<double> xtr, xva;
    std::vector<int> ytr, yva;
    flatten(train_ptrs, xtr, ytr);
    flatten(val_ptrs, xva, yva);

    TcnWeights weights = init_weights(arch, tc.seed);
    TcnWeights grad = zero_weights(arch);
    detail::AdamState adam = detail::make_adam(weights);
    Rng batch_rng(mix_seed(tc.seed, 12));
    Rng dropout_rng(mix_seed(tc.seed, 13));

    auto eval_split = [&](const std::vector<double>& x, const std::vector<int>& y,
                          double& loss, double& acc) {
        if (y.empty()) {
            loss = 0;
            acc = 0;
            return;
        }
        TrainBatch b;
        b.rows = h;
        std::vector<int> am;
        double total = 0;
        std::size_t correct = 0;
        // chunked to bound the per-call vector sizes
        const std::size_t chunk = 512;
        for (std::size_t at = 0; at < y.size(); at += chunk) {
            const std::size_t end = std::min(y.size(), at + chunk);
            b.x.clear();
            b.y.clear();
            for (std::size_t i = at; i < end; ++i) {
                b.x.push_back(x.data() + i * wlen);
                b.y.push_back(y[i]);
            }
            total += batch_loss(arch, weights, b, &am) * static_cast<double>(b.y.size());
            for (std::size_t i = 0; i < am.size(); ++i)
                if (am[i] == b.y[i]) ++correct;
        }
        loss = total / static_cast<double>(y.size());
        acc = static_cast<double>(correct) / static_cast<double>(y.size());
    };

    TcnWeights best_weights = weights;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int epochs_run = 0;

    std::vector<std::size_t> idx(ytr.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        batch_rng.shuffle(idx.begin(), idx.end());
        double epoch_loss = 0;
        std::size_t correct = 0;
        TrainBatch b;
        b.rows = h;
        std::vector<int> am;
        for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t end =
                std::min(idx.size(), at + static_cast<std::size_t>(tc.batch_size));
            b.x.clear();
            b.y.clear();
            for (std::size_t i = at; i < end; ++i) {
                b.x.push_back(xtr.data() + idx[i] * wlen);
                b.y.push_back(ytr[idx[i]]);
            }
            detail::zero_grad(grad);
            const double bl = loss_and_grad(arch, weights, b, &dropout_rng,
                                            arch.spatial_dropout, grad, &am);
            epoch_loss += bl * static_cast<double>(b.y.size());
            for (std::size_t i = 0; i < am.size(); ++i)
                if (am[i] == b.y[i]) ++correct;
            detail::adam_step(weights, grad, adam, tc);
        }
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = epoch_loss / static_cast<double>(ytr.size());
        st.train_acc = static_cast<double>(correct) / static_cast<double>(ytr.size());
        eval_split(xva, yva, st.val_loss, st.val_acc);
        result.history.push_back(st);
        epochs_run = epoch;
        if (st.val_loss < best_val) {
            best_val = st.val_loss;
            best_weights = weights;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    if (tc.max_epochs == 0) {
        double l, a;
        eval_split(xva, yva, l, a);
        best_val = l;
    }

    result.model.cfg = arch;
    result.model.weights = std::move(best_weights);
    result.model.norm = norm;
    result.model.window = wc;
    result.model.preprocess = pc;
    result.model.meta.seed = tc.seed;
    result.model.meta.epochs_run = epochs_run;
    result.model.meta.val_loss = best_val;
    return result;
}

/// Windows of a labeled session in training form.
inline SessionWindows session_windows(const SessionRecording& s,
                                      const WindowConfig& wc,
                                      const PreprocessConfig& pc,
                                      const std::string& id) {
    if (!s.labeled()) throw LengthError("session has no labels: " + id);
    const std::vector<MeasurementVector> vecs = process_session(s, pc, wc.sample_rate_hz);
    std::vector<std::int64_t> ts;
    ts.reserve(s.samples.size());
    for (const auto& r : s.samples) ts.push_back(r.t_us);
    SessionWindows out;
    out.id = id;
    out.windows = segment_windows(vecs, ts, s.labels, wc);
    return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochStats>& h) {
    os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const EpochStats& e : h)
        os << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.train_acc)
           << ',' << fmt_double(e.val_loss) << ',' << fmt_double(e.val_acc) << '\n';
}

} // namespace gait
