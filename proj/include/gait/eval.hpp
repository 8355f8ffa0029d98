#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gait/fsm.hpp"
#include "gait/model.hpp"
#include "gait/synth.hpp"
#include "gait/train.hpp"

namespace gait {

/// Frame- and step-level results over one or more labeled sessions.
/// Confusion rows are indexed by truth, columns by prediction, and are
/// row-normalized (all-zero rows stay zero for absent classes).
struct EvalReport {
    std::int64_t frames = 0;
    std::array<std::array<std::int64_t, kNumPhases>, kNumPhases> confusion_counts{};
    double frame_accuracy = 0.0;
    std::array<double, kNumPhases> per_class_recall{};
    std::array<std::array<double, kNumPhases>, kNumPhases> confusion{};

    std::int64_t true_steps = 0, pred_steps = 0, matched_steps = 0;
    double step_recall = 0.0, step_precision = 0.0;
    double start_err_mean_ms = 0.0, start_err_std_ms = 0.0;
    double end_err_mean_ms = 0.0, end_err_std_ms = 0.0;
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& std) {
    if (v.empty()) {
        mean = std = 0.0;
        return;
    }
    double s = 0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    std = std::sqrt(ss / static_cast<double>(v.size()));
}

} // namespace detail

/// Counting accumulator so multi-session reports pool frames and steps
/// instead of averaging per-session rates.
struct EvalAccumulator {
    std::array<std::array<std::int64_t, kNumPhases>, kNumPhases> confusion{};
    std::int64_t frames = 0, agree = 0;
    std::int64_t true_steps = 0, pred_steps = 0, matched_steps = 0;
    std::vector<double> start_err_ms, end_err_ms;

    EvalReport finalize() const {
        EvalReport r;
        r.frames = frames;
        r.confusion_counts = confusion;
        r.frame_accuracy =
            frames == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(frames);
        for (int i = 0; i < kNumPhases; ++i) {
            std::int64_t row = 0;
            for (int j = 0; j < kNumPhases; ++j) row += confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            for (int j = 0; j < kNumPhases; ++j)
                r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    row == 0 ? 0.0
                             : static_cast<double>(confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) /
                                   static_cast<double>(row);
            r.per_class_recall[static_cast<std::size_t>(i)] =
                row == 0 ? 0.0 : r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        }
        r.true_steps = true_steps;
        r.pred_steps = pred_steps;
        r.matched_steps = matched_steps;
        r.step_recall = true_steps == 0
                            ? 1.0
                            : static_cast<double>(matched_steps) / static_cast<double>(true_steps);
        r.step_precision = pred_steps == 0
                               ? 1.0
                               : static_cast<double>(matched_steps) / static_cast<double>(pred_steps);
        detail::mean_std(start_err_ms, r.start_err_mean_ms, r.start_err_std_ms);
        detail::mean_std(end_err_ms, r.end_err_mean_ms, r.end_err_std_ms);
        return r;
    }
};

inline void add_frame_metrics(EvalAccumulator& acc, std::span<const GaitPhase> pred,
                              std::span<const GaitPhase> truth) {
    if (pred.size() != truth.size())
        throw LengthError("prediction/truth length mismatch: " +
                          std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++acc.confusion[static_cast<std::size_t>(phase_index(truth[i]))]
                       [static_cast<std::size_t>(phase_index(pred[i]))];
        ++acc.frames;
        if (pred[i] == truth[i]) ++acc.agree;
    }
}

/// Overall accuracy, per-class recall, and a row-normalized confusion
/// matrix for one pair of equal-length phase sequences.
inline EvalReport frame_metrics(std::span<const GaitPhase> pred,
                                std::span<const GaitPhase> truth) {
    EvalAccumulator acc;
    add_frame_metrics(acc, pred, truth);
    return acc.finalize();
}

inline double interval_iou(const StepInterval& a, const StepInterval& b) {
    const std::int64_t inter = std::min(a.end_us, b.end_us) - std::max(a.start_us, b.start_us);
    if (inter <= 0) return 0.0;
    const std::int64_t uni = (a.end_us - a.start_us) + (b.end_us - b.start_us) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct StepMatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (truth idx, pred idx)
    double recall = 0.0, precision = 0.0;
    std::vector<double> start_err_ms, end_err_ms;
};

/// Greedy one-to-one matching by descending temporal IoU; only pairs at or
/// above the threshold count. Ties break on (truth index, pred index).
inline StepMatchResult match_steps(const std::vector<StepInterval>& pred,
                                   const std::vector<StepInterval>& truth,
                                   double iou_threshold = 0.5) {
    struct Cand {
        double iou;
        std::size_t t, p;
    };
    std::vector<Cand> cands;
    for (std::size_t t = 0; t < truth.size(); ++t)
        for (std::size_t p = 0; p < pred.size(); ++p) {
            const double iou = interval_iou(truth[t], pred[p]);
            if (iou >= iou_threshold) cands.push_back({iou, t, p});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.t != b.t) return a.t < b.t;
        return a.p < b.p;
    });
    std::vector<bool> t_used(truth.size(), false), p_used(pred.size(), false);
    StepMatchResult out;
    for (const Cand& c : cands) {
        if (t_used[c.t] || p_used[c.p]) continue;
        t_used[c.t] = true;
        p_used[c.p] = true;
        out.pairs.emplace_back(c.t, c.p);
        out.start_err_ms.push_back(
            std::abs(static_cast<double>(truth[c.t].start_us - pred[c.p].start_us)) / 1000.0);
        out.end_err_ms.push_back(
            std::abs(static_cast<double>(truth[c.t].end_us - pred[c.p].end_us)) / 1000.0);
    }
    out.recall = truth.empty()
                     ? 1.0
                     : static_cast<double>(out.pairs.size()) / static_cast<double>(truth.size());
    out.precision = pred.empty()
                        ? 1.0
                        : static_cast<double>(out.pairs.size()) / static_cast<double>(pred.size());
    return out;
}

inline void add_step_metrics(EvalAccumulator& acc, const std::vector<StepInterval>& pred,
                             const std::vector<StepInterval>& truth,
                             double iou_threshold = 0.5) {
    StepMatchResult m = match_steps(pred, truth, iou_threshold);
    acc.true_steps += static_cast<std::int64_t>(truth.size());
    acc.pred_steps += static_cast<std::int64_t>(pred.size());
    acc.matched_steps += static_cast<std::int64_t>(m.pairs.size());
    acc.start_err_ms.insert(acc.start_err_ms.end(), m.start_err_ms.begin(), m.start_err_ms.end());
    acc.end_err_ms.insert(acc.end_err_ms.end(), m.end_err_ms.begin(), m.end_err_ms.end());
}

/// The raw-path step decode drops the fragment suppression (debounce 1) so
/// the "without" column reflects what the classifier stream alone implies.
inline FsmConfig raw_step_config(FsmConfig cfg) {
    cfg.debounce_k = 1;
    return cfg;
}

/// Run one labeled session through the classifier and pool metrics for the
/// refined (with decoder) and raw (argmax) paths. Warm-up frames are
/// excluded from frame metrics so scores do not depend on the warm-up
/// labeling convention.
inline void evaluate_session_into(const TcnModel& model, const FsmConfig& fsm_cfg,
                                  const SessionRecording& session,
                                  EvalAccumulator& with_fsm,
                                  EvalAccumulator& without_fsm,
                                  double iou_threshold = 0.5) {
    if (!session.labeled()) throw LengthError("evaluation needs a labeled session");
    fsm_cfg.validate();
    const std::vector<FramePrediction> preds = predict_session(model, session);
    std::vector<GaitPhase> raw;
    std::vector<std::int64_t> ts;
    raw.reserve(preds.size());
    ts.reserve(preds.size());
    for (const FramePrediction& p : preds) {
        raw.push_back(p.phase);
        ts.push_back(p.t_us);
    }
    const DecodeResult refined = decode_sequence(raw, ts, fsm_cfg);
    const std::size_t warm = static_cast<std::size_t>(model.window.h - 1);
    const std::span<const GaitPhase> truth_tail{session.labels.data() + warm,
                                                session.labels.size() - warm};
    add_frame_metrics(without_fsm,
                      std::span<const GaitPhase>{raw.data() + warm, raw.size() - warm},
                      truth_tail);
    add_frame_metrics(with_fsm,
                      std::span<const GaitPhase>{refined.refined.data() + warm,
                                                 refined.refined.size() - warm},
                      truth_tail);
    const std::vector<StepInterval> truth_steps =
        event_intervals(ground_truth_steps(session, fsm_cfg));
    add_step_metrics(with_fsm, event_intervals(refined.events), truth_steps, iou_threshold);
    const DecodeResult raw_decode = decode_sequence(raw, ts, raw_step_config(fsm_cfg));
    add_step_metrics(without_fsm, event_intervals(raw_decode.events), truth_steps,
                     iou_threshold);
}

struct SessionEval {
    EvalReport with_fsm, without_fsm;
};

inline SessionEval evaluate_session(const TcnModel& model, const FsmConfig& fsm_cfg,
                                    const SessionRecording& session,
                                    double iou_threshold = 0.5) {
    EvalAccumulator w, wo;
    evaluate_session_into(model, fsm_cfg, session, w, wo, iou_threshold);
    return {w.finalize(), wo.finalize()};
}

// ---------------------------------------------------------------------------
// data-efficiency sweep

struct SweepRow {
    int k = 0;
    int runs = 0;
    double acc_with_fsm = 0, acc_without_fsm = 0;
    double recall_with_fsm = 0, recall_without_fsm = 0;
};

struct SweepInputs {
    std::vector<std::vector<SessionRecording>> train_pool; // sessions per subject
    std::vector<SessionRecording> test_sessions;
    TcnConfig arch;
    TrainConfig train;
    WindowConfig window;
    PreprocessConfig preprocess;
    FsmConfig fsm;
    std::uint64_t seed = 1;
    int threads = 1;
};

namespace detail {

inline void combinations(int n, int k, std::vector<std::vector<int>>& out) {
    std::vector<int> cur;
    auto rec = [&](auto&& self, int start) -> void {
        if (static_cast<int>(cur.size()) == k) {
            out.push_back(cur);
            return;
        }
        for (int i = start; i < n; ++i) {
            cur.push_back(i);
            self(self, i + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
}

} // namespace detail

/// Retrain on `repeats` distinct k-subject combinations for every k up to
/// k_max and average the held-out metrics. Deterministic per master seed;
/// independent training jobs may run on a small thread pool.
inline std::vector<SweepRow> subject_sweep(const SweepInputs& in, int k_max, int repeats) {
    if (k_max < 1 || repeats < 1) throw ConfigError("sweep k_max and repeats must be >= 1");
    if (static_cast<int>(in.train_pool.size()) < k_max)
        throw InsufficientData("train pool smaller than k_max");
    if (in.test_sessions.empty()) throw InsufficientData("no test sessions");

    struct Job {
        int k = 0;
        std::vector<int> subjects;
        std::uint64_t seed = 0;
        SessionEval result;
    };
    std::vector<Job> jobs;
    for (int k = 1; k <= k_max; ++k) {
        std::vector<std::vector<int>> combos;
        detail::combinations(static_cast<int>(in.train_pool.size()), k, combos);
        Rng rng(mix_seed(in.seed, 400 + static_cast<std::uint64_t>(k)));
        rng.shuffle(combos.begin(), combos.end());
        const int use = std::min<int>(repeats, static_cast<int>(combos.size()));
        for (int r = 0; r < use; ++r)
            jobs.push_back({k, combos[static_cast<std::size_t>(r)],
                            mix_seed(in.seed, static_cast<std::uint64_t>(k) * 131 +
                                                  static_cast<std::uint64_t>(r))});
    }

    auto run_job = [&](Job& job) {
        std::vector<SessionWindows> data;
        for (int s : job.subjects) {
            int i = 0;
            for (const SessionRecording& sess : in.train_pool[static_cast<std::size_t>(s)]) {
                data.push_back(session_windows(sess, in.window, in.preprocess,
                                               sess.meta.subject + "/" + std::to_string(i++)));
            }
        }
        TrainConfig tc = in.train;
        tc.seed = job.seed;
        const TrainResult trained = train_tcn(data, in.arch, tc, in.window, in.preprocess);
        EvalAccumulator w, wo;
        for (const SessionRecording& sess : in.test_sessions)
            evaluate_session_into(trained.model, in.fsm, sess, w, wo);
        job.result = {w.finalize(), wo.finalize()};
    };

    const int threads = std::max(1, in.threads);
    if (threads == 1) {
        for (Job& j : jobs) run_job(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_job(jobs[i]);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<SweepRow> rows;
    for (int k = 1; k <= k_max; ++k) {
        SweepRow row;
        row.k = k;
        for (const Job& j : jobs) {
            if (j.k != k) continue;
            ++row.runs;
            row.acc_with_fsm += j.result.with_fsm.frame_accuracy;
            row.acc_without_fsm += j.result.without_fsm.frame_accuracy;
            row.recall_with_fsm += j.result.with_fsm.step_recall;
            row.recall_without_fsm += j.result.without_fsm.step_recall;
        }
        if (row.runs > 0) {
            row.acc_with_fsm /= row.runs;
            row.acc_without_fsm /= row.runs;
            row.recall_with_fsm /= row.runs;
            row.recall_without_fsm /= row.runs;
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "k,runs,acc_with_fsm,acc_without_fsm,step_recall_with_fsm,step_recall_without_fsm\n";
    for (const SweepRow& r : rows)
        os << r.k << ',' << r.runs << ',' << fmt_double(r.acc_with_fsm) << ','
           << fmt_double(r.acc_without_fsm) << ',' << fmt_double(r.recall_with_fsm)
           << ',' << fmt_double(r.recall_without_fsm) << '\n';
}

// ---------------------------------------------------------------------------
// latency benchmark

struct LatencyReport {
    int n = 0;
    double mean_ms = 0, std_ms = 0, p99_ms = 0, max_ms = 0;
    double pre_mean_ms = 0, fwd_mean_ms = 0, fsm_mean_ms = 0;
};

/// Single-thread wall-clock cost of one frame of the online pipeline
/// (preprocess + forward + decoder), measured over synthetic input.
inline LatencyReport bench_latency(const TcnModel& model, const FsmConfig& fsm_cfg,
                                   int n_windows, int warmup, std::uint64_t seed = 42) {
    if (n_windows < 100) throw ConfigError("bench needs n_windows >= 100");
    if (warmup < 50) throw ConfigError("bench needs warmup >= 50");
    fsm_cfg.validate();
    const int needed = n_windows + warmup + model.window.h + 16;
    SynthConfig scfg;
    scfg.sample_rate_hz = model.window.sample_rate_hz;
    scfg.n_steps = needed / 60 + 2;
    scfg.laps = 1;
    const SubjectProfile prof = make_profile(seed, GaitStrategy::TwoPoint);
    const SessionRecording session = generate_session(prof, scfg, mix_seed(seed, 7));
    if (static_cast<int>(session.size()) < needed)
        throw Error("benchmark session too short"); // generator sizing bug

    StreamingPredictor pred(model);
    FsmState fsm;
    LatencyReport rep;
    std::vector<double> totals;
    totals.reserve(static_cast<std::size_t>(n_windows));
    double pre_sum = 0, fwd_sum = 0, fsm_sum = 0;
    using clock = std::chrono::steady_clock;
    int measured = 0;
    for (int i = 0; i < needed && measured < n_windows; ++i) {
        StageTimes stages;
        const auto t0 = clock::now();
        const FramePrediction fp = pred.push(session.samples[static_cast<std::size_t>(i)], &stages);
        const auto t1 = clock::now();
        fsm_step(fsm, fp.phase, fp.t_us, fsm_cfg);
        const auto t2 = clock::now();
        if (i < warmup) continue;
        const double fsm_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        const double total = std::chrono::duration<double, std::milli>(t2 - t0).count();
        totals.push_back(total);
        pre_sum += stages.pre_ms;
        fwd_sum += stages.fwd_ms;
        fsm_sum += fsm_ms;
        ++measured;
    }
    rep.n = measured;
    detail::mean_std(totals, rep.mean_ms, rep.std_ms);
    std::vector<double> sorted = totals;
    std::sort(sorted.begin(), sorted.end());
    rep.max_ms = sorted.empty() ? 0.0 : sorted.back();
    if (!sorted.empty()) {
        const std::size_t idx = std::min(
            sorted.size() - 1,
            static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size()))) - 1);
        rep.p99_ms = sorted[idx];
    }
    rep.pre_mean_ms = measured ? pre_sum / measured : 0;
    rep.fwd_mean_ms = measured ? fwd_sum / measured : 0;
    rep.fsm_mean_ms = measured ? fsm_sum / measured : 0;
    return rep;
}

// ---------------------------------------------------------------------------
// report serialization

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json conf = nlohmann::json::array();
    nlohmann::json counts = nlohmann::json::array();
    for (int i = 0; i < kNumPhases; ++i) {
        conf.push_back(std::vector<double>(r.confusion[static_cast<std::size_t>(i)].begin(),
                                           r.confusion[static_cast<std::size_t>(i)].end()));
        counts.push_back(std::vector<std::int64_t>(
            r.confusion_counts[static_cast<std::size_t>(i)].begin(),
            r.confusion_counts[static_cast<std::size_t>(i)].end()));
    }
    return {
        {"frames", r.frames},
        {"frame_accuracy", r.frame_accuracy},
        {"per_class_recall",
         std::vector<double>(r.per_class_recall.begin(), r.per_class_recall.end())},
        {"confusion", conf},
        {"confusion_counts", counts},
        {"true_steps", r.true_steps},
        {"pred_steps", r.pred_steps},
        {"matched_steps", r.matched_steps},
        {"step_recall", r.step_recall},
        {"step_precision", r.step_precision},
        {"start_err_mean_ms", r.start_err_mean_ms},
        {"start_err_std_ms", r.start_err_std_ms},
        {"end_err_mean_ms", r.end_err_mean_ms},
        {"end_err_std_ms", r.end_err_std_ms},
    };
}

inline void write_report_text(std::ostream& os, const std::string& title,
                              const EvalReport& r) {
    char buf[160];
    os << title << "\n";
    std::snprintf(buf, sizeof(buf), "  frame accuracy   %.4f over %lld frames\n",
                  r.frame_accuracy, static_cast<long long>(r.frames));
    os << buf;
    for (int i = 0; i < kNumPhases; ++i) {
        std::snprintf(buf, sizeof(buf), "  recall %-10s %.4f\n",
                      std::string(phase_name(phase_from_index(i))).c_str(),
                      r.per_class_recall[static_cast<std::size_t>(i)]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "  steps: true %lld  predicted %lld  matched %lld\n",
                  static_cast<long long>(r.true_steps),
                  static_cast<long long>(r.pred_steps),
                  static_cast<long long>(r.matched_steps));
    os << buf;
    std::snprintf(buf, sizeof(buf), "  step recall %.4f  precision %.4f\n",
                  r.step_recall, r.step_precision);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "  timing error (ms): start %.1f +/- %.1f  end %.1f +/- %.1f\n",
                  r.start_err_mean_ms, r.start_err_std_ms, r.end_err_mean_ms,
                  r.end_err_std_ms);
    os << buf;
}

inline void write_confusion_csv(std::ostream& os, const EvalReport& r) {
    os << "truth\\pred";
    for (int j = 0; j < kNumPhases; ++j) os << ',' << phase_name(phase_from_index(j));
    os << '\n';
    for (int i = 0; i < kNumPhases; ++i) {
        os << phase_name(phase_from_index(i));
        for (int j = 0; j < kNumPhases; ++j)
            os << ',' << fmt_double(r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        os << '\n';
    }
}

inline void write_latency_text(std::ostream& os, const LatencyReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "runtime per frame (ms): %.3f +/- %.3f  p99 %.3f  max %.3f  (n=%d)\n",
                  r.mean_ms, r.std_ms, r.p99_ms, r.max_ms, r.n);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "stages (ms): preprocess %.4f  forward %.4f  decoder %.4f\n",
                  r.pre_mean_ms, r.fwd_mean_ms, r.fsm_mean_ms);
    os << buf;
}

} // namespace gait
