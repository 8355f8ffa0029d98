#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gait/phase.hpp"
#include "gait/types.hpp"

namespace gait {

struct FsmConfig {
    double alpha = 0.6;           // normalized-score emission threshold
    int debounce_k = 3;           // consecutive identical frames to confirm
    int aux_reset_frames = 100;   // contiguous auxiliary frames aborting an attempt
    int attempt_timeout_frames = 500;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("fsm.alpha must lie in (0, 1]");
        if (debounce_k < 1) throw ConfigError("fsm.debounce_k must be >= 1");
        if (aux_reset_frames < debounce_k || attempt_timeout_frames < debounce_k)
            throw ConfigError("fsm timeouts must be >= debounce_k");
    }
};

/// A validated step: the interval plus the frame index at which each
/// contributing phase run began.
struct StepEvent {
    StepInterval interval;
    std::vector<std::int64_t> onset_frames; // parallel to interval.phases_seen
};

/// Raw/normalized score of an attempt. Each of the four canonical phases
/// adds 1.0 the first time it is confirmed with a canonical rank above
/// everything before it; out-of-order or repeated confirmations add
/// nothing.
inline std::pair<double, double> score_attempt(std::span<const GaitPhase> contributing) {
    if (contributing.empty() || contributing.front() != GaitPhase::TakeOff)
        throw InvalidAttempt("an attempt must begin with a confirmed take-off");
    auto rank = [](GaitPhase p) -> int {
        switch (p) {
        case GaitPhase::TakeOff: return 0;
        case GaitPhase::Swing: return 1;
        case GaitPhase::Strike: return 2;
        case GaitPhase::Stance: return 3;
        default: return -1;
        }
    };
    double raw = 0.0;
    int highest = -1;
    for (GaitPhase p : contributing) {
        const int r = rank(p);
        if (r > highest) {
            raw += 1.0;
            highest = r;
        }
    }
    return {raw, raw / 4.0};
}

/// Decoder state threaded through fsm_step; one instance per stream.
struct FsmState {
    // debounce buffer
    GaitPhase last_confirmed = GaitPhase::Stance;
    GaitPhase candidate = GaitPhase::Stance;
    int candidate_run = 0;
    std::int64_t candidate_onset_us = 0;
    std::int64_t candidate_onset_frame = 0;
    // attempt record, empty while idle
    bool in_attempt = false;
    std::vector<GaitPhase> contributing;
    std::vector<std::int64_t> onset_us;
    std::vector<std::int64_t> onset_frames;
    std::int64_t attempt_age = 0; // frames since the opening confirmation
    // contiguous predicted-auxiliary frames
    std::int64_t aux_run = 0;
    std::int64_t frame = 0;
};

struct FsmStepResult {
    GaitPhase refined = GaitPhase::Stance;
    std::optional<StepEvent> event;
};

namespace detail {

inline void clear_attempt(FsmState& st) {
    st.in_attempt = false;
    st.contributing.clear();
    st.onset_us.clear();
    st.onset_frames.clear();
    st.attempt_age = 0;
}

/// Score the open attempt and build the event if it clears the threshold.
/// Degenerate zero-length intervals are never emitted.
inline std::optional<StepEvent> finalize_attempt(FsmState& st, std::int64_t end_us,
                                                 const FsmConfig& cfg) {
    std::optional<StepEvent> out;
    if (st.in_attempt) {
        const auto [raw, norm] = score_attempt(st.contributing);
        if (norm >= cfg.alpha && end_us > st.onset_us.front()) {
            StepEvent e;
            e.interval.start_us = st.onset_us.front();
            e.interval.end_us = end_us;
            e.interval.raw_score = raw;
            e.interval.norm_score = norm;
            e.interval.phases_seen = st.contributing;
            e.onset_frames = st.onset_frames;
            out = std::move(e);
        }
    }
    clear_attempt(st);
    return out;
}

inline bool contains(const std::vector<GaitPhase>& v, GaitPhase p) {
    return std::find(v.begin(), v.end(), p) != v.end();
}

} // namespace detail

/// One causal decoder step. A phase is confirmed after debounce_k identical
/// consecutive predictions; shorter fragments never reach the attempt
/// logic. Attempts open on a confirmed take-off, collect canonical phases,
/// and finalize on stance-after-strike, on a new take-off, or on timeout.
/// A long contiguous auxiliary run aborts the attempt without emission.
inline FsmStepResult fsm_step(FsmState& st, GaitPhase predicted, std::int64_t t_us,
                              const FsmConfig& cfg) {
    FsmStepResult result;
    if (st.in_attempt) ++st.attempt_age;

    if (predicted == st.candidate) {
        ++st.candidate_run;
    } else {
        st.candidate = predicted;
        st.candidate_run = 1;
        st.candidate_onset_us = t_us;
        st.candidate_onset_frame = st.frame;
    }

    if (st.candidate_run == cfg.debounce_k && st.candidate != st.last_confirmed) {
        const GaitPhase conf = st.candidate;
        st.last_confirmed = conf;
        switch (conf) {
        case GaitPhase::TakeOff: {
            if (st.in_attempt) result.event = detail::finalize_attempt(st, t_us, cfg);
            st.in_attempt = true;
            st.contributing = {GaitPhase::TakeOff};
            st.onset_us = {st.candidate_onset_us};
            st.onset_frames = {st.candidate_onset_frame};
            st.attempt_age = 0;
            break;
        }
        case GaitPhase::Swing:
        case GaitPhase::Strike: {
            if (st.in_attempt && !detail::contains(st.contributing, conf)) {
                st.contributing.push_back(conf);
                st.onset_us.push_back(st.candidate_onset_us);
                st.onset_frames.push_back(st.candidate_onset_frame);
            }
            break;
        }
        case GaitPhase::Stance: {
            if (st.in_attempt) {
                const bool after_strike =
                    detail::contains(st.contributing, GaitPhase::Strike);
                if (!detail::contains(st.contributing, GaitPhase::Stance)) {
                    st.contributing.push_back(conf);
                    st.onset_us.push_back(st.candidate_onset_us);
                    st.onset_frames.push_back(st.candidate_onset_frame);
                }
                if (after_strike)
                    result.event = detail::finalize_attempt(st, t_us, cfg);
            }
            break;
        }
        case GaitPhase::Auxiliary:
            break; // auxiliary never contributes to an attempt
        }
    }

    if (predicted == GaitPhase::Auxiliary) {
        ++st.aux_run;
        if (st.in_attempt && st.aux_run >= cfg.aux_reset_frames)
            detail::clear_attempt(st); // abort, no emission
    } else {
        st.aux_run = 0;
    }

    if (st.in_attempt && st.attempt_age >= cfg.attempt_timeout_frames && !result.event)
        result.event = detail::finalize_attempt(st, t_us, cfg);

    ++st.frame;
    result.refined = st.last_confirmed;
    return result;
}

/// Close a stream: a still-open attempt is scored at the last seen
/// timestamp so offline and online decoding agree on complete recordings.
inline std::optional<StepEvent> fsm_finalize(FsmState& st, std::int64_t end_us,
                                             const FsmConfig& cfg) {
    if (!st.in_attempt) return std::nullopt;
    return detail::finalize_attempt(st, end_us, cfg);
}

struct DecodeResult {
    std::vector<GaitPhase> refined;
    std::vector<StepEvent> events;
};

/// Fold fsm_step over a whole sequence, finalizing any open attempt at the
/// end.
inline DecodeResult decode_sequence(std::span<const GaitPhase> labels,
                                    std::span<const std::int64_t> t_us,
                                    const FsmConfig& cfg) {
    cfg.validate();
    if (!t_us.empty() && t_us.size() != labels.size())
        throw LengthError("labels/timestamps length mismatch");
    DecodeResult out;
    out.refined.reserve(labels.size());
    FsmState st;
    std::int64_t last_t = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::int64_t t = t_us.empty() ? static_cast<std::int64_t>(i) * 10000
                                            : t_us[i];
        FsmStepResult r = fsm_step(st, labels[i], t, cfg);
        out.refined.push_back(r.refined);
        if (r.event) out.events.push_back(std::move(*r.event));
        last_t = t;
    }
    if (!labels.empty())
        if (auto e = fsm_finalize(st, last_t, cfg)) out.events.push_back(std::move(*e));
    return out;
}

inline DecodeResult decode_sequence(std::span<const GaitPhase> labels,
                                    const FsmConfig& cfg) {
    return decode_sequence(labels, {}, cfg);
}

/// The evaluation reference timeline: the same decoder run over ground
/// truth labels.
inline std::vector<StepEvent> ground_truth_steps(const SessionRecording& s,
                                                 const FsmConfig& cfg) {
    if (!s.labeled()) throw LengthError("ground_truth_steps needs a labeled session");
    std::vector<std::int64_t> ts;
    ts.reserve(s.samples.size());
    for (const auto& r : s.samples) ts.push_back(r.t_us);
    return decode_sequence(s.labels, ts, cfg).events;
}

inline std::vector<StepInterval> event_intervals(const std::vector<StepEvent>& ev) {
    std::vector<StepInterval> out;
    out.reserve(ev.size());
    for (const auto& e : ev) out.push_back(e.interval);
    return out;
}

} // namespace gait
