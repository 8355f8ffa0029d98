#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gait/csvio.hpp"
#include "gait/rng.hpp"
#include "gait/types.hpp"

namespace gait {

enum class GaitStrategy { TwoPoint, SwingTo, SwingThrough };

inline std::string strategy_name(GaitStrategy s) {
    switch (s) {
    case GaitStrategy::TwoPoint: return "two_point";
    case GaitStrategy::SwingTo: return "swing_to";
    case GaitStrategy::SwingThrough: return "swing_through";
    }
    return "?";
}

inline GaitStrategy strategy_from_name(const std::string& n) {
    if (n == "two_point") return GaitStrategy::TwoPoint;
    if (n == "swing_to") return GaitStrategy::SwingTo;
    if (n == "swing_through") return GaitStrategy::SwingThrough;
    throw ConfigError("unknown gait strategy: " + n);
}

/// Per-subject kinematic parameters. Strategies scale swing duration and
/// amplitude; everything else is drawn once per subject from documented
/// physiologic-looking ranges (these are engineering choices, not measured
/// population statistics).
struct SubjectProfile {
    std::uint64_t seed = 0;
    GaitStrategy strategy = GaitStrategy::TwoPoint;
    double cadence_hz = 1.0;      // step rate
    double swing_amplitude = 2.0; // rad/s peak pitch rate
    double strike_spike = 9.0;    // m/s^2 peak deceleration
    double takeoff_lift = 2.5;    // m/s^2 upward pulse
    double stance_ms = 380, takeoff_ms = 120, swing_ms = 420, strike_ms = 80;
    double duration_jitter = 0.10; // fractional, per segment
    double noise_accel = 0.15;     // m/s^2 std
    double noise_gyro = 0.06;      // rad/s std
    double swing_dur_mult = 1.0, swing_amp_mult = 1.0;
};

struct SynthConfig {
    int n_steps = 8;  // steps per lap
    int laps = 2;
    int sessions_per_subject = 2;
    double sample_rate_hz = 100.0;
    double aux_probability = 0.12; // chance of an auxiliary hold after a stance
    double aux_min_ms = 1200, aux_max_ms = 2600;
    bool balance = true;  // per-class frame shares near uniform
    bool turns = true;    // yaw ramps on the last swing phases of each lap
    double noise_scale = 1.0;
    double glitch_rate = 0.0; // per-frame chance of a 1-frame accel artifact
    double glitch_amp = 10.0; // m/s^2
    char swing_axis = 'y';     // lateral pitch axis; 'x' for the alternative frame

    void validate() const {
        if (n_steps < 1 || laps < 1 || sessions_per_subject < 1)
            throw ConfigError("synth counts must be >= 1");
        if (!(aux_probability >= 0.0 && aux_probability <= 1.0))
            throw ConfigError("synth.aux_probability must lie in [0, 1]");
        if (!(aux_min_ms > 0 && aux_max_ms >= aux_min_ms))
            throw ConfigError("synth aux duration range invalid");
        if (noise_scale < 0 || glitch_rate < 0 || glitch_rate > 1)
            throw ConfigError("synth noise parameters out of range");
        if (swing_axis != 'x' && swing_axis != 'y')
            throw ConfigError("synth.swing_axis must be 'x' or 'y'");
    }
};

inline SubjectProfile make_profile(std::uint64_t seed, GaitStrategy strategy) {
    Rng rng(mix_seed(seed, 0x5f));
    SubjectProfile p;
    p.seed = seed;
    p.strategy = strategy;
    p.cadence_hz = rng.uniform(0.8, 1.2);
    p.swing_amplitude = rng.uniform(1.6, 2.4);
    p.strike_spike = rng.uniform(7.0, 12.0);
    p.takeoff_lift = rng.uniform(2.0, 3.5);
    p.duration_jitter = 0.10;
    p.noise_accel = rng.uniform(0.08, 0.15);
    p.noise_gyro = rng.uniform(0.025, 0.05);
    switch (strategy) {
    case GaitStrategy::TwoPoint:
        p.swing_dur_mult = 1.0;
        p.swing_amp_mult = 1.0;
        break;
    case GaitStrategy::SwingTo:
        p.swing_dur_mult = 1.25;
        p.swing_amp_mult = 1.15;
        break;
    case GaitStrategy::SwingThrough:
        p.swing_dur_mult = 1.5;
        p.swing_amp_mult = 1.3;
        break;
    }
    // phase duration means, scaled so one cycle matches the cadence
    const double cycle_ms = 1000.0 / p.cadence_hz;
    double ws = 0.38, wt = 0.12, ww = 0.42 * p.swing_dur_mult, wk = 0.08;
    const double sum = ws + wt + ww + wk;
    p.stance_ms = cycle_ms * ws / sum;
    p.takeoff_ms = cycle_ms * wt / sum;
    p.swing_ms = cycle_ms * ww / sum;
    p.strike_ms = cycle_ms * wk / sum;
    return p;
}

/// Generator-side truth, used by tests as an oracle independent of the
/// decoding pipeline.
struct SynthTrace {
    std::vector<Vec3> omega_cmd;    // commanded body rates per frame
    std::vector<Vec3> accel_cmd;    // commanded global accelerations per frame
    std::vector<StepInterval> true_steps; // takeoff onset -> next stance onset
};

namespace detail {

struct Segment {
    GaitPhase phase = GaitPhase::Stance;
    int frames = 0;
    double turn_sign = 0.0; // nonzero: yaw ramp during this swing
};

inline int jittered_frames(double mean_ms, double jitter, double dt_ms, Rng& rng) {
    const double ms = std::max(40.0, mean_ms * (1.0 + jitter * rng.uniform(-1.0, 1.0)));
    return std::max(4, static_cast<int>(std::llround(ms / dt_ms)));
}

} // namespace detail

/// Synthesize one labeled session. The orientation stream is integrated
/// from the recorded gyro, so gravity removal downstream inverts the
/// construction exactly on noise-free data; that property is what makes
/// the generator usable as a pipeline oracle.
inline SessionRecording generate_session(const SubjectProfile& prof,
                                         const SynthConfig& cfg,
                                         std::uint64_t session_seed,
                                         SynthTrace* trace = nullptr) {
    cfg.validate();
    Rng rng(mix_seed(session_seed, 0xD5));
    const double dt = 1.0 / cfg.sample_rate_hz;
    const double dt_ms = 1000.0 * dt;
    const std::int64_t dt_us = static_cast<std::int64_t>(std::llround(1e6 * dt));

    // balanced mode flattens the duration weights and ignores the strategy
    // duration multiplier so every class keeps a 15-25% frame share
    double stance_ms = prof.stance_ms, takeoff_ms = prof.takeoff_ms,
           swing_ms = prof.swing_ms, strike_ms = prof.strike_ms;
    if (cfg.balance) {
        const double cycle_ms = 1000.0 / prof.cadence_hz;
        stance_ms = 0.26 * cycle_ms;
        takeoff_ms = 0.23 * cycle_ms;
        swing_ms = 0.28 * cycle_ms;
        strike_ms = 0.23 * cycle_ms;
    }

    std::vector<detail::Segment> plan;
    std::vector<std::size_t> takeoff_segments; // per step, index into plan
    for (int lap = 0; lap < cfg.laps; ++lap) {
        for (int step = 0; step < cfg.n_steps; ++step) {
            plan.push_back({GaitPhase::Stance,
                            detail::jittered_frames(stance_ms, prof.duration_jitter, dt_ms, rng)});
            if (rng.uniform() < cfg.aux_probability) {
                const double aux_ms = rng.uniform(cfg.aux_min_ms, cfg.aux_max_ms);
                plan.push_back({GaitPhase::Auxiliary,
                                std::max(4, static_cast<int>(std::llround(aux_ms / dt_ms)))});
            }
            takeoff_segments.push_back(plan.size());
            plan.push_back({GaitPhase::TakeOff,
                            detail::jittered_frames(takeoff_ms, prof.duration_jitter, dt_ms, rng)});
            const bool turning = cfg.turns && step >= cfg.n_steps - 2;
            const double turn_sign = turning ? (lap % 2 == 0 ? 1.0 : -1.0) : 0.0;
            plan.push_back({GaitPhase::Swing,
                            detail::jittered_frames(swing_ms, prof.duration_jitter, dt_ms, rng),
                            turn_sign});
            plan.push_back({GaitPhase::Strike,
                            detail::jittered_frames(strike_ms, prof.duration_jitter, dt_ms, rng)});
        }
    }
    plan.push_back({GaitPhase::Stance,
                    detail::jittered_frames(stance_ms * 2.0, prof.duration_jitter, dt_ms, rng)});

    SessionRecording session;
    session.meta.strategy = strategy_name(prof.strategy);
    session.meta.seed = session_seed;

    const double amp = prof.swing_amplitude * prof.swing_amp_mult;
    const int pitch_axis = cfg.swing_axis == 'y' ? 1 : 0;
    const int roll_axis = cfg.swing_axis == 'y' ? 0 : 1;
    const bool noisy = cfg.noise_scale > 0.0;

    Quat q = quat_from_axis_angle({0, 0, 1}, rng.uniform(-M_PI, M_PI));
    Vec3 aux_gyro_ou{}, aux_acc_ou{};
    int fidget_left = 0, fidget_axis = 0;
    double fidget_amp = 0.0;
    int fidget_total = 0;
    double lean_pitch = 0.0, lean_roll = 0.0; // per-aux-segment crutch lean

    std::int64_t frame = 0;
    std::vector<std::int64_t> stance_onsets; // frame index of every stance segment start

    for (std::size_t si = 0; si < plan.size(); ++si) {
        const detail::Segment& seg = plan[si];
        if (seg.phase == GaitPhase::Stance) stance_onsets.push_back(frame);
        if (seg.phase == GaitPhase::Auxiliary) {
            // the crutch is not load bearing here: it gets parked at a lean
            const double mag = rng.uniform(0.25, 0.5);
            const double dir = rng.uniform(0, 2.0 * M_PI);
            lean_pitch = mag * std::sin(dir);
            lean_roll = mag * std::cos(dir);
        }
        // yaw rate capped so frame-to-frame rotations stay small against the
        // sample interval; fast cadences turn a little less than 90 degrees
        const double yaw_amp =
            seg.turn_sign *
            std::min(4.0, (M_PI / 2.0) * M_PI / (2.0 * seg.frames * dt));
        for (int i = 0; i < seg.frames; ++i) {
            const double phi = static_cast<double>(i) / seg.frames;
            Vec3 omega{}, accel{};
            const EulerAngles e = quat_to_euler(q);
            switch (seg.phase) {
            case GaitPhase::Stance: {
                // weak upright restore keeps long sessions bounded
                omega[pitch_axis] = std::clamp(-2.0 * e.pitch, -0.15, 0.15);
                omega[roll_axis] = std::clamp(-2.0 * e.roll, -0.15, 0.15);
                break;
            }
            case GaitPhase::TakeOff: {
                accel[2] = prof.takeoff_lift * (0.35 + 0.65 * std::sin(M_PI * phi));
                omega[pitch_axis] = 0.15 * amp * std::sin(M_PI * phi);
                break;
            }
            case GaitPhase::Swing: {
                // zero-net pitch profile whose samples never hit exactly zero
                omega[pitch_axis] = amp * std::cos(2.0 * M_PI * phi + 0.043);
                accel[0] = 1.2 * prof.swing_amp_mult * std::sin(2.0 * M_PI * phi);
                if (seg.turn_sign != 0.0) omega[2] += yaw_amp * std::sin(M_PI * phi);
                break;
            }
            case GaitPhase::Strike: {
                // impact ringing spans the whole segment so strike windows
                // stay recognizable from their newest frames alone
                const double env = std::exp(-2.2 * phi);
                accel[2] = -prof.strike_spike * env * std::cos(10.0 * M_PI * phi + 0.4);
                accel[0] = -0.4 * prof.strike_spike * std::exp(-5.0 * phi);
                omega[pitch_axis] = -0.2 * amp * std::exp(-3.0 * phi);
                break;
            }
            case GaitPhase::Auxiliary: {
                // correlated wander with occasional fidget bursts; grounded
                // crutch, so keep the upright restore active. The wander sits
                // well above stance noise but below swing amplitudes, which
                // leaves a deliberate (mild) stance/auxiliary overlap near the
                // quiet stretches of the process.
                for (int a = 0; a < 3; ++a) {
                    aux_gyro_ou[a] += (-1.5 * aux_gyro_ou[a] * dt) +
                                      0.7 * std::sqrt(dt) * rng.normal();
                    aux_acc_ou[a] += (-1.5 * aux_acc_ou[a] * dt) +
                                     1.0 * std::sqrt(dt) * rng.normal();
                    omega[a] += aux_gyro_ou[a];
                    accel[a] += aux_acc_ou[a];
                }
                // track the parked lean, returning upright over the tail of
                // the segment so the following stance starts level
                const double tail = 1.0 - std::min(1.0, (1.0 - phi) * seg.frames * dt / 0.5);
                const double tp = lean_pitch * (1.0 - tail);
                const double tr = lean_roll * (1.0 - tail);
                omega[pitch_axis] += std::clamp(-6.0 * (e.pitch - tp), -1.5, 1.5);
                omega[roll_axis] += std::clamp(-6.0 * (e.roll - tr), -1.5, 1.5);
                // horizontal fidget wiggles; vertical pulses would read as
                // take-off lift
                if (fidget_left == 0 && rng.uniform() < 0.02) {
                    fidget_total = fidget_left = 6 + static_cast<int>(rng.below(6));
                    fidget_axis = static_cast<int>(rng.below(2));
                    fidget_amp = rng.uniform(1.5, 3.0);
                }
                if (fidget_left > 0) {
                    const double bphi =
                        static_cast<double>(fidget_total - fidget_left) / fidget_total;
                    accel[fidget_axis] += fidget_amp * std::sin(M_PI * bphi);
                    --fidget_left;
                }
                break;
            }
            }
            if (trace) {
                trace->omega_cmd.push_back(omega);
                trace->accel_cmd.push_back(accel);
            }
            Vec3 omega_rec = omega;
            if (noisy)
                for (int a = 0; a < 3; ++a)
                    omega_rec[a] += cfg.noise_scale * prof.noise_gyro * rng.normal();
            Vec3 a_global = accel;
            a_global[2] += kGravity;
            Vec3 a_body = quat_rotate(quat_conjugate(q), a_global);
            if (noisy) {
                for (int a = 0; a < 3; ++a)
                    a_body[a] += cfg.noise_scale * prof.noise_accel * rng.normal();
                if (rng.uniform() < cfg.glitch_rate) {
                    const int axis = static_cast<int>(rng.below(3));
                    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                    a_body[axis] += sign * cfg.glitch_amp * rng.uniform(0.7, 1.0);
                }
            }
            RawImuSample sample;
            sample.t_us = frame * dt_us;
            sample.a_body = a_body;
            sample.omega_body = omega_rec;
            sample.orientation = q;
            session.samples.push_back(sample);
            session.labels.push_back(seg.phase);
            q = quat_integrate(q, omega_rec, dt);
            ++frame;
        }
    }

    if (trace) {
        // a true step spans its takeoff onset to the next stance onset
        for (std::size_t k = 0; k < takeoff_segments.size(); ++k) {
            std::int64_t onset = 0;
            std::int64_t cursor = 0;
            for (std::size_t sj = 0; sj < plan.size(); ++sj) {
                if (sj == takeoff_segments[k]) {
                    onset = cursor;
                    break;
                }
                cursor += plan[sj].frames;
            }
            std::int64_t end_frame = -1;
            for (std::int64_t so : stance_onsets)
                if (so > onset) {
                    end_frame = so;
                    break;
                }
            StepInterval iv;
            iv.start_us = onset * dt_us;
            iv.end_us = end_frame * dt_us;
            iv.raw_score = 4.0;
            iv.norm_score = 1.0;
            iv.phases_seen = {GaitPhase::TakeOff, GaitPhase::Swing,
                              GaitPhase::Strike, GaitPhase::Stance};
            trace->true_steps.push_back(iv);
        }
    }
    return session;
}

struct ManifestRecord {
    std::string path; // relative to the dataset root
    std::string subject;
    std::string strategy;
    std::uint64_t seed = 0;
    std::int64_t frames = 0;
    std::array<std::int64_t, kNumPhases> class_counts{};
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
};

inline constexpr std::string_view kManifestHeader =
    "path,subject,strategy,seed,frames,stance,takeoff,swing,strike,auxiliary";

inline void save_manifest(const std::filesystem::path& path,
                          const DatasetManifest& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << kManifestHeader << '\n';
    for (const ManifestRecord& r : m.records) {
        f << r.path << ',' << r.subject << ',' << r.strategy << ',' << r.seed
          << ',' << r.frames;
        for (std::int64_t c : r.class_counts) f << ',' << c;
        f << '\n';
    }
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.csv";
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw CorruptFile(path.string() + ": empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader)
        throw CorruptFile(path.string() + ": unexpected manifest header");
    DatasetManifest m;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line, ',');
        if (fields.size() != 10) throw CorruptFile(path.string() + ": bad manifest row");
        ManifestRecord r;
        r.path = std::string(fields[0]);
        r.subject = std::string(fields[1]);
        r.strategy = std::string(fields[2]);
        r.seed = parse_u64(fields[3]);
        r.frames = parse_i64(fields[4]);
        for (int c = 0; c < kNumPhases; ++c)
            r.class_counts[static_cast<std::size_t>(c)] = parse_i64(fields[5 + c]);
        m.records.push_back(std::move(r));
    }
    return m;
}

/// Generate a dataset tree: one directory per subject, several sessions
/// each, plus manifest.csv at the root. Strategies cycle across subjects.
inline DatasetManifest generate_dataset(int n_subjects, const SynthConfig& cfg,
                                        const std::filesystem::path& out_dir,
                                        std::uint64_t master_seed) {
    if (n_subjects < 1) throw ConfigError("need at least one subject");
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    DatasetManifest manifest;
    for (int s = 0; s < n_subjects; ++s) {
        char sid[16];
        std::snprintf(sid, sizeof(sid), "s%02d", s + 1);
        const GaitStrategy strategy =
            static_cast<GaitStrategy>(s % 3 == 0 ? 0 : (s % 3 == 1 ? 1 : 2));
        const std::uint64_t subj_seed = mix_seed(master_seed, 100 + static_cast<std::uint64_t>(s));
        const SubjectProfile prof = make_profile(subj_seed, strategy);
        const std::filesystem::path subj_dir = out_dir / sid;
        std::filesystem::create_directories(subj_dir, ec);
        if (ec) throw IoError("cannot create " + subj_dir.string());
        for (int k = 0; k < cfg.sessions_per_subject; ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "sess%02d.csv", k + 1);
            const std::uint64_t sess_seed = mix_seed(subj_seed, 200 + static_cast<std::uint64_t>(k));
            SessionRecording session = generate_session(prof, cfg, sess_seed);
            session.meta.subject = sid;
            save_session_csv(subj_dir / name, session);
            ManifestRecord r;
            r.path = std::string(sid) + "/" + name;
            r.subject = sid;
            r.strategy = strategy_name(strategy);
            r.seed = sess_seed;
            r.frames = static_cast<std::int64_t>(session.size());
            for (GaitPhase p : session.labels)
                ++r.class_counts[static_cast<std::size_t>(phase_index(p))];
            manifest.records.push_back(std::move(r));
        }
    }
    save_manifest(out_dir / "manifest.csv", manifest);
    return manifest;
}

/// Load every session listed in a dataset manifest, with metadata attached.
inline std::vector<SessionRecording> load_dataset(const std::filesystem::path& dir) {
    const DatasetManifest m = load_manifest(dir);
    std::vector<SessionRecording> out;
    out.reserve(m.records.size());
    for (const ManifestRecord& r : m.records) {
        SessionRecording s = load_session_csv(dir / r.path);
        s.meta.subject = r.subject;
        s.meta.strategy = r.strategy;
        s.meta.seed = r.seed;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace gait
