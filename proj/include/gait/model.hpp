#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gait/csvio.hpp"
#include "gait/preprocess.hpp"
#include "gait/tcn.hpp"

namespace gait {

struct ModelMeta {
    std::uint64_t seed = 0;
    int epochs_run = 0;
    double val_loss = 0.0;
};

/// The trained classifier plus everything needed to run it on a raw
/// session: architecture, weights, channel statistics, windowing and
/// preprocessing parameters.
struct TcnModel {
    TcnConfig cfg;
    TcnWeights weights;
    NormStats norm;
    WindowConfig window;
    PreprocessConfig preprocess;
    ModelMeta meta;

    void validate() const {
        cfg.validate();
        window.validate();
        preprocess.validate();
        if (cfg.receptive_field() > window.h)
            throw ConfigError("window h " + std::to_string(window.h) +
                              " smaller than receptive field " +
                              std::to_string(cfg.receptive_field()));
    }
};

/// Visit every weight array with a stable name; the visiting order defines
/// the payload layout of the model file.
template <typename W, typename Fn>
void visit_arrays(W& w, Fn&& fn) {
    for (std::size_t b = 0; b < w.blocks.size(); ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        auto& blk = w.blocks[b];
        fn(p + "conv1.w", blk.conv1.w);
        fn(p + "conv1.b", blk.conv1.b);
        fn(p + "conv2.w", blk.conv2.w);
        fn(p + "conv2.b", blk.conv2.b);
        if (blk.has_proj) {
            fn(p + "proj.w", blk.proj.w);
            fn(p + "proj.b", blk.proj.b);
        }
    }
    fn("dense.w", w.dense_w);
    fn("dense.b", w.dense_b);
    fn("out.w", w.out_w);
    fn("out.b", w.out_b);
}

/// Zero-initialized weights with the shapes the config dictates.
inline TcnWeights zero_weights(const TcnConfig& cfg) {
    TcnWeights w = init_weights(cfg, 0);
    visit_arrays(w, [](const std::string&, std::vector<double>& a) {
        std::fill(a.begin(), a.end(), 0.0);
    });
    return w;
}

namespace detail {

inline constexpr char kModelMagic[8] = {'G', 'A', 'I', 'T', 'M', 'D', 'L', '1'};
inline constexpr int kModelVersion = 1;

inline nlohmann::json tcn_config_to_json(const TcnConfig& c) {
    return {{"input_channels", c.input_channels}, {"num_blocks", c.num_blocks},
            {"channels", c.channels},             {"kernel_size", c.kernel_size},
            {"dilations", c.dilations},           {"spatial_dropout", c.spatial_dropout},
            {"dense_units", c.dense_units},       {"num_classes", c.num_classes}};
}

inline TcnConfig tcn_config_from_json(const nlohmann::json& j) {
    TcnConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.num_blocks = j.at("num_blocks").get<int>();
    c.channels = j.at("channels").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.spatial_dropout = j.at("spatial_dropout").get<double>();
    c.dense_units = j.at("dense_units").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    return c;
}

} // namespace detail

/// Container layout: 8-byte magic, little-endian u64 header length, JSON
/// header (config, window, preprocessing, channel stats, metadata, array
/// directory), then all weight arrays as raw little-endian doubles in
/// directory order.
inline void save_model(const TcnModel& model, const std::filesystem::path& path) {
    using nlohmann::json;
    json arrays = json::array();
    std::uint64_t offset = 0;
    visit_arrays(model.weights, [&](const std::string& name, const std::vector<double>& a) {
        arrays.push_back({{"name", name},
                          {"count", a.size()},
                          {"offset", offset}});
        offset += a.size() * sizeof(double);
    });
    json header = {
        {"format", "crutchgait-tcn"},
        {"version", detail::kModelVersion},
        {"tcn", detail::tcn_config_to_json(model.cfg)},
        {"window",
         {{"h", model.window.h},
          {"stride", model.window.stride},
          {"sample_rate_hz", model.window.sample_rate_hz}}},
        {"preprocess",
         {{"cutoff_hz", model.preprocess.cutoff_hz},
          {"filter_order", model.preprocess.filter_order},
          {"euler_convention", model.preprocess.euler_convention}}},
        {"norm",
         {{"mean", std::vector<double>(model.norm.mean.begin(), model.norm.mean.end())},
          {"std", std::vector<double>(model.norm.std.begin(), model.norm.std.end())}}},
        {"meta",
         {{"seed", model.meta.seed},
          {"epochs_run", model.meta.epochs_run},
          {"val_loss", model.meta.val_loss},
          {"param_count", param_count(model.cfg)}}},
        {"arrays", arrays},
    };
    const std::string htxt = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(detail::kModelMagic, 8);
    const std::uint64_t hlen = htxt.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
    visit_arrays(model.weights, [&](const std::string&, const std::vector<double>& a) {
        f.write(reinterpret_cast<const char*>(a.data()),
                static_cast<std::streamsize>(a.size() * sizeof(double)));
    });
    if (!f) throw IoError("write failed: " + path.string());
}

inline TcnModel load_model(const std::filesystem::path& path) {
    using nlohmann::json;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, detail::kModelMagic, 8) != 0)
        throw CorruptFile(path.string() + ": not a model file");
    std::uint64_t hlen = 0;
    if (!f.read(reinterpret_cast<char*>(&hlen), 8) || hlen > (1u << 24))
        throw CorruptFile(path.string() + ": bad header length");
    std::string htxt(hlen, '\0');
    if (!f.read(htxt.data(), static_cast<std::streamsize>(hlen)))
        throw CorruptFile(path.string() + ": truncated header");
    json header;
    try {
        header = json::parse(htxt);
    } catch (const json::exception& e) {
        throw CorruptFile(path.string() + ": header parse error: " + e.what());
    }
    TcnModel m;
    try {
        const int version = header.at("version").get<int>();
        if (version != detail::kModelVersion)
            throw VersionMismatch(path.string() + ": model format version " +
                                  std::to_string(version) + ", expected " +
                                  std::to_string(detail::kModelVersion));
        m.cfg = detail::tcn_config_from_json(header.at("tcn"));
        const auto& jw = header.at("window");
        m.window.h = jw.at("h").get<int>();
        m.window.stride = jw.at("stride").get<int>();
        m.window.sample_rate_hz = jw.at("sample_rate_hz").get<double>();
        const auto& jp = header.at("preprocess");
        m.preprocess.cutoff_hz = jp.at("cutoff_hz").get<double>();
        m.preprocess.filter_order = jp.at("filter_order").get<int>();
        m.preprocess.euler_convention = jp.at("euler_convention").get<std::string>();
        const auto mean = header.at("norm").at("mean").get<std::vector<double>>();
        const auto std_ = header.at("norm").at("std").get<std::vector<double>>();
        if (mean.size() != kNumChannels || std_.size() != kNumChannels)
            throw CorruptFile(path.string() + ": bad norm stats size");
        std::copy(mean.begin(), mean.end(), m.norm.mean.begin());
        std::copy(std_.begin(), std_.end(), m.norm.std.begin());
        const auto& jm = header.at("meta");
        m.meta.seed = jm.at("seed").get<std::uint64_t>();
        m.meta.epochs_run = jm.at("epochs_run").get<int>();
        m.meta.val_loss = jm.at("val_loss").get<double>();
    } catch (const json::exception& e) {
        throw CorruptFile(path.string() + ": header field error: " + e.what());
    }
    m.weights = zero_weights(m.cfg);
    const auto& arrays = header.at("arrays");
    std::size_t idx = 0;
    visit_arrays(m.weights, [&](const std::string& name, std::vector<double>& a) {
        if (idx >= arrays.size())
            throw CorruptFile(path.string() + ": missing array " + name);
        const auto& e = arrays[idx++];
        if (e.at("name").get<std::string>() != name ||
            e.at("count").get<std::size_t>() != a.size())
            throw CorruptFile(path.string() + ": array directory mismatch at " + name);
        if (!f.read(reinterpret_cast<char*>(a.data()),
                    static_cast<std::streamsize>(a.size() * sizeof(double))))
            throw CorruptFile(path.string() + ": truncated payload at " + name);
    });
    if (idx != arrays.size())
        throw CorruptFile(path.string() + ": unexpected extra arrays");
    char extra;
    if (f.read(&extra, 1)) throw CorruptFile(path.string() + ": trailing bytes");
    m.validate();
    return m;
}

/// One per-frame classifier output.
struct FramePrediction {
    std::int64_t t_us = 0;
    bool warmup = false;
    std::array<double, kNumPhases> probs{};
    GaitPhase phase = GaitPhase::Stance;
};

struct StageTimes {
    double pre_ms = 0.0;
    double fwd_ms = 0.0;
};

/// Causal frame-by-frame inference: preprocess, ring-buffer the window,
/// classify once h frames are buffered. Offline prediction and the online
/// runner both sit on this class, which is what makes their outputs match.
class StreamingPredictor {
public:
    explicit StreamingPredictor(const TcnModel& model)
        : model_(model),
          filt_(make_gyro_filter(model.preprocess, model.window.sample_rate_hz)),
          ring_(static_cast<std::size_t>(model.window.h)),
          win_(static_cast<std::size_t>(model.window.h) * kNumChannels) {
        model.validate();
    }

    FramePrediction push(const RawImuSample& raw, StageTimes* stages = nullptr) {
        using clock = std::chrono::steady_clock;
        const auto t0 = stages ? clock::now() : clock::time_point{};
        const MeasurementVector v = assemble_measurement(raw, filt_);
        const int h = model_.window.h;
        ring_[static_cast<std::size_t>(count_ % h)] = v;
        ++count_;
        const auto t1 = stages ? clock::now() : clock::time_point{};
        FramePrediction out;
        out.t_us = raw.t_us;
        if (count_ < h) {
            out.warmup = true;
            out.probs.fill(1.0 / kNumPhases);
            out.phase = GaitPhase::Stance;
        } else {
            for (int r = 0; r < h; ++r) {
                const MeasurementVector& row =
                    ring_[static_cast<std::size_t>((count_ - h + r) % h)];
                for (int c = 0; c < kNumChannels; ++c)
                    win_[static_cast<std::size_t>(r) * kNumChannels + c] =
                        (row[static_cast<std::size_t>(c)] - model_.norm.mean[static_cast<std::size_t>(c)]) /
                        model_.norm.std[static_cast<std::size_t>(c)];
            }
            const std::vector<double> p =
                tcn_infer(model_.cfg, model_.weights, win_.data(), h, ws_);
            int best = 0;
            for (int k = 1; k < model_.cfg.num_classes; ++k)
                if (p[static_cast<std::size_t>(k)] > p[static_cast<std::size_t>(best)]) best = k;
            std::copy(p.begin(), p.end(), out.probs.begin());
            out.phase = phase_from_index(best);
        }
        if (stages) {
            const auto t2 = clock::now();
            stages->pre_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            stages->fwd_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        }
        return out;
    }

    std::int64_t frames_seen() const { return count_; }

private:
    const TcnModel& model_;
    LowPassState filt_;
    std::vector<MeasurementVector> ring_;
    std::vector<double> win_;
    TcnWorkspace<double> ws_;
    std::int64_t count_ = 0;
};

/// Dense per-frame predictions over a whole recording (stride 1 at
/// inference). Frames before the first full window are flagged warm-up and
/// carry Stance by convention.
inline std::vector<FramePrediction> predict_session(const TcnModel& model,
                                                    const SessionRecording& s) {
    if (static_cast<int>(s.size()) < model.window.h)
        throw SessionTooShort("session has " + std::to_string(s.size()) +
                              " frames, window needs " +
                              std::to_string(model.window.h));
    StreamingPredictor pred(model);
    std::vector<FramePrediction> out;
    out.reserve(s.size());
    for (const RawImuSample& r : s.samples) out.push_back(pred.push(r));
    return out;
}

inline constexpr std::string_view kPredictionCsvHeader =
    "t_us,warmup,p_stance,p_takeoff,p_swing,p_strike,p_auxiliary,predicted,refined";

inline void write_prediction_row(std::ostream& os, const FramePrediction& p,
                                 GaitPhase refined) {
    os << p.t_us << ',' << (p.warmup ? 1 : 0);
    for (double v : p.probs) os << ',' << fmt_double(v);
    os << ',' << phase_code(p.phase) << ',' << phase_code(refined) << '\n';
}

} // namespace gait
