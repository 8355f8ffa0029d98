#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gait/csvio.hpp"
#include "gait/eval.hpp"
#include "gait/stream.hpp"

namespace gait {

/// Every module configuration, addressable by dotted key from a config
/// file (`key = value` lines, `#` comments) and `--set key=value`
/// overrides. Unknown keys are rejected.
struct RunConfig {
    WindowConfig window;
    PreprocessConfig preprocess;
    TcnConfig tcn;
    TrainConfig train;
    FsmConfig fsm;
    SynthConfig synth;

    void validate() const {
        window.validate();
        preprocess.validate();
        tcn.validate();
        train.validate();
        fsm.validate();
        synth.validate();
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

inline int cfg_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
}

inline double cfg_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

inline bool cfg_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::uint64_t cfg_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

inline std::vector<int> cfg_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (std::string_view part : split_fields(v, ',')) {
        const std::string p = trim(std::string(part));
        if (p.empty()) throw ConfigError("key '" + key + "': empty list element");
        out.push_back(cfg_int(key, p));
    }
    return out;
}

} // namespace detail

/// Apply one `key = value` assignment; throws ConfigError on unknown keys.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
    using namespace detail;
    if (key == "window.h") cfg.window.h = cfg_int(key, value);
    else if (key == "window.stride") cfg.window.stride = cfg_int(key, value);
    else if (key == "window.sample_rate_hz") cfg.window.sample_rate_hz = cfg_double(key, value);
    else if (key == "preprocess.cutoff_hz") cfg.preprocess.cutoff_hz = cfg_double(key, value);
    else if (key == "preprocess.filter_order") cfg.preprocess.filter_order = cfg_int(key, value);
    else if (key == "preprocess.euler_convention") cfg.preprocess.euler_convention = value;
    else if (key == "tcn.input_channels") cfg.tcn.input_channels = cfg_int(key, value);
    else if (key == "tcn.num_blocks") cfg.tcn.num_blocks = cfg_int(key, value);
    else if (key == "tcn.channels") cfg.tcn.channels = cfg_int(key, value);
    else if (key == "tcn.kernel_size") cfg.tcn.kernel_size = cfg_int(key, value);
    else if (key == "tcn.dilations") cfg.tcn.dilations = cfg_int_list(key, value);
    else if (key == "tcn.spatial_dropout") cfg.tcn.spatial_dropout = cfg_double(key, value);
    else if (key == "tcn.dense_units") cfg.tcn.dense_units = cfg_int(key, value);
    else if (key == "tcn.num_classes") cfg.tcn.num_classes = cfg_int(key, value);
    else if (key == "train.learning_rate") cfg.train.learning_rate = cfg_double(key, value);
    else if (key == "train.beta1") cfg.train.beta1 = cfg_double(key, value);
    else if (key == "train.beta2") cfg.train.beta2 = cfg_double(key, value);
    else if (key == "train.epsilon") cfg.train.epsilon = cfg_double(key, value);
    else if (key == "train.batch_size") cfg.train.batch_size = cfg_int(key, value);
    else if (key == "train.max_epochs") cfg.train.max_epochs = cfg_int(key, value);
    else if (key == "train.patience") cfg.train.patience = cfg_int(key, value);
    else if (key == "train.val_fraction") cfg.train.val_fraction = cfg_double(key, value);
    else if (key == "train.seed") cfg.train.seed = cfg_u64(key, value);
    else if (key == "fsm.alpha") cfg.fsm.alpha = cfg_double(key, value);
    else if (key == "fsm.debounce_k") cfg.fsm.debounce_k = cfg_int(key, value);
    else if (key == "fsm.aux_reset_frames") cfg.fsm.aux_reset_frames = cfg_int(key, value);
    else if (key == "fsm.attempt_timeout_frames") cfg.fsm.attempt_timeout_frames = cfg_int(key, value);
    else if (key == "synth.n_steps") cfg.synth.n_steps = cfg_int(key, value);
    else if (key == "synth.laps") cfg.synth.laps = cfg_int(key, value);
    else if (key == "synth.sessions_per_subject") cfg.synth.sessions_per_subject = cfg_int(key, value);
    else if (key == "synth.sample_rate_hz") cfg.synth.sample_rate_hz = cfg_double(key, value);
    else if (key == "synth.aux_probability") cfg.synth.aux_probability = cfg_double(key, value);
    else if (key == "synth.aux_min_ms") cfg.synth.aux_min_ms = cfg_double(key, value);
    else if (key == "synth.aux_max_ms") cfg.synth.aux_max_ms = cfg_double(key, value);
    else if (key == "synth.balance") cfg.synth.balance = cfg_bool(key, value);
    else if (key == "synth.turns") cfg.synth.turns = cfg_bool(key, value);
    else if (key == "synth.noise_scale") cfg.synth.noise_scale = cfg_double(key, value);
    else if (key == "synth.glitch_rate") cfg.synth.glitch_rate = cfg_double(key, value);
    else if (key == "synth.glitch_amp") cfg.synth.glitch_amp = cfg_double(key, value);
    else if (key == "synth.swing_axis") {
        if (value.size() != 1) throw ConfigError("synth.swing_axis must be x or y");
        cfg.synth.swing_axis = value[0];
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
}

inline void apply_config_override(RunConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    apply_config_entry(cfg, detail::trim(assignment.substr(0, eq)),
                       detail::trim(assignment.substr(eq + 1)));
}

/// The effective configuration, one sorted `key = value` per line. This is
/// what gets echoed next to every output for reproducibility.
inline void write_config_echo(std::ostream& os, const RunConfig& c) {
    std::map<std::string, std::string> kv;
    kv["window.h"] = std::to_string(c.window.h);
    kv["window.stride"] = std::to_string(c.window.stride);
    kv["window.sample_rate_hz"] = fmt_double(c.window.sample_rate_hz);
    kv["preprocess.cutoff_hz"] = fmt_double(c.preprocess.cutoff_hz);
    kv["preprocess.filter_order"] = std::to_string(c.preprocess.filter_order);
    kv["preprocess.euler_convention"] = c.preprocess.euler_convention;
    kv["tcn.input_channels"] = std::to_string(c.tcn.input_channels);
    kv["tcn.num_blocks"] = std::to_string(c.tcn.num_blocks);
    kv["tcn.channels"] = std::to_string(c.tcn.channels);
    kv["tcn.kernel_size"] = std::to_string(c.tcn.kernel_size);
    {
        std::string d;
        for (std::size_t i = 0; i < c.tcn.dilations.size(); ++i) {
            if (i) d += ',';
            d += std::to_string(c.tcn.dilations[i]);
        }
        kv["tcn.dilations"] = d;
    }
    kv["tcn.spatial_dropout"] = fmt_double(c.tcn.spatial_dropout);
    kv["tcn.dense_units"] = std::to_string(c.tcn.dense_units);
    kv["tcn.num_classes"] = std::to_string(c.tcn.num_classes);
    kv["train.learning_rate"] = fmt_double(c.train.learning_rate);
    kv["train.beta1"] = fmt_double(c.train.beta1);
    kv["train.beta2"] = fmt_double(c.train.beta2);
    kv["train.epsilon"] = fmt_double(c.train.epsilon);
    kv["train.batch_size"] = std::to_string(c.train.batch_size);
    kv["train.max_epochs"] = std::to_string(c.train.max_epochs);
    kv["train.patience"] = std::to_string(c.train.patience);
    kv["train.val_fraction"] = fmt_double(c.train.val_fraction);
    kv["train.seed"] = std::to_string(c.train.seed);
    kv["fsm.alpha"] = fmt_double(c.fsm.alpha);
    kv["fsm.debounce_k"] = std::to_string(c.fsm.debounce_k);
    kv["fsm.aux_reset_frames"] = std::to_string(c.fsm.aux_reset_frames);
    kv["fsm.attempt_timeout_frames"] = std::to_string(c.fsm.attempt_timeout_frames);
    kv["synth.n_steps"] = std::to_string(c.synth.n_steps);
    kv["synth.laps"] = std::to_string(c.synth.laps);
    kv["synth.sessions_per_subject"] = std::to_string(c.synth.sessions_per_subject);
    kv["synth.sample_rate_hz"] = fmt_double(c.synth.sample_rate_hz);
    kv["synth.aux_probability"] = fmt_double(c.synth.aux_probability);
    kv["synth.aux_min_ms"] = fmt_double(c.synth.aux_min_ms);
    kv["synth.aux_max_ms"] = fmt_double(c.synth.aux_max_ms);
    kv["synth.balance"] = c.synth.balance ? "true" : "false";
    kv["synth.turns"] = c.synth.turns ? "true" : "false";
    kv["synth.noise_scale"] = fmt_double(c.synth.noise_scale);
    kv["synth.glitch_rate"] = fmt_double(c.synth.glitch_rate);
    kv["synth.glitch_amp"] = fmt_double(c.synth.glitch_amp);
    kv["synth.swing_axis"] = std::string(1, c.synth.swing_axis);
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

} // namespace gait
