// gaitctl: one binary for the whole workflow -- synthesize datasets, train
// the classifier, run inference and evaluation, benchmark latency, and
// replay/consume sessions over TCP.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "gait/config.hpp"
#include "gait/csvio.hpp"
#include "gait/eval.hpp"
#include "gait/stream.hpp"
#include "gait/synth.hpp"
#include "gait/train.hpp"

namespace fs = std::filesystem;
using namespace gait;

namespace {

/// Removes declared outputs if the command aborts partway.
class OutputGuard {
public:
    void track(const fs::path& p) {
        if (!fs::exists(p)) paths_.push_back(p);
    }
    void disarm() { armed_ = false; }
    ~OutputGuard() {
        if (!armed_) return;
        for (const fs::path& p : paths_) {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    }

private:
    std::vector<fs::path> paths_;
    bool armed_ = true;
};

struct ConfigCli {
    std::string config_file;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "configuration file (key = value lines)");
        cmd->add_option("--set", sets, "override a config key, e.g. --set fsm.alpha=0.7")
            ->take_all();
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_file.empty()) load_config_file(cfg, config_file);
        for (const std::string& s : sets) apply_config_override(cfg, s);
        cfg.validate();
        return cfg;
    }
};

void echo_config(const RunConfig& cfg, const fs::path& where) {
    std::ofstream f(where, std::ios::binary);
    if (!f) throw IoError("cannot write " + where.string());
    write_config_echo(f, cfg);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (std::string_view part : split_fields(s, ','))
        if (!part.empty()) out.emplace_back(part);
    return out;
}

int sweep_threads() {
    const char* env = std::getenv("GAITCTL_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

std::vector<SessionRecording> load_filtered(const fs::path& dir,
                                            const std::vector<std::string>& subjects) {
    std::vector<SessionRecording> all = load_dataset(dir);
    if (subjects.empty()) return all;
    const std::set<std::string> keep(subjects.begin(), subjects.end());
    std::vector<SessionRecording> out;
    for (auto& s : all)
        if (keep.count(s.meta.subject)) out.push_back(std::move(s));
    if (out.empty()) throw InsufficientData("no sessions match the subject filter");
    return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const ConfigCli& ccli, int subjects, std::uint64_t seed,
              const std::string& out) {
    const RunConfig cfg = ccli.resolve();
    OutputGuard guard;
    guard.track(out);
    generate_dataset(subjects, cfg.synth, out, seed);
    echo_config(cfg, fs::path(out) / "config.echo");
    guard.disarm();
    std::cout << "wrote dataset with " << subjects << " subjects to " << out << "\n";
    return 0;
}

int cmd_train(const ConfigCli& ccli, const std::string& data, const std::string& out,
              std::int64_t seed_flag, const std::string& subjects) {
    RunConfig cfg = ccli.resolve();
    if (seed_flag >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
    const auto sessions = load_filtered(data, split_list(subjects));
    std::vector<SessionWindows> windows;
    int i = 0;
    for (const SessionRecording& s : sessions)
        windows.push_back(session_windows(s, cfg.window, cfg.preprocess,
                                          s.meta.subject + "#" + std::to_string(i++)));
    OutputGuard guard;
    guard.track(out);
    const fs::path hist = fs::path(out).string() + ".history.csv";
    const fs::path echo = fs::path(out).string() + ".config.echo";
    guard.track(hist);
    guard.track(echo);
    const TrainResult r = train_tcn(windows, cfg.tcn, cfg.train, cfg.window, cfg.preprocess);
    save_model(r.model, out);
    std::ofstream hf(hist, std::ios::binary);
    write_history_csv(hf, r.history);
    echo_config(cfg, echo);
    guard.disarm();
    std::cout << "trained " << r.model.meta.epochs_run << " epochs, best val loss "
              << fmt_double(r.model.meta.val_loss) << ", model at " << out << "\n";
    return 0;
}

int cmd_infer(const ConfigCli& ccli, const std::string& model_path,
              const std::string& session_path, const std::string& out, bool no_fsm) {
    const RunConfig cfg = ccli.resolve();
    const TcnModel model = load_model(model_path);
    const SessionRecording session = load_session_csv(session_path);
    const auto preds = predict_session(model, session);

    std::vector<GaitPhase> raw;
    std::vector<std::int64_t> ts;
    for (const auto& p : preds) {
        raw.push_back(p.phase);
        ts.push_back(p.t_us);
    }
    OutputGuard guard;
    guard.track(out);
    const fs::path steps_path = fs::path(out).string() + ".steps.csv";
    const fs::path echo = fs::path(out).string() + ".config.echo";
    if (!no_fsm) guard.track(steps_path);
    guard.track(echo);

    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot write " + out);
    f << kPredictionCsvHeader << '\n';
    if (no_fsm) {
        for (const auto& p : preds) write_prediction_row(f, p, p.phase);
    } else {
        const DecodeResult dec = decode_sequence(raw, ts, cfg.fsm);
        for (std::size_t i = 0; i < preds.size(); ++i)
            write_prediction_row(f, preds[i], dec.refined[i]);
        save_step_log(steps_path, event_intervals(dec.events));
        std::cout << dec.events.size() << " step(s) -> " << steps_path.string() << "\n";
    }
    echo_config(cfg, echo);
    guard.disarm();
    std::cout << preds.size() << " frame predictions -> " << out << "\n";
    return 0;
}

int cmd_eval(const ConfigCli& ccli, const std::string& model_path,
             const std::string& data, const std::string& report,
             const std::string& subjects) {
    const RunConfig cfg = ccli.resolve();
    const TcnModel model = load_model(model_path);
    const auto sessions = load_filtered(data, split_list(subjects));
    EvalAccumulator with_fsm, without_fsm;
    for (const SessionRecording& s : sessions)
        evaluate_session_into(model, cfg.fsm, s, with_fsm, without_fsm);
    const EvalReport rw = with_fsm.finalize();
    const EvalReport ro = without_fsm.finalize();

    OutputGuard guard;
    guard.track(report);
    fs::create_directories(report);
    nlohmann::json j = {
        {"version", 1},
        {"sessions", sessions.size()},
        {"with_fsm", report_to_json(rw)},
        {"without_fsm", report_to_json(ro)},
        {"notes",
         "step success is reported as recall at IoU>=0.5 with precision "
         "alongside; the without_fsm step decode runs at debounce 1"},
    };
    {
        std::ofstream f(fs::path(report) / "report.json", std::ios::binary);
        f << j.dump(2) << '\n';
    }
    {
        std::ofstream f(fs::path(report) / "report.txt", std::ios::binary);
        write_report_text(f, "with decoder", rw);
        write_report_text(f, "without decoder (raw argmax)", ro);
    }
    {
        std::ofstream f(fs::path(report) / "confusion_with_fsm.csv", std::ios::binary);
        write_confusion_csv(f, rw);
    }
    {
        std::ofstream f(fs::path(report) / "confusion_without_fsm.csv", std::ios::binary);
        write_confusion_csv(f, ro);
    }
    echo_config(cfg, fs::path(report) / "config.echo");
    guard.disarm();
    write_report_text(std::cout, "with decoder", rw);
    write_report_text(std::cout, "without decoder (raw argmax)", ro);
    return 0;
}

int cmd_sweep(const ConfigCli& ccli, const std::string& data, int k_max, int repeats,
              const std::string& report, const std::string& test_subjects,
              std::uint64_t seed) {
    const RunConfig cfg = ccli.resolve();
    const auto all = load_dataset(data);
    std::vector<std::string> subject_ids;
    for (const auto& s : all)
        if (subject_ids.empty() || subject_ids.back() != s.meta.subject)
            subject_ids.push_back(s.meta.subject);
    std::sort(subject_ids.begin(), subject_ids.end());
    subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()),
                      subject_ids.end());

    std::vector<std::string> test_ids = split_list(test_subjects);
    if (test_ids.empty()) {
        if (subject_ids.size() < 3)
            throw InsufficientData("need at least 3 subjects to hold out a test set");
        test_ids.assign(subject_ids.end() - 2, subject_ids.end());
    }
    const std::set<std::string> test_set(test_ids.begin(), test_ids.end());

    SweepInputs in;
    in.arch = cfg.tcn;
    in.train = cfg.train;
    in.window = cfg.window;
    in.preprocess = cfg.preprocess;
    in.fsm = cfg.fsm;
    in.seed = seed;
    in.threads = sweep_threads();
    for (const std::string& id : subject_ids) {
        if (test_set.count(id)) continue;
        std::vector<SessionRecording> subj;
        for (const auto& s : all)
            if (s.meta.subject == id) subj.push_back(s);
        in.train_pool.push_back(std::move(subj));
    }
    for (const auto& s : all)
        if (test_set.count(s.meta.subject)) in.test_sessions.push_back(s);

    const auto rows = subject_sweep(in, k_max, repeats);
    OutputGuard guard;
    guard.track(report);
    fs::create_directories(report);
    {
        std::ofstream f(fs::path(report) / "sweep.csv", std::ios::binary);
        write_sweep_csv(f, rows);
    }
    echo_config(cfg, fs::path(report) / "config.echo");
    guard.disarm();
    write_sweep_csv(std::cout, rows);
    return 0;
}

int cmd_bench(const ConfigCli& ccli, const std::string& model_path, int iters,
              int warmup, std::uint64_t seed) {
    const RunConfig cfg = ccli.resolve();
    const TcnModel model = load_model(model_path);
    const LatencyReport r = bench_latency(model, cfg.fsm, iters, warmup, seed);
    write_latency_text(std::cout, r);
    return 0;
}

int cmd_replay(const std::string& session_path, const std::string& addr, double rate) {
    const SessionRecording session = load_session_csv(session_path);
    const std::size_t sent = serve_replay(session, parse_address(addr), rate);
    std::cout << "served " << sent << " frames\n";
    return 0;
}

int cmd_run(const ConfigCli& ccli, const std::string& model_path,
            const std::string& addr, const std::string& out, int retries) {
    const RunConfig cfg = ccli.resolve();
    const TcnModel model = load_model(model_path);
    OutputGuard guard;
    guard.track(out);
    fs::create_directories(out);
    std::ofstream frames(fs::path(out) / "frames.csv", std::ios::binary);
    std::ofstream steps(fs::path(out) / "steps.csv", std::ios::binary);
    std::ofstream latency(fs::path(out) / "latency.csv", std::ios::binary);
    OnlineSinks sinks{&frames, &steps, &latency};
    OnlineOptions opts;
    opts.connect_retries = retries;
    const OnlineSummary sum = run_online(model, cfg.fsm, parse_address(addr), sinks, opts);
    {
        std::ofstream f(fs::path(out) / "summary.txt", std::ios::binary);
        f << "frames " << sum.frames << "\nmalformed " << sum.malformed << "\nevents "
          << sum.events << "\nmax_queue_depth " << sum.max_queue_depth
          << "\nlatency_mean_ms " << fmt_double(sum.latency_mean_ms)
          << "\nlatency_max_ms " << fmt_double(sum.latency_max_ms) << "\n";
    }
    echo_config(cfg, fs::path(out) / "config.echo");
    guard.disarm();
    std::cout << "processed " << sum.frames << " frames, " << sum.events
              << " step event(s), mean latency " << fmt_double(sum.latency_mean_ms)
              << " ms\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"crutch-mounted IMU gait phase and step detection toolkit"};
    app.require_subcommand(1);

    ConfigCli ccli;

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    int synth_subjects = 4;
    std::uint64_t synth_seed = 1;
    std::string synth_out;
    synth->add_option("--subjects", synth_subjects, "number of synthetic subjects")
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    ccli.attach(synth);

    auto* train = app.add_subcommand("train", "train the classifier on a dataset");
    std::string train_data, train_out, train_subjects;
    std::int64_t train_seed = -1;
    train->add_option("--data", train_data, "dataset directory (with manifest.csv)")
        ->required();
    train->add_option("--out", train_out, "output model file")->required();
    train->add_option("--seed", train_seed, "training seed (overrides train.seed)");
    train->add_option("--subjects", train_subjects, "comma-separated subject filter");
    ccli.attach(train);

    auto* infer = app.add_subcommand("infer", "per-frame predictions for one session");
    std::string infer_model, infer_session, infer_out;
    bool infer_no_fsm = false;
    infer->add_option("--model", infer_model, "model file")->required();
    infer->add_option("--session", infer_session, "session csv")->required();
    infer->add_option("--out", infer_out, "output prediction csv")->required();
    infer->add_flag("--no-fsm", infer_no_fsm, "skip decoding; refined column = argmax");
    ccli.attach(infer);

    auto* eval = app.add_subcommand("eval", "evaluate a model over a labeled dataset");
    std::string eval_model, eval_data, eval_report, eval_subjects;
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--report", eval_report, "output report directory")->required();
    eval->add_option("--subjects", eval_subjects, "comma-separated subject filter");
    ccli.attach(eval);

    auto* sweep = app.add_subcommand("sweep", "training-set-size sweep");
    std::string sweep_data, sweep_report, sweep_test;
    int sweep_kmax = 4, sweep_repeats = 4;
    std::uint64_t sweep_seed = 1;
    sweep->add_option("--data", sweep_data, "dataset directory")->required();
    sweep->add_option("--k-max", sweep_kmax, "largest training subject count");
    sweep->add_option("--repeats", sweep_repeats, "subject combinations per k");
    sweep->add_option("--report", sweep_report, "output report directory")->required();
    sweep->add_option("--test-subjects", sweep_test,
                      "held-out subjects (default: last two)");
    sweep->add_option("--seed", sweep_seed, "sweep master seed");
    ccli.attach(sweep);

    auto* bench = app.add_subcommand("bench", "single-thread per-frame latency");
    std::string bench_model;
    int bench_iters = 1000, bench_warmup = 100;
    std::uint64_t bench_seed = 42;
    bench->add_option("--model", bench_model, "model file")->required();
    bench->add_option("--iters", bench_iters, "measured frames");
    bench->add_option("--warmup", bench_warmup, "warm-up frames");
    bench->add_option("--seed", bench_seed, "input generation seed");
    ccli.attach(bench);

    auto* replay = app.add_subcommand("replay", "serve a session over TCP");
    std::string replay_session, replay_addr = "127.0.0.1:7600";
    double replay_rate = 1.0;
    replay->add_option("--session", replay_session, "session csv")->required();
    replay->add_option("--addr", replay_addr, "host:port to listen on");
    replay->add_option("--rate", replay_rate,
                       "rate multiplier (0 = as fast as possible)");

    auto* run = app.add_subcommand("run", "consume a TCP stream and decode online");
    std::string run_model, run_addr = "127.0.0.1:7600", run_out;
    int run_retries = 50;
    run->add_option("--model", run_model, "model file")->required();
    run->add_option("--addr", run_addr, "host:port to connect to");
    run->add_option("--out", run_out, "output directory")->required();
    run->add_option("--connect-retries", run_retries, "connection attempts");
    ccli.attach(run);

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(ccli, synth_subjects, synth_seed, synth_out);
        if (train->parsed())
            return cmd_train(ccli, train_data, train_out, train_seed, train_subjects);
        if (infer->parsed())
            return cmd_infer(ccli, infer_model, infer_session, infer_out, infer_no_fsm);
        if (eval->parsed())
            return cmd_eval(ccli, eval_model, eval_data, eval_report, eval_subjects);
        if (sweep->parsed())
            return cmd_sweep(ccli, sweep_data, sweep_kmax, sweep_repeats, sweep_report,
                             sweep_test, sweep_seed);
        if (bench->parsed())
            return cmd_bench(ccli, bench_model, bench_iters, bench_warmup, bench_seed);
        if (replay->parsed()) return cmd_replay(replay_session, replay_addr, replay_rate);
        if (run->parsed()) return cmd_run(ccli, run_model, run_addr, run_out, run_retries);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
