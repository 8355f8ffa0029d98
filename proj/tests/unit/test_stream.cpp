#include <catch2/catch_amalgamated.hpp>

#include <future>
#include <sstream>

#include "gait/stream.hpp"
#include "gait/synth.hpp"

using namespace gait;

namespace {

std::uint16_t pick_port(std::uint16_t base) {
    // spread test ports to dodge TIME_WAIT collisions across runs
    return static_cast<std::uint16_t>(base + (::getpid() % 500));
}

TcnModel tiny_model() {
    TcnConfig cfg;
    cfg.channels = 8;
    cfg.dense_units = 8;
    TcnModel m;
    m.cfg = cfg;
    m.weights = init_weights(cfg, 77);
    m.norm.mean.fill(0.0);
    m.norm.std.fill(1.0);
    return m;
}

} // namespace

TEST_CASE("wireframe round-trip", "[stream]") {
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        RawImuSample r;
        r.t_us = static_cast<std::int64_t>(rng.below(1u << 30));
        for (int k = 0; k < 3; ++k) {
            r.a_body[k] = rng.normal(0, 10);
            r.omega_body[k] = rng.normal(0, 3);
        }
        r.orientation = quat_normalize({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        const std::string line = render_wireframe(r);
        CHECK(line.back() == '\n');
        CHECK(std::count(line.begin(), line.end(), ' ') == 10);
        const RawImuSample back = parse_wireframe(
            std::string_view(line).substr(0, line.size() - 1));
        CHECK(back.t_us == r.t_us);
        CHECK(back.a_body == r.a_body);
        CHECK(back.omega_body == r.omega_body);
        CHECK(back.orientation == r.orientation);
        CHECK_FALSE(back.mag.has_value());
    }
    CHECK_THROWS_AS(parse_wireframe("1 2 3"), CorruptFile);
    CHECK_THROWS_AS(parse_wireframe(""), CorruptFile);
}

TEST_CASE("address parsing", "[stream]") {
    const Address a = parse_address("127.0.0.1:9000");
    CHECK(a.host == "127.0.0.1");
    CHECK(a.port == 9000);
    CHECK_THROWS_AS(parse_address("nohost"), ConfigError);
    CHECK_THROWS_AS(parse_address("host:99999"), ConfigError);
}

TEST_CASE("replay then online run reproduces offline decoding", "[stream]") {
    const TcnModel model = tiny_model();
    const SubjectProfile prof = make_profile(9, GaitStrategy::TwoPoint);
    SynthConfig scfg;
    scfg.n_steps = 4;
    scfg.laps = 1;
    const SessionRecording session = generate_session(prof, scfg, 55);
    const FsmConfig fsm_cfg;

    // offline pipeline
    const auto preds = predict_session(model, session);
    std::vector<GaitPhase> raw;
    std::vector<std::int64_t> ts;
    for (const auto& p : preds) {
        raw.push_back(p.phase);
        ts.push_back(p.t_us);
    }
    const DecodeResult offline = decode_sequence(raw, ts, fsm_cfg);
    std::ostringstream offline_steps;
    offline_steps << kStepLogHeader << '\n';
    for (const auto& e : offline.events) write_step_log_row(offline_steps, e.interval);
    std::ostringstream offline_frames;
    offline_frames << kPredictionCsvHeader << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i)
        write_prediction_row(offline_frames, preds[i], offline.refined[i]);

    // online pipeline over a real socket, rate 0 = as fast as possible
    const Address addr{"127.0.0.1", pick_port(42000)};
    std::promise<void> listening;
    auto server = std::async(std::launch::async, [&] {
        return serve_replay(session, addr, 0.0, [&] { listening.set_value(); });
    });
    listening.get_future().wait();
    std::ostringstream frames, steps, latency;
    OnlineSinks sinks{&frames, &steps, &latency};
    const OnlineSummary sum = run_online(model, fsm_cfg, addr, sinks);
    CHECK(server.get() == session.size());

    CHECK(sum.frames == session.size());
    CHECK(sum.malformed == 0);
    CHECK(steps.str() == offline_steps.str());
    CHECK(frames.str() == offline_frames.str());
    // one latency row per processed frame
    const std::string lat = latency.str();
    CHECK(static_cast<std::size_t>(std::count(lat.begin(), lat.end(), '\n')) ==
          session.size() + 1);
}

TEST_CASE("replay pacing approximates the recorded rate", "[stream]") {
    const SubjectProfile prof = make_profile(10, GaitStrategy::TwoPoint);
    SynthConfig scfg;
    scfg.n_steps = 1;
    scfg.laps = 1;
    SessionRecording session = generate_session(prof, scfg, 77);
    session.samples.resize(100);
    session.labels.resize(100);

    const Address addr{"127.0.0.1", pick_port(43000)};
    std::promise<void> listening;
    auto server = std::async(std::launch::async, [&] {
        return serve_replay(session, addr, 1.0, [&] { listening.set_value(); });
    });
    listening.get_future().wait();

    const auto t0 = std::chrono::steady_clock::now();
    net::Socket conn = net::connect_to(addr, 20, 50);
    std::string all;
    char buf[4096];
    while (true) {
        const ssize_t n = ::recv(conn.fd(), buf, sizeof(buf), 0);
        if (n <= 0) break;
        all.append(buf, static_cast<std::size_t>(n));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    server.get();
    CHECK(static_cast<std::size_t>(std::count(all.begin(), all.end(), '\n')) == 100);
    // 99 gaps of 10 ms; allow generous slack for scheduling
    CHECK(secs > 0.9);
    CHECK(secs < 1.35);
}

TEST_CASE("malformed frames are skipped and counted", "[stream]") {
    const TcnModel model = tiny_model();
    const Address addr{"127.0.0.1", pick_port(44000)};
    const SubjectProfile prof = make_profile(11, GaitStrategy::TwoPoint);
    SynthConfig scfg;
    scfg.n_steps = 2;
    scfg.laps = 1;
    const SessionRecording session = generate_session(prof, scfg, 88);

    std::promise<void> listening;
    auto server = std::async(std::launch::async, [&] {
        net::Socket srv = net::listen_on(addr);
        listening.set_value();
        net::Socket client(::accept(srv.fd(), nullptr, nullptr));
        REQUIRE(client.valid());
        std::size_t i = 0;
        for (const RawImuSample& r : session.samples) {
            if (i == 5 || i == 17) {
                const std::string junk = "not a frame at all\n";
                client.send_all(junk.data(), junk.size());
            }
            const std::string line = render_wireframe(r);
            client.send_all(line.data(), line.size());
            ++i;
        }
    });
    listening.get_future().wait();
    std::ostringstream steps;
    OnlineSinks sinks{nullptr, &steps, nullptr};
    const OnlineSummary sum = run_online(model, FsmConfig{}, addr, sinks);
    server.get();
    CHECK(sum.frames == session.size());
    CHECK(sum.malformed == 2);
}

TEST_CASE("empty stream exits cleanly", "[stream]") {
    const TcnModel model = tiny_model();
    const Address addr{"127.0.0.1", pick_port(45000)};
    std::promise<void> listening;
    auto server = std::async(std::launch::async, [&] {
        net::Socket srv = net::listen_on(addr);
        listening.set_value();
        net::Socket client(::accept(srv.fd(), nullptr, nullptr));
        // close immediately: no frames
    });
    listening.get_future().wait();
    const OnlineSummary sum = run_online(model, FsmConfig{}, addr, OnlineSinks{});
    server.get();
    CHECK(sum.frames == 0);
    CHECK(sum.events == 0);
    CHECK(sum.malformed == 0);
}
