#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "gait/csvio.hpp"
#include "gait/fsm.hpp"
#include "gait/model.hpp"

namespace gait {

/// One sample per line: `t_us ax ay az wx wy wz qw qx qy qz`, floats in
/// round-trip decimal form. Labels and magnetometer fields do not travel:
/// the online pipeline consumes neither.
inline std::string render_wireframe(const RawImuSample& r) {
    std::string out;
    out.reserve(160);
    out += std::to_string(r.t_us);
    for (double v : {r.a_body[0], r.a_body[1], r.a_body[2], r.omega_body[0],
                     r.omega_body[1], r.omega_body[2], r.orientation.w,
                     r.orientation.x, r.orientation.y, r.orientation.z}) {
        out += ' ';
        out += fmt_double(v);
    }
    out += '\n';
    return out;
}

inline RawImuSample parse_wireframe(std::string_view line) {
    auto f = split_fields(line, ' ');
    if (f.size() != 11)
        throw CorruptFile("wire frame has " + std::to_string(f.size()) +
                          " fields, want 11");
    RawImuSample r;
    r.t_us = parse_i64(f[0]);
    for (int k = 0; k < 3; ++k) r.a_body[k] = parse_double(f[1 + k]);
    for (int k = 0; k < 3; ++k) r.omega_body[k] = parse_double(f[4 + k]);
    r.orientation = {parse_double(f[7]), parse_double(f[8]), parse_double(f[9]),
                     parse_double(f[10])};
    return r;
}

struct Address {
    std::string host;
    std::uint16_t port = 0;
};

inline Address parse_address(const std::string& s) {
    const std::size_t pos = s.rfind(':');
    if (pos == std::string::npos || pos + 1 >= s.size())
        throw ConfigError("address must be host:port, got '" + s + "'");
    Address a;
    a.host = s.substr(0, pos);
    const std::int64_t port = parse_i64(std::string_view(s).substr(pos + 1));
    if (port < 1 || port > 65535) throw ConfigError("port out of range in '" + s + "'");
    a.port = static_cast<std::uint16_t>(port);
    return a;
}

namespace net {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close_fd(); }
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close_fd();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close_fd() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    void send_all(const char* data, std::size_t len) const {
        std::size_t sent = 0;
        while (sent < len) {
            const ssize_t n = ::send(fd_, data + sent, len - sent, MSG_NOSIGNAL);
            if (n <= 0) throw IoError("socket send failed");
            sent += static_cast<std::size_t>(n);
        }
    }

private:
    int fd_ = -1;
};

inline sockaddr_in resolve(const Address& addr) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(addr.port);
    if (::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw IoError("cannot resolve " + addr.host);
    sockaddr_in out{};
    std::memcpy(&out, res->ai_addr, sizeof(out));
    ::freeaddrinfo(res);
    return out;
}

inline Socket listen_on(const Address& addr) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw IoError("cannot create socket");
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa = resolve(addr);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
        throw IoError("cannot bind " + addr.host + ":" + std::to_string(addr.port));
    if (::listen(s.fd(), 1) != 0) throw IoError("listen failed");
    return s;
}

inline Socket connect_to(const Address& addr, int retries, int retry_delay_ms) {
    sockaddr_in sa = resolve(addr);
    for (int attempt = 0;; ++attempt) {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (!s.valid()) throw IoError("cannot create socket");
        if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0)
            return s;
        if (attempt >= retries)
            throw IoError("cannot connect to " + addr.host + ":" +
                          std::to_string(addr.port));
        std::this_thread::sleep_for(std::chrono::milliseconds(retry_delay_ms));
    }
}

} // namespace net

/// Serve a session over a stream socket, pacing frames so wall-clock gaps
/// equal the recorded gaps divided by rate_multiplier. rate 0 sends as fast
/// as possible. Accepts a single client and closes when the session ends.
/// `on_listening`, when set, fires after the socket is accepting.
inline std::size_t serve_replay(const SessionRecording& session, const Address& addr,
                                double rate_multiplier = 1.0,
                                std::function<void()> on_listening = {}) {
    if (rate_multiplier < 0) throw ConfigError("rate multiplier must be >= 0");
    net::Socket server = net::listen_on(addr);
    if (on_listening) on_listening();
    net::Socket client(::accept(server.fd(), nullptr, nullptr));
    if (!client.valid()) throw IoError("accept failed");
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    std::size_t sent = 0;
    const std::int64_t t0 = session.samples.empty() ? 0 : session.samples.front().t_us;
    for (const RawImuSample& r : session.samples) {
        if (rate_multiplier > 0) {
            const double rel_us = static_cast<double>(r.t_us - t0) / rate_multiplier;
            std::this_thread::sleep_until(
                start + std::chrono::microseconds(static_cast<std::int64_t>(rel_us)));
        }
        const std::string line = render_wireframe(r);
        client.send_all(line.data(), line.size());
        ++sent;
    }
    return sent;
}

inline constexpr std::string_view kLatencyCsvHeader =
    "t_us,recv_to_done_ms,stage_pre_ms,stage_fwd_ms,stage_fsm_ms,queue_depth";

struct OnlineSinks {
    std::ostream* frames = nullptr;  // per-frame prediction rows
    std::ostream* steps = nullptr;   // step log rows
    std::ostream* latency = nullptr; // per-frame latency rows
};

struct OnlineSummary {
    std::size_t frames = 0;
    std::size_t malformed = 0;
    std::size_t events = 0;
    std::size_t max_queue_depth = 0;
    double latency_mean_ms = 0, latency_max_ms = 0;
};

struct OnlineOptions {
    int connect_retries = 50;
    int retry_delay_ms = 100;
};

/// Consume a replayed stream: per frame preprocess, window, classify, and
/// decode, logging per-frame latency. Reception and processing run as two
/// activities joined by an unbounded ordered queue; nothing is dropped, so
/// the emitted phases and step events match offline decoding of the same
/// recording exactly.
inline OnlineSummary run_online(const TcnModel& model, const FsmConfig& fsm_cfg,
                                const Address& addr, const OnlineSinks& sinks,
                                const OnlineOptions& opts = {}) {
    fsm_cfg.validate();
    model.validate();
    net::Socket conn = net::connect_to(addr, opts.connect_retries, opts.retry_delay_ms);

    using clock = std::chrono::steady_clock;
    struct QueueItem {
        std::string line;
        clock::time_point recv;
    };
    std::mutex mu;
    std::condition_variable cv;
    std::deque<QueueItem> queue;
    bool done = false;

    std::thread reader([&] {
        std::string buf;
        char chunk[4096];
        while (true) {
            const ssize_t n = ::recv(conn.fd(), chunk, sizeof(chunk), 0);
            if (n <= 0) break;
            buf.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = buf.find('\n')) != std::string::npos) {
                QueueItem item{buf.substr(0, pos), clock::now()};
                buf.erase(0, pos + 1);
                {
                    std::lock_guard<std::mutex> lock(mu);
                    queue.push_back(std::move(item));
                }
                cv.notify_one();
            }
        }
        {
            std::lock_guard<std::mutex> lock(mu);
            done = true;
        }
        cv.notify_one();
    });

    StreamingPredictor pred(model);
    FsmState fsm;
    OnlineSummary summary;
    if (sinks.frames) *sinks.frames << kPredictionCsvHeader << '\n';
    if (sinks.steps) *sinks.steps << kStepLogHeader << '\n';
    if (sinks.latency) *sinks.latency << kLatencyCsvHeader << '\n';
    double lat_sum = 0;
    std::int64_t last_t_us = 0;
    bool any = false;

    while (true) {
        QueueItem item;
        std::size_t depth;
        {
            std::unique_lock<std::mutex> lock(mu);
            cv.wait(lock, [&] { return done || !queue.empty(); });
            if (queue.empty() && done) break;
            depth = queue.size();
            item = std::move(queue.front());
            queue.pop_front();
        }
        summary.max_queue_depth = std::max(summary.max_queue_depth, depth);
        RawImuSample sample;
        try {
            sample = parse_wireframe(item.line);
        } catch (const Error&) {
            ++summary.malformed;
            continue;
        }
        StageTimes stages;
        const FramePrediction fp = pred.push(sample, &stages);
        const auto t_fsm0 = clock::now();
        const FsmStepResult step = fsm_step(fsm, fp.phase, fp.t_us, fsm_cfg);
        const auto t_done = clock::now();
        ++summary.frames;
        any = true;
        last_t_us = fp.t_us;
        if (step.event) {
            ++summary.events;
            if (sinks.steps)
                write_step_log_row(*sinks.steps, step.event->interval);
        }
        if (sinks.frames) write_prediction_row(*sinks.frames, fp, step.refined);
        const double fsm_ms =
            std::chrono::duration<double, std::milli>(t_done - t_fsm0).count();
        const double total_ms =
            std::chrono::duration<double, std::milli>(t_done - item.recv).count();
        lat_sum += total_ms;
        summary.latency_max_ms = std::max(summary.latency_max_ms, total_ms);
        if (sinks.latency) {
            *sinks.latency << fp.t_us << ',' << fmt_double(total_ms) << ','
                           << fmt_double(stages.pre_ms) << ',' << fmt_double(stages.fwd_ms)
                           << ',' << fmt_double(fsm_ms) << ',' << depth << '\n';
        }
    }
    reader.join();
    if (any) {
        if (auto e = fsm_finalize(fsm, last_t_us, fsm_cfg)) {
            ++summary.events;
            if (sinks.steps) write_step_log_row(*sinks.steps, e->interval);
        }
    }
    summary.latency_mean_ms =
        summary.frames ? lat_sum / static_cast<double>(summary.frames) : 0.0;
    return summary;
}

} // namespace gait
