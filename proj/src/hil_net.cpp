#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "adloop/hil.hpp"

namespace adloop::hil {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string summarize(const WireMessage& msg) {
    return std::visit(
        [](const auto& m) -> std::string {
            using T = std::decay_t<decltype(m)>;
            std::ostringstream os;
            if constexpr (std::is_same_v<T, Hello>) {
                os << "HELLO platform=" << m.platform << " v" << m.protocol_version;
            } else if constexpr (std::is_same_v<T, ObservationMsg>) {
                os << "OBSERVATION frame=" << m.frame_index;
            } else if constexpr (std::is_same_v<T, ControlMsg>) {
                os << "CONTROL frame=" << m.frame_index << " duration=" << m.duration_s;
            } else if constexpr (std::is_same_v<T, ResultMsg>) {
                os << "RESULT frame=" << m.frame_index << " status=" << m.status;
            } else {
                os << "BYE reason=" << m.reason;
            }
            return os.str();
        },
        msg);
}

/// Blocking socket wrapper with framed send/recv and poll-based timeouts.
class FrameChannel {
  public:
    explicit FrameChannel(int fd) : fd_(fd) {}
    ~FrameChannel() { close(); }
    FrameChannel(const FrameChannel&) = delete;
    FrameChannel& operator=(const FrameChannel&) = delete;

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    bool send_message(const WireMessage& msg) {
        const std::vector<std::uint8_t> bytes = encode(msg);
        std::size_t sent = 0;
        while (sent < bytes.size()) {
            const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<std::size_t>(n);
        }
        return true;
    }

    enum class RecvStatus { ok, timeout, closed, protocol_error };

    struct Received {
        RecvStatus status;
        WireMessage message;
        std::string detail;
    };

    Received receive(double timeout_s) {
        const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
        while (true) {
            const DecodeResult r = decode(buffer_.data(), buffer_.size());
            if (r.status == DecodeStatus::ok) {
                buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(r.consumed));
                return Received{RecvStatus::ok, r.message, ""};
            }
            if (r.status == DecodeStatus::error) {
                return Received{RecvStatus::protocol_error, {}, r.error};
            }
            const double remaining =
                std::chrono::duration<double>(deadline - Clock::now()).count();
            if (remaining <= 0.0) return Received{RecvStatus::timeout, {}, "receive timeout"};

            pollfd pfd{fd_, POLLIN, 0};
            const int prc = ::poll(&pfd, 1, static_cast<int>(std::ceil(remaining * 1000.0)));
            if (prc == 0) return Received{RecvStatus::timeout, {}, "receive timeout"};
            if (prc < 0) return Received{RecvStatus::closed, {}, "poll failed"};

            std::uint8_t chunk[4096];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n == 0) return Received{RecvStatus::closed, {}, "peer closed connection"};
            if (n < 0) return Received{RecvStatus::closed, {}, "recv failed"};
            buffer_.insert(buffer_.end(), chunk, chunk + n);
        }
    }

  private:
    int fd_ = -1;
    std::vector<std::uint8_t> buffer_;
};

int accept_with_timeout(int listen_fd, double timeout_s) {
    pollfd pfd{listen_fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
    if (rc <= 0) return -1;
    return ::accept(listen_fd, nullptr, nullptr);
}

}  // namespace

TcpListener::TcpListener(const std::string& bind_addr, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw std::runtime_error("bad bind address: " + bind_addr);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        throw std::runtime_error("bind failed on " + bind_addr + ":" + std::to_string(port));
    }
    if (::listen(fd_, 4) != 0) {
        ::close(fd_);
        throw std::runtime_error("listen failed");
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

SessionLog serve_session(TcpListener& listener, const Controller& controller,
                         const ServeOptions& options) {
    SessionLog log;
    const auto start = Clock::now();
    auto note = [&](const std::string& dir, const std::string& text) {
        log.events.push_back(SessionEvent{seconds_since(start), dir, text});
    };

    const int client_fd = accept_with_timeout(listener.fd(), options.io_timeout_s);
    if (client_fd < 0) {
        log.end_reason = "accept timeout";
        note("note", log.end_reason);
        return log;
    }
    FrameChannel channel(client_fd);

    auto fail = [&](const std::string& reason) {
        log.end_reason = reason;
        note("note", reason);
        channel.send_message(Bye{reason});
        return log;
    };

    // Handshake.
    auto hello = channel.receive(options.io_timeout_s);
    if (hello.status != FrameChannel::RecvStatus::ok) return fail("handshake: " + hello.detail);
    const auto* h = std::get_if<Hello>(&hello.message);
    if (!h) return fail("handshake: expected HELLO, got " + summarize(hello.message));
    note("recv", summarize(hello.message));
    if (h->protocol_version != kProtocolVersion) {
        return fail("protocol_version mismatch: " + std::to_string(h->protocol_version));
    }
    log.platform = h->platform;
    channel.send_message(Hello{"server", kProtocolVersion});
    note("send", "HELLO platform=server v" + std::to_string(kProtocolVersion));

    std::int64_t expected_frame = 0;
    while (true) {
        auto incoming = channel.receive(options.io_timeout_s);
        if (incoming.status == FrameChannel::RecvStatus::closed) {
            log.end_reason = "client disconnected";
            note("note", log.end_reason);
            return log;
        }
        if (incoming.status == FrameChannel::RecvStatus::timeout) {
            return fail("observation timeout");
        }
        if (incoming.status == FrameChannel::RecvStatus::protocol_error) {
            return fail("protocol error: " + incoming.detail);
        }
        if (const auto* bye = std::get_if<Bye>(&incoming.message)) {
            log.end_reason = "client bye: " + bye->reason;
            note("recv", summarize(incoming.message));
            return log;
        }
        const auto* obs_msg = std::get_if<ObservationMsg>(&incoming.message);
        if (!obs_msg) return fail("expected OBSERVATION, got " + summarize(incoming.message));
        if (obs_msg->frame_index != expected_frame) {
            return fail("frame index " + std::to_string(obs_msg->frame_index) + ", expected " +
                        std::to_string(expected_frame));
        }
        note("recv", summarize(incoming.message));

        core::Observation obs;
        obs.frame_index = obs_msg->frame_index;
        obs.timestamp = obs_msg->timestamp;
        if (obs_msg->payload.is_object()) {
            if (obs_msg->payload.contains("scene")) {
                obs.scene = core::ScenePayload::from_text(
                    obs_msg->payload.at("scene").get<std::string>());
            }
            if (obs_msg->payload.contains("ego")) {
                const auto& e = obs_msg->payload.at("ego");
                obs.ego = core::EgoState{e.value("x", 0.0), e.value("y", 0.0),
                                         e.value("heading", 0.0), e.value("speed", 0.0)};
            }
            obs.route_progress = obs_msg->payload.value("progress", 0.0);
        }

        const auto control_start = Clock::now();
        core::ControlVector control{0.0, 0.0, 1.0};
        bool controller_failed = false;
        try {
            control = controller(obs);
        } catch (const std::exception& e) {
            controller_failed = true;
            note("note", std::string("controller threw: ") + e.what());
        }
        const double elapsed = seconds_since(control_start);
        if (elapsed > options.cycle_s || controller_failed || !core::control_in_range(control)) {
            control = core::ControlVector{0.0, 0.0, 1.0};
            if (elapsed > options.cycle_s) {
                ++log.overruns;
                note("note", "controller overrun: " + std::to_string(elapsed) + "s");
            }
        }

        const ControlMsg reply{expected_frame, control, options.cycle_s};
        if (!channel.send_message(reply)) {
            log.end_reason = "send failed";
            note("note", log.end_reason);
            return log;
        }
        note("send", summarize(WireMessage{reply}));

        auto result = channel.receive(options.io_timeout_s);
        if (result.status == FrameChannel::RecvStatus::closed) {
            log.end_reason = "client disconnected";
            note("note", log.end_reason);
            return log;
        }
        if (result.status != FrameChannel::RecvStatus::ok) {
            return fail("result: " + result.detail);
        }
        if (const auto* bye = std::get_if<Bye>(&result.message)) {
            log.end_reason = "client bye: " + bye->reason;
            note("recv", summarize(result.message));
            return log;
        }
        const auto* res = std::get_if<ResultMsg>(&result.message);
        if (!res) return fail("expected RESULT, got " + summarize(result.message));
        if (res->frame_index != expected_frame) {
            return fail("RESULT frame mismatch: " + std::to_string(res->frame_index));
        }
        note("recv", summarize(result.message));

        ++log.cycles;
        ++expected_frame;
    }
}

namespace {

struct ClientState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

void integrate(ClientState& s, const PlatformParams& platform, const ControlMsg& control,
               double dt_step) {
    double remaining = control.duration_s;
    if (platform.kind == PlatformKind::ackermann) {
        const AckermannDrive drive = map_ackermann(control.control, platform);
        while (remaining > 1e-12) {
            const double dt = std::min(dt_step, remaining);
            s.heading += drive.velocity * std::tan(drive.steer_angle) / platform.wheel_base * dt;
            s.x += drive.velocity * std::cos(s.heading) * dt;
            s.y += drive.velocity * std::sin(s.heading) * dt;
            remaining -= dt;
        }
    } else {
        const DiffDrive drive = map_differential(control.control, platform);
        const double v = (drive.left + drive.right) / 2.0;
        const double omega = (drive.right - drive.left) / platform.track_width;
        while (remaining > 1e-12) {
            const double dt = std::min(dt_step, remaining);
            s.heading += omega * dt;
            s.x += v * std::cos(s.heading) * dt;
            s.y += v * std::sin(s.heading) * dt;
            remaining -= dt;
        }
    }
}

int connect_to(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return -1;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return -1;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

}  // namespace

RunLog sim_vehicle_client(const std::string& host, int port, const PlatformParams& platform,
                          const PhysicalRoute& route, const ClientOptions& options) {
    platform.validate();
    RunLog log;
    log.route_id = route.route_id;
    auto abort = [&](std::string detail) {
        log.aborted = true;
        log.abort_detail = std::move(detail);
        return log;
    };

    const int fd = connect_to(host, port);
    if (fd < 0) return abort("connect failed to " + host + ":" + std::to_string(port));
    FrameChannel channel(fd);
    const double silence_budget = options.silent_cycles_abort * options.cycle_s;

    if (!channel.send_message(Hello{to_string(platform.kind), kProtocolVersion})) {
        return abort("HELLO send failed");
    }
    auto ack = channel.receive(silence_budget);
    if (ack.status != FrameChannel::RecvStatus::ok || !std::holds_alternative<Hello>(ack.message)) {
        return abort("handshake failed: " + (ack.detail.empty() ? summarize(ack.message) : ack.detail));
    }

    ClientState state;
    double speed_estimate = 0.0;
    for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
        const double progress = std::clamp(state.x / route.length_m, 0.0, 1.0);
        std::ostringstream scene;
        scene << "pos=(" << state.x << "," << state.y << ") heading=" << state.heading
              << " speed=" << speed_estimate << " progress=" << progress;
        ObservationMsg obs;
        obs.frame_index = cycle;
        obs.timestamp = cycle * options.cycle_s;
        obs.payload = nlohmann::json{
            {"scene", scene.str()},
            {"ego", nlohmann::json{{"x", state.x},
                                   {"y", state.y},
                                   {"heading", state.heading},
                                   {"speed", speed_estimate}}},
            {"progress", progress}};
        if (!channel.send_message(WireMessage{obs})) return abort("observation send failed");

        auto reply = channel.receive(silence_budget);
        if (reply.status == FrameChannel::RecvStatus::timeout) {
            return abort("server silent past " + std::to_string(options.silent_cycles_abort) +
                         " cycles");
        }
        if (reply.status != FrameChannel::RecvStatus::ok) {
            return abort("receive failed: " + reply.detail);
        }
        if (const auto* bye = std::get_if<Bye>(&reply.message)) {
            log.bye_reason = "server bye: " + bye->reason;
            log.completed_fraction = progress;
            return log;
        }
        const auto* control = std::get_if<ControlMsg>(&reply.message);
        if (!control) return abort("expected CONTROL, got " + summarize(reply.message));
        if (control->frame_index != cycle) {
            return abort("CONTROL frame mismatch: got " + std::to_string(control->frame_index) +
                         ", expected " + std::to_string(cycle));
        }

        const double x_before = state.x;
        integrate(state, platform, *control, options.integrate_dt);
        speed_estimate = (state.x - x_before) / control->duration_s;
        ++log.cycles;

        if (!channel.send_message(ResultMsg{cycle, "ok"})) return abort("result send failed");

        log.completed_fraction = std::clamp(state.x / route.length_m, 0.0, 1.0);
        if (std::abs(state.y) > route.lane_half_width_m) {
            log.bye_reason = "boundary";
            channel.send_message(Bye{"boundary"});
            return log;
        }
        if (state.x >= route.length_m) {
            log.bye_reason = "finished";
            log.completed_fraction = 1.0;
            channel.send_message(Bye{"finished"});
            return log;
        }
    }
    log.bye_reason = "timeout";
    channel.send_message(Bye{"timeout"});
    return log;
}

}  // namespace adloop::hil
