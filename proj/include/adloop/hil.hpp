#ifndef ADLOOP_HIL_HPP
#define ADLOOP_HIL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "adloop/core.hpp"

namespace adloop::hil {

constexpr int kProtocolVersion = 1;
constexpr double kDefaultCycleS = 0.5;
constexpr std::size_t kDefaultMaxFrame = 16u * 1024 * 1024;

// ---------------------------------------------------------------------------
// Wire protocol: 4-byte big-endian length prefix + UTF-8 JSON body.
// ---------------------------------------------------------------------------

struct Hello {
    std::string platform;
    int protocol_version = kProtocolVersion;
    bool operator==(const Hello&) const = default;
};

struct ObservationMsg {
    std::int64_t frame_index = 0;
    double timestamp = 0.0;
    nlohmann::json payload;
    bool operator==(const ObservationMsg&) const = default;
};

struct ControlMsg {
    std::int64_t frame_index = 0;
    core::ControlVector control;
    double duration_s = kDefaultCycleS;
    bool operator==(const ControlMsg&) const = default;
};

struct ResultMsg {
    std::int64_t frame_index = 0;
    std::string status;
    bool operator==(const ResultMsg&) const = default;
};

struct Bye {
    std::string reason;
    bool operator==(const Bye&) const = default;
};

using WireMessage = std::variant<Hello, ObservationMsg, ControlMsg, ResultMsg, Bye>;

/// Serializes a message into one length-prefixed frame. Throws on a body
/// exceeding max_frame or an out-of-range control.
std::vector<std::uint8_t> encode(const WireMessage& msg, std::size_t max_frame = kDefaultMaxFrame);

enum class DecodeStatus { ok, need_more, error };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::need_more;
    WireMessage message;      // valid when status == ok
    std::string error;        // valid when status == error
    std::size_t consumed = 0; // bytes consumed from the input when ok
};

/// Decodes the first complete frame from the buffer. Never throws:
/// truncated input yields need_more, malformed input a structured error.
DecodeResult decode(const std::uint8_t* data, std::size_t len,
                    std::size_t max_frame = kDefaultMaxFrame);

// ---------------------------------------------------------------------------
// Platform mappings from the mid-level control triple to actuation values.
// ---------------------------------------------------------------------------

enum class PlatformKind { differential, ackermann, tracked, mecanum };

const char* to_string(PlatformKind k);
std::optional<PlatformKind> platform_kind_from_string(const std::string& s);

struct PlatformParams {
    PlatformKind kind = PlatformKind::differential;
    double wheel_base = 0.2;       // m, ackermann
    double track_width = 0.12;     // m, differential/tracked/mecanum
    double max_speed = 1.0;        // m/s
    double max_steer_angle = 0.5;  // rad, ackermann
    double k_omega = 1.0;          // yaw-rate gain for differential steering

    void validate() const;
};

struct DiffDrive {
    double left = 0.0;   // m/s
    double right = 0.0;  // m/s
};

struct AckermannDrive {
    double steer_angle = 0.0;  // rad
    double velocity = 0.0;     // m/s
};

/// v = clamp(max_speed*(throttle-brake), 0, max_speed);
/// omega = k_omega*steer*max_speed/track_width; wheels at v -/+ omega*w/2,
/// clamped symmetrically. Tracked and mecanum platforms use the same
/// mapping (mecanum lateral motion is unreachable from this control triple).
DiffDrive map_differential(const core::ControlVector& u, const PlatformParams& p);

/// steer_angle = steer*max_steer_angle; velocity as above. Reverse driving
/// is unsupported: velocity clamps at 0.
AckermannDrive map_ackermann(const core::ControlVector& u, const PlatformParams& p);

// ---------------------------------------------------------------------------
// Session server.
// ---------------------------------------------------------------------------

struct SessionEvent {
    double wall_time_s = 0.0;  // seconds since session start
    std::string direction;     // "recv", "send", or "note"
    std::string summary;
};

struct SessionLog {
    std::string platform;
    int cycles = 0;
    int overruns = 0;
    std::string end_reason;
    std::vector<SessionEvent> events;
};

using Controller = std::function<core::ControlVector(const core::Observation&)>;

struct ServeOptions {
    double cycle_s = kDefaultCycleS;
    double io_timeout_s = 10.0;  // per-message receive budget
};

/// Minimal RAII TCP listener; port 0 binds an ephemeral port.
class TcpListener {
  public:
    explicit TcpListener(const std::string& bind_addr = "127.0.0.1", int port = 0);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    int fd() const { return fd_; }

  private:
    int fd_ = -1;
    int port_ = 0;
};

/// Serves one session: HELLO handshake, then one OBSERVATION -> CONTROL ->
/// RESULT exchange per cycle until BYE or error. The controller runs
/// synchronously; exceeding the cycle budget substitutes the fallback brake
/// action and logs an overrun. Exactly one CONTROL is in flight at a time.
SessionLog serve_session(TcpListener& listener, const Controller& controller,
                         const ServeOptions& options = ServeOptions{});

// ---------------------------------------------------------------------------
// Simulated vehicle client and completion scoring.
// ---------------------------------------------------------------------------

/// Straight physical lane from the origin along +x.
struct PhysicalRoute {
    std::string route_id = "lane";
    double length_m = 10.0;
    double lane_half_width_m = 0.5;
};

struct RunLog {
    std::string route_id;
    std::string bye_reason;  // finished | boundary | collision | timeout
    double completed_fraction = 0.0;
    int cycles = 0;
    bool aborted = false;       // protocol failure, no BYE exchanged
    std::string abort_detail;
};

struct ClientOptions {
    int max_cycles = 400;
    double cycle_s = kDefaultCycleS;   // used only for the silence budget
    int silent_cycles_abort = 3;       // server silent past N cycles -> abort
    double integrate_dt = 0.01;        // kinematic substep
};

/// Protocol-conformant stand-in for a physical vehicle: drives an internal
/// differential or bicycle kinematic model with each received CONTROL for
/// its duration_s and reports observations and results in lockstep.
RunLog sim_vehicle_client(const std::string& host, int port, const PlatformParams& platform,
                          const PhysicalRoute& route, const ClientOptions& options = ClientOptions{});

struct CompletionReport {
    std::map<std::string, std::pair<int, int>> per_route;  // successes / attempts
    double average_percent = 0.0;
};

/// Per-route success fraction (full traversal without boundary crossing or
/// collision) over exactly n_runs attempts, plus the cross-route average in
/// percent. Throws on an empty or miscounted group.
CompletionReport completion_rate(const std::map<std::string, std::vector<RunLog>>& logs,
                                 int n_runs);

nlohmann::json to_json(const SessionLog& log);
nlohmann::json to_json(const RunLog& log);

}  // namespace adloop::hil

#endif
