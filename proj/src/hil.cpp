#include "adloop/hil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace adloop::hil {

namespace {

using nlohmann::json;

json body_of(const WireMessage& msg) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Hello>) {
                return json{{"type", "HELLO"},
                            {"platform", m.platform},
                            {"protocol_version", m.protocol_version}};
            } else if constexpr (std::is_same_v<T, ObservationMsg>) {
                return json{{"type", "OBSERVATION"},
                            {"frame_index", m.frame_index},
                            {"timestamp", m.timestamp},
                            {"payload", m.payload}};
            } else if constexpr (std::is_same_v<T, ControlMsg>) {
                return json{{"type", "CONTROL"},
                            {"frame_index", m.frame_index},
                            {"control", core::to_json(m.control)},
                            {"duration_s", m.duration_s}};
            } else if constexpr (std::is_same_v<T, ResultMsg>) {
                return json{{"type", "RESULT"},
                            {"frame_index", m.frame_index},
                            {"status", m.status}};
            } else {
                return json{{"type", "BYE"}, {"reason", m.reason}};
            }
        },
        msg);
}

/// Strict field check: exactly the expected keys, no more, no fewer.
bool has_exact_keys(const json& j, std::initializer_list<const char*> keys) {
    if (!j.is_object() || j.size() != keys.size()) return false;
    for (const char* k : keys) {
        if (!j.contains(k)) return false;
    }
    return true;
}

DecodeResult decode_error(std::string message) {
    DecodeResult r;
    r.status = DecodeStatus::error;
    r.error = std::move(message);
    return r;
}

DecodeResult parse_body(const json& j, std::size_t frame_size) {
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        return decode_error("body is not an object with a type field");
    }
    const std::string type = j.at("type").get<std::string>();
    DecodeResult r;
    r.status = DecodeStatus::ok;
    r.consumed = frame_size;
    try {
        if (type == "HELLO") {
            if (!has_exact_keys(j, {"type", "platform", "protocol_version"})) {
                return decode_error("HELLO fields mismatch");
            }
            r.message = Hello{j.at("platform").get<std::string>(),
                              j.at("protocol_version").get<int>()};
        } else if (type == "OBSERVATION") {
            if (!has_exact_keys(j, {"type", "frame_index", "timestamp", "payload"})) {
                return decode_error("OBSERVATION fields mismatch");
            }
            r.message = ObservationMsg{j.at("frame_index").get<std::int64_t>(),
                                       j.at("timestamp").get<double>(), j.at("payload")};
        } else if (type == "CONTROL") {
            if (!has_exact_keys(j, {"type", "frame_index", "control", "duration_s"})) {
                return decode_error("CONTROL fields mismatch");
            }
            r.message = ControlMsg{j.at("frame_index").get<std::int64_t>(),
                                   core::control_from_json(j.at("control")),
                                   j.at("duration_s").get<double>()};
        } else if (type == "RESULT") {
            if (!has_exact_keys(j, {"type", "frame_index", "status"})) {
                return decode_error("RESULT fields mismatch");
            }
            r.message = ResultMsg{j.at("frame_index").get<std::int64_t>(),
                                  j.at("status").get<std::string>()};
        } else if (type == "BYE") {
            if (!has_exact_keys(j, {"type", "reason"})) {
                return decode_error("BYE fields mismatch");
            }
            r.message = Bye{j.at("reason").get<std::string>()};
        } else {
            return decode_error("unknown variant " + type);
        }
    } catch (const std::exception& e) {
        return decode_error(std::string("bad field: ") + e.what());
    }
    return r;
}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& msg, std::size_t max_frame) {
    if (const auto* c = std::get_if<ControlMsg>(&msg)) {
        if (!core::control_in_range(c->control)) {
            throw std::invalid_argument("encode: CONTROL out of range");
        }
    }
    const std::string body = body_of(msg).dump();
    if (body.size() > max_frame) throw std::invalid_argument("encode: frame exceeds cap");
    std::vector<std::uint8_t> out;
    out.reserve(4 + body.size());
    const std::uint32_t len = static_cast<std::uint32_t>(body.size());
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

DecodeResult decode(const std::uint8_t* data, std::size_t len, std::size_t max_frame) {
    if (len < 4) {
        DecodeResult r;
        r.status = DecodeStatus::need_more;
        return r;
    }
    const std::uint32_t body_len = (static_cast<std::uint32_t>(data[0]) << 24) |
                                   (static_cast<std::uint32_t>(data[1]) << 16) |
                                   (static_cast<std::uint32_t>(data[2]) << 8) |
                                   static_cast<std::uint32_t>(data[3]);
    if (body_len > max_frame) {
        return decode_error("frame length " + std::to_string(body_len) + " exceeds cap");
    }
    if (len < 4 + static_cast<std::size_t>(body_len)) {
        DecodeResult r;
        r.status = DecodeStatus::need_more;
        return r;
    }
    json j = json::parse(data + 4, data + 4 + body_len, nullptr, false);
    if (j.is_discarded()) return decode_error("malformed JSON body");
    return parse_body(j, 4 + static_cast<std::size_t>(body_len));
}

const char* to_string(PlatformKind k) {
    switch (k) {
        case PlatformKind::differential: return "differential";
        case PlatformKind::ackermann: return "ackermann";
        case PlatformKind::tracked: return "tracked";
        case PlatformKind::mecanum: return "mecanum";
    }
    return "?";
}

std::optional<PlatformKind> platform_kind_from_string(const std::string& s) {
    for (PlatformKind k : {PlatformKind::differential, PlatformKind::ackermann,
                           PlatformKind::tracked, PlatformKind::mecanum}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

void PlatformParams::validate() const {
    if (!(max_speed > 0.0)) throw std::invalid_argument("platform: max_speed must be > 0");
    if (kind == PlatformKind::ackermann) {
        if (!(wheel_base > 0.0)) throw std::invalid_argument("platform: wheel_base must be > 0");
        if (!(max_steer_angle > 0.0)) {
            throw std::invalid_argument("platform: max_steer_angle must be > 0");
        }
    } else {
        if (!(track_width > 0.0)) throw std::invalid_argument("platform: track_width must be > 0");
    }
}

DiffDrive map_differential(const core::ControlVector& u, const PlatformParams& p) {
    if (p.kind == PlatformKind::ackermann) {
        throw std::invalid_argument("map_differential: platform is ackermann");
    }
    p.validate();
    const double v = std::clamp(p.max_speed * (u.throttle - u.brake), 0.0, p.max_speed);
    const double omega = p.k_omega * u.steer * p.max_speed / p.track_width;
    DiffDrive d;
    d.left = std::clamp(v - omega * p.track_width / 2.0, -p.max_speed, p.max_speed);
    d.right = std::clamp(v + omega * p.track_width / 2.0, -p.max_speed, p.max_speed);
    return d;
}

AckermannDrive map_ackermann(const core::ControlVector& u, const PlatformParams& p) {
    if (p.kind != PlatformKind::ackermann) {
        throw std::invalid_argument("map_ackermann: platform is not ackermann");
    }
    p.validate();
    return AckermannDrive{u.steer * p.max_steer_angle,
                          std::clamp(p.max_speed * (u.throttle - u.brake), 0.0, p.max_speed)};
}

CompletionReport completion_rate(const std::map<std::string, std::vector<RunLog>>& logs,
                                 int n_runs) {
    if (logs.empty()) throw std::invalid_argument("completion_rate: no route groups");
    if (n_runs <= 0) throw std::invalid_argument("completion_rate: n_runs must be > 0");

    CompletionReport report;
    double sum = 0.0;
    for (const auto& [route_id, runs] : logs) {
        if (runs.empty()) throw std::invalid_argument("completion_rate: empty group " + route_id);
        if (static_cast<int>(runs.size()) != n_runs) {
            throw std::invalid_argument("completion_rate: group " + route_id + " has " +
                                        std::to_string(runs.size()) + " runs, expected " +
                                        std::to_string(n_runs));
        }
        int successes = 0;
        for (const RunLog& run : runs) {
            if (!run.aborted && run.completed_fraction >= 1.0) ++successes;
        }
        report.per_route[route_id] = {successes, n_runs};
        sum += static_cast<double>(successes) / static_cast<double>(n_runs);
    }
    report.average_percent = 100.0 * sum / static_cast<double>(logs.size());
    return report;
}

nlohmann::json to_json(const SessionLog& log) {
    json events = json::array();
    for (const SessionEvent& e : log.events) {
        events.push_back(json{{"wall_time_s", e.wall_time_s},
                              {"direction", e.direction},
                              {"summary", e.summary}});
    }
    return json{{"platform", log.platform},
                {"cycles", log.cycles},
                {"overruns", log.overruns},
                {"end_reason", log.end_reason},
                {"events", std::move(events)}};
}

nlohmann::json to_json(const RunLog& log) {
    return json{{"route_id", log.route_id},
                {"bye_reason", log.bye_reason},
                {"completed_fraction", log.completed_fraction},
                {"cycles", log.cycles},
                {"aborted", log.aborted},
                {"abort_detail", log.abort_detail}};
}

}  // namespace adloop::hil
