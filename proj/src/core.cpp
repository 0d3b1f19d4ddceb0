#include "adloop/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

namespace adloop::core {

namespace {

using nlohmann::json;

std::string shortest_repr(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

bool control_in_range(const ControlVector& u) {
    return std::isfinite(u.steer) && std::isfinite(u.throttle) && std::isfinite(u.brake) &&
           u.steer >= -1.0 && u.steer <= 1.0 && u.throttle >= 0.0 && u.throttle <= 1.0 &&
           u.brake >= 0.0 && u.brake <= 1.0;
}

ControlVector clamp_control(double steer, double throttle, double brake) {
    if (!std::isfinite(steer) || !std::isfinite(throttle) || !std::isfinite(brake)) {
        throw std::invalid_argument("clamp_control: non-finite component");
    }
    return ControlVector{std::clamp(steer, -1.0, 1.0), std::clamp(throttle, 0.0, 1.0),
                         std::clamp(brake, 0.0, 1.0)};
}

ControlVector make_control(double steer, double throttle, double brake) {
    ControlVector u{steer, throttle, brake};
    if (!control_in_range(u)) {
        throw std::invalid_argument("make_control: component out of range");
    }
    return u;
}

std::string format_control(const ControlVector& u) {
    return "steer: " + shortest_repr(u.steer) + ", throttle: " + shortest_repr(u.throttle) +
           ", brake: " + shortest_repr(u.brake);
}

double normalize_heading(double heading) {
    double h = std::fmod(heading, 2.0 * M_PI);
    if (h <= -M_PI) h += 2.0 * M_PI;
    if (h > M_PI) h -= 2.0 * M_PI;
    return h;
}

const char* to_string(TaskId t) {
    switch (t) {
        case TaskId::action_prediction: return "action_prediction";
        case TaskId::trajectory_forecasting: return "trajectory_forecasting";
        case TaskId::semantic_reasoning: return "semantic_reasoning";
    }
    return "?";
}

std::optional<TaskId> task_from_string(const std::string& s) {
    if (s == "action_prediction") return TaskId::action_prediction;
    if (s == "trajectory_forecasting") return TaskId::trajectory_forecasting;
    if (s == "semantic_reasoning") return TaskId::semantic_reasoning;
    return std::nullopt;
}

void TaskSet::validate() const {
    if (tasks.empty()) throw std::invalid_argument("TaskSet: empty task list");
    for (TaskId t : tasks) {
        auto it = prompt_per_task.find(t);
        if (it == prompt_per_task.end()) {
            throw std::invalid_argument(std::string("TaskSet: missing prompt for ") + to_string(t));
        }
    }
}

std::optional<std::string> CommandSet::text_for(TaskId t) const {
    auto it = per_task_text.find(t);
    if (it == per_task_text.end()) return std::nullopt;
    return it->second;
}

ScenePayload ScenePayload::from_text(std::string t) {
    ScenePayload p;
    p.kind = Kind::text;
    p.text = std::move(t);
    return p;
}

ScenePayload ScenePayload::from_image(std::vector<std::uint8_t> bytes, std::string enc) {
    ScenePayload p;
    p.kind = Kind::image;
    p.image = std::move(bytes);
    p.encoding = std::move(enc);
    return p;
}

const char* to_string(InfractionKind k) {
    switch (k) {
        case InfractionKind::collision_pedestrian: return "collision_pedestrian";
        case InfractionKind::collision_vehicle: return "collision_vehicle";
        case InfractionKind::collision_static: return "collision_static";
        case InfractionKind::red_light: return "red_light";
        case InfractionKind::boundary_crossing: return "boundary_crossing";
        case InfractionKind::route_deviation: return "route_deviation";
        case InfractionKind::timeout: return "timeout";
    }
    return "?";
}

std::optional<InfractionKind> infraction_from_string(const std::string& s) {
    for (InfractionKind k : kAllInfractionKinds) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

const char* to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::finished: return "finished";
        case TerminationReason::blocked: return "blocked";
        case TerminationReason::infraction_fatal: return "infraction_fatal";
        case TerminationReason::timeout: return "timeout";
    }
    return "?";
}

std::optional<TerminationReason> termination_from_string(const std::string& s) {
    if (s == "finished") return TerminationReason::finished;
    if (s == "blocked") return TerminationReason::blocked;
    if (s == "infraction_fatal") return TerminationReason::infraction_fatal;
    if (s == "timeout") return TerminationReason::timeout;
    return std::nullopt;
}

void append_frame(EpisodeTrace& trace, FrameRecord record) {
    const std::int64_t expected =
        trace.frames.empty() ? 0 : trace.frames.back().observation.frame_index + 1;
    if (record.observation.frame_index != expected) {
        throw std::invalid_argument("append_frame: expected frame index " +
                                    std::to_string(expected) + ", got " +
                                    std::to_string(record.observation.frame_index));
    }
    if (!control_in_range(record.control)) {
        throw std::invalid_argument("append_frame: control out of range");
    }
    trace.frames.push_back(std::move(record));
}

void validate_trace(const EpisodeTrace& trace) {
    std::int64_t expected = 0;
    double prev_progress = 0.0;
    for (const FrameRecord& f : trace.frames) {
        if (f.observation.frame_index != expected) {
            throw std::invalid_argument("trace: frame indices not consecutive from 0");
        }
        if (!control_in_range(f.control)) {
            throw std::invalid_argument("trace: control out of range at frame " +
                                        std::to_string(expected));
        }
        if (f.observation.route_progress + 1e-12 < prev_progress) {
            throw std::invalid_argument("trace: route_progress decreased at frame " +
                                        std::to_string(expected));
        }
        prev_progress = f.observation.route_progress;
        ++expected;
    }
    for (const Infraction& inf : trace.infractions) {
        if (inf.frame_index < 0 || inf.frame_index >= expected) {
            throw std::invalid_argument("trace: infraction frame_index outside episode");
        }
    }
    if (!trace.frames.empty() &&
        trace.completed_fraction != trace.frames.back().observation.route_progress) {
        throw std::invalid_argument("trace: completed_fraction != final route_progress");
    }
}

nlohmann::json to_json(const ControlVector& u) {
    return json{{"steer", u.steer}, {"throttle", u.throttle}, {"brake", u.brake}};
}

ControlVector control_from_json(const json& j) {
    ControlVector u{j.at("steer").get<double>(), j.at("throttle").get<double>(),
                    j.at("brake").get<double>()};
    if (!control_in_range(u)) throw std::invalid_argument("control json out of range");
    return u;
}

namespace {

json to_json(const EgoState& e) {
    return json{{"x", e.x}, {"y", e.y}, {"heading", e.heading}, {"speed", e.speed}};
}

EgoState ego_from_json(const json& j) {
    return EgoState{j.at("x").get<double>(), j.at("y").get<double>(),
                    j.at("heading").get<double>(), j.at("speed").get<double>()};
}

json to_json(const ObservationSummary& o) {
    json actors = json::array();
    for (const ActorSample& a : o.actors) {
        actors.push_back(json{{"range_m", a.range_m}, {"speed_mps", a.speed_mps}});
    }
    return json{{"frame_index", o.frame_index},
                {"timestamp", o.timestamp},
                {"ego", to_json(o.ego)},
                {"route_progress", o.route_progress},
                {"actors", std::move(actors)}};
}

ObservationSummary summary_from_json(const json& j) {
    ObservationSummary o;
    o.frame_index = j.at("frame_index").get<std::int64_t>();
    o.timestamp = j.at("timestamp").get<double>();
    o.ego = ego_from_json(j.at("ego"));
    o.route_progress = j.at("route_progress").get<double>();
    for (const json& a : j.at("actors")) {
        o.actors.push_back(ActorSample{a.at("range_m").get<double>(),
                                       a.at("speed_mps").get<double>()});
    }
    return o;
}

json to_json(const CommandSet& c) {
    json out = json::object();
    for (const auto& [task, text] : c.per_task_text) out[to_string(task)] = text;
    return out;
}

CommandSet commands_from_json(const json& j) {
    CommandSet c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto task = task_from_string(it.key());
        if (!task) throw std::invalid_argument("unknown task id: " + it.key());
        c.per_task_text[*task] = it.value().get<std::string>();
    }
    return c;
}

}  // namespace

nlohmann::json to_json(const EpisodeTrace& trace) {
    json frames = json::array();
    for (const FrameRecord& f : trace.frames) {
        frames.push_back(json{{"observation", to_json(f.observation)},
                              {"commands", to_json(f.commands)},
                              {"control", to_json(f.control)},
                              {"dt", f.dt}});
    }
    json infractions = json::array();
    for (const Infraction& inf : trace.infractions) {
        infractions.push_back(json{{"kind", to_string(inf.kind)},
                                   {"frame_index", inf.frame_index},
                                   {"detail", inf.detail}});
    }
    return json{{"route_id", trace.route_id},
                {"scenario_id", trace.scenario_id ? json(*trace.scenario_id) : json(nullptr)},
                {"frames", std::move(frames)},
                {"infractions", std::move(infractions)},
                {"completed_fraction", trace.completed_fraction},
                {"terminated_by", to_string(trace.terminated_by)}};
}

EpisodeTrace trace_from_json(const json& j) {
    EpisodeTrace t;
    t.route_id = j.at("route_id").get<std::string>();
    if (!j.at("scenario_id").is_null()) t.scenario_id = j.at("scenario_id").get<std::string>();
    for (const json& fj : j.at("frames")) {
        FrameRecord f;
        f.observation = summary_from_json(fj.at("observation"));
        f.commands = commands_from_json(fj.at("commands"));
        f.control = control_from_json(fj.at("control"));
        f.dt = fj.at("dt").get<double>();
        t.frames.push_back(std::move(f));
    }
    for (const json& ij : j.at("infractions")) {
        auto kind = infraction_from_string(ij.at("kind").get<std::string>());
        if (!kind) throw std::invalid_argument("unknown infraction kind");
        t.infractions.push_back(Infraction{*kind, ij.at("frame_index").get<std::int64_t>(),
                                           ij.at("detail").get<std::string>()});
    }
    t.completed_fraction = j.at("completed_fraction").get<double>();
    auto reason = termination_from_string(j.at("terminated_by").get<std::string>());
    if (!reason) throw std::invalid_argument("unknown termination reason");
    t.terminated_by = *reason;
    return t;
}

std::string serialize_trace(const EpisodeTrace& trace) { return to_json(trace).dump(2); }

EpisodeTrace deserialize_trace(const std::string& text) {
    return trace_from_json(json::parse(text));
}

}  // namespace adloop::core
