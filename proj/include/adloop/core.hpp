#ifndef ADLOOP_CORE_HPP
#define ADLOOP_CORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace adloop::core {

/// Mid-level control triple. steer in [-1,1], throttle and brake in [0,1],
/// all finite. Construct via clamp_control() or make_control(); the default
/// constructor yields the neutral (0,0,0).
struct ControlVector {
    double steer = 0.0;
    double throttle = 0.0;
    double brake = 0.0;

    bool operator==(const ControlVector&) const = default;
};

/// True iff all components are finite and within their documented ranges.
bool control_in_range(const ControlVector& u);

/// Clamps each component into range. Throws std::invalid_argument on
/// non-finite input; callers substitute the fallback action instead.
ControlVector clamp_control(double steer, double throttle, double brake);

/// Validating constructor: throws if any component is out of range.
ControlVector make_control(double steer, double throttle, double brake);

/// Canonical text form "steer: s, throttle: t, brake: b" with shortest
/// round-trip number formatting.
std::string format_control(const ControlVector& u);

struct EgoState {
    double x = 0.0;        // m
    double y = 0.0;        // m
    double heading = 0.0;  // rad, normalized to (-pi, pi]
    double speed = 0.0;    // m/s, >= 0

    bool operator==(const EgoState&) const = default;
};

/// Wraps an angle into (-pi, pi].
double normalize_heading(double heading);

enum class TaskId {
    action_prediction,
    trajectory_forecasting,
    semantic_reasoning,
};

const char* to_string(TaskId t);
std::optional<TaskId> task_from_string(const std::string& s);

/// Predefined task identifiers with one prompt each.
struct TaskSet {
    std::vector<TaskId> tasks;
    std::map<TaskId, std::string> prompt_per_task;

    /// Throws if empty or if any task lacks a prompt.
    void validate() const;
};

/// Per-task free-form text produced by the fast system.
struct CommandSet {
    std::map<TaskId, std::string> per_task_text;

    bool empty() const { return per_task_text.empty(); }
    std::optional<std::string> text_for(TaskId t) const;
};

/// Scene payload: either image bytes with a declared encoding or a
/// structured textual scene description.
struct ScenePayload {
    enum class Kind { text, image };
    Kind kind = Kind::text;
    std::string text;                 // kind == text
    std::vector<std::uint8_t> image;  // kind == image
    std::string encoding;             // image encoding tag, e.g. "ppm"

    static ScenePayload from_text(std::string t);
    static ScenePayload from_image(std::vector<std::uint8_t> bytes, std::string enc);
};

struct Observation {
    std::int64_t frame_index = 0;
    double timestamp = 0.0;  // s
    EgoState ego;
    ScenePayload scene;
    double route_progress = 0.0;  // in [0, 1]
};

enum class InfractionKind {
    collision_pedestrian,
    collision_vehicle,
    collision_static,
    red_light,
    boundary_crossing,
    route_deviation,
    timeout,
};

constexpr InfractionKind kAllInfractionKinds[] = {
    InfractionKind::collision_pedestrian, InfractionKind::collision_vehicle,
    InfractionKind::collision_static,     InfractionKind::red_light,
    InfractionKind::boundary_crossing,    InfractionKind::route_deviation,
    InfractionKind::timeout,
};

const char* to_string(InfractionKind k);
std::optional<InfractionKind> infraction_from_string(const std::string& s);

struct Infraction {
    InfractionKind kind = InfractionKind::timeout;
    std::int64_t frame_index = 0;
    std::string detail;
};

/// Range/speed sample for one nearby moving actor; feeds the efficiency
/// reference-speed rule.
struct ActorSample {
    double range_m = 0.0;
    double speed_mps = 0.0;
};

/// Compact per-frame observation record kept in traces. The full scene
/// payload is not stored; ego state and actor samples are what the metrics
/// consume.
struct ObservationSummary {
    std::int64_t frame_index = 0;
    double timestamp = 0.0;
    EgoState ego;
    double route_progress = 0.0;
    std::vector<ActorSample> actors;
};

struct FrameRecord {
    ObservationSummary observation;  // state after applying `control` over `dt`
    CommandSet commands;
    ControlVector control;
    double dt = 0.0;
};

enum class TerminationReason { finished, blocked, infraction_fatal, timeout };

const char* to_string(TerminationReason r);
std::optional<TerminationReason> termination_from_string(const std::string& s);

/// Per-episode log of frames and infraction events; the sole input to every
/// metric. Immutable by convention once an episode ends.
struct EpisodeTrace {
    std::string route_id;
    std::optional<std::string> scenario_id;
    std::vector<FrameRecord> frames;
    std::vector<Infraction> infractions;
    double completed_fraction = 0.0;
    TerminationReason terminated_by = TerminationReason::blocked;
};

/// Appends a frame. The record's frame index must be exactly
/// last_index + 1 (or 0 on an empty trace); otherwise throws.
void append_frame(EpisodeTrace& trace, FrameRecord record);

/// Throws std::invalid_argument describing the first violated invariant.
void validate_trace(const EpisodeTrace& trace);

nlohmann::json to_json(const ControlVector& u);
ControlVector control_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EpisodeTrace& trace);
EpisodeTrace trace_from_json(const nlohmann::json& j);

std::string serialize_trace(const EpisodeTrace& trace);
EpisodeTrace deserialize_trace(const std::string& text);

}  // namespace adloop::core

#endif
