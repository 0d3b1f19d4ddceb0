#ifndef ADLOOP_SIM_HPP
#define ADLOOP_SIM_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adloop/core.hpp"
#include "adloop/geometry.hpp"

namespace adloop::sim {

enum class SkillTag { merging, overtaking, emergency_brake, give_way, traffic_sign };

const char* to_string(SkillTag t);
std::optional<SkillTag> skill_from_string(const std::string& s);

struct ScenarioTrigger {
    double trigger_progress = 0.0;
    std::string scenario_ref;
};

struct RouteSpec {
    std::string route_id;
    std::vector<geom::Vec2> waypoints;
    double lane_half_width = 1.75;  // m
    double speed_limit = 5.0;       // m/s
    std::set<SkillTag> skill_tags;
    std::vector<ScenarioTrigger> scenario_triggers;

    void validate() const;  // throws std::invalid_argument with a reason
};

enum class ActorKind { vehicle, pedestrian, static_obstacle, traffic_light };
enum class BehaviorKind { stationary, constant_velocity, cut_in, sudden_brake, crossing };

const char* to_string(ActorKind k);
std::optional<ActorKind> actor_kind_from_string(const std::string& s);
const char* to_string(BehaviorKind b);
std::optional<BehaviorKind> behavior_from_string(const std::string& s);

/// Spawn pose. Relative poses are route-frame offsets from the ego's
/// projection at spawn time: x forward along the route, y lateral.
/// Absolute poses are world coordinates.
struct SpawnPose {
    bool relative = true;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // absolute only
};

/// Behavior parameters are a named-value map; unknown names are rejected.
/// Recognized: speed, trigger, decel, merge_rate, red_s, green_s, phase0,
/// zone_len, walk_past.
struct ActorSpec {
    std::string actor_id;
    ActorKind kind = ActorKind::vehicle;
    SpawnPose spawn;
    BehaviorKind behavior = BehaviorKind::stationary;
    std::map<std::string, double> params;
    double trigger_progress = 0.0;  // 0 spawns at load; otherwise armed until reached

    double param(const std::string& name, double fallback) const;
    void validate() const;
};

/// Simulator-loadable threat scenario: actors plus provenance.
struct ScenarioSpec {
    std::string scenario_id;
    std::string base_route_id;
    std::vector<ActorSpec> actors;
    std::string description;

    void validate() const;
};

struct SimConfig {
    double dt = 0.1;             // s per frame
    double accel_max = 2.0;      // m/s^2 at full throttle
    double brake_max = 4.0;      // m/s^2 at full brake
    double drag = 0.3;           // 1/s, speed-proportional decay
    double wheel_base = 2.5;     // m
    double max_steer_rad = 0.6;  // steering angle at |steer| = 1
    double ego_length = 4.0;
    double ego_width = 1.8;
    int blocked_after_frames = 200;   // no-progress frames before "blocked"
    double deviation_factor = 3.0;    // route_deviation at factor * lane_half_width
    double trigger_jitter = 0.1;      // seeded fractional jitter on trigger distances
    int raster_px = 200;              // raster observation is raster_px x raster_px
    double raster_window_m = 40.0;    // world window edge length
};

struct ActorState {
    ActorSpec spec;
    bool spawned = false;
    // Lane-frame pose: arc length along the route plus signed lateral offset.
    double arc = 0.0;
    double lateral = 0.0;
    double heading = 0.0;  // world heading for rendering / footprints
    double speed = 0.0;
    bool triggered = false;       // behavior activation latch
    bool crossing_done = false;
    double trigger_eff = 0.0;     // jittered trigger distance, fixed at spawn
    double crossing_target = 0.0;
    bool ego_in_zone = false;     // traffic-light zone latch
};

enum class ObservationMode { text, raster };

/// Full simulation state for one episode. Copyable; identical
/// (seed, route, scenario, control sequence) yields identical states.
struct WorldState {
    std::int64_t tick = 0;
    core::EgoState ego;
    std::vector<ActorState> actors;
    RouteSpec route;
    std::uint64_t rng_seed = 0;

    SimConfig config;
    std::shared_ptr<const geom::Polyline> path;
    double progress = 0.0;  // monotone
    int frames_without_progress = 0;
    bool ego_outside_lane = false;  // boundary-crossing edge latch
    bool fatal = false;
    std::mt19937_64 rng;
};

struct StepResult {
    std::vector<core::Infraction> infractions;
    core::Observation observation;
    core::ObservationSummary summary;  // trace-ready record of the post-step state
    bool fatal = false;
};

WorldState load_route(const RouteSpec& route, const std::optional<ScenarioSpec>& scenario,
                      std::uint64_t seed, const SimConfig& config = SimConfig{});

/// Kinematic bicycle update:
///   a = accel_max*throttle - brake_max*brake - drag*speed
///   speed' = max(0, speed + a*dt)
///   heading' = heading + (speed'/wheel_base)*tan(max_steer_rad*steer)*dt
/// with the position advanced along the new heading.
core::EgoState bicycle_step(const core::EgoState& ego, const core::ControlVector& u, double dt,
                            const SimConfig& config);

/// Arc-length fraction of the route covered by the ego's closest-point
/// projection, clamped to be non-decreasing across the episode.
double route_progress(const WorldState& world);

core::Observation render_observation(const WorldState& world, ObservationMode mode);

StepResult step(WorldState& world, const core::ControlVector& u, double dt);

/// Ego/actor footprints used by collision detection; exposed for tests.
geom::Obb ego_footprint(const WorldState& world);
geom::Obb actor_footprint(const ActorState& actor, const WorldState& world);
geom::Vec2 actor_position(const ActorState& actor, const WorldState& world);

nlohmann::json to_json(const RouteSpec& r);
RouteSpec route_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ActorSpec& a);
ActorSpec actor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

RouteSpec load_route_file(const std::string& path);
ScenarioSpec load_scenario_file(const std::string& path);
/// Loads every *.json route in a directory, sorted by route_id.
std::vector<RouteSpec> load_route_library(const std::string& dir);

}  // namespace adloop::sim

#endif
