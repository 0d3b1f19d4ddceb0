#include "adloop/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace adloop::sim {

namespace {

using core::EgoState;
using core::Infraction;
using core::InfractionKind;
using geom::Obb;
using geom::Vec2;
using nlohmann::json;

constexpr double kProgressEps = 1e-9;

std::string fmt(const char* format, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

const std::set<std::string> kKnownParams = {
    "speed", "trigger", "decel", "merge_rate", "red_s",
    "green_s", "phase0", "zone_len", "walk_past",
};

}  // namespace

const char* to_string(SkillTag t) {
    switch (t) {
        case SkillTag::merging: return "merging";
        case SkillTag::overtaking: return "overtaking";
        case SkillTag::emergency_brake: return "emergency_brake";
        case SkillTag::give_way: return "give_way";
        case SkillTag::traffic_sign: return "traffic_sign";
    }
    return "?";
}

std::optional<SkillTag> skill_from_string(const std::string& s) {
    for (SkillTag t : {SkillTag::merging, SkillTag::overtaking, SkillTag::emergency_brake,
                       SkillTag::give_way, SkillTag::traffic_sign}) {
        if (s == to_string(t)) return t;
    }
    return std::nullopt;
}

const char* to_string(ActorKind k) {
    switch (k) {
        case ActorKind::vehicle: return "vehicle";
        case ActorKind::pedestrian: return "pedestrian";
        case ActorKind::static_obstacle: return "static_obstacle";
        case ActorKind::traffic_light: return "traffic_light";
    }
    return "?";
}

std::optional<ActorKind> actor_kind_from_string(const std::string& s) {
    for (ActorKind k : {ActorKind::vehicle, ActorKind::pedestrian, ActorKind::static_obstacle,
                        ActorKind::traffic_light}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

const char* to_string(BehaviorKind b) {
    switch (b) {
        case BehaviorKind::stationary: return "stationary";
        case BehaviorKind::constant_velocity: return "constant_velocity";
        case BehaviorKind::cut_in: return "cut_in";
        case BehaviorKind::sudden_brake: return "sudden_brake";
        case BehaviorKind::crossing: return "crossing";
    }
    return "?";
}

std::optional<BehaviorKind> behavior_from_string(const std::string& s) {
    for (BehaviorKind b : {BehaviorKind::stationary, BehaviorKind::constant_velocity,
                           BehaviorKind::cut_in, BehaviorKind::sudden_brake,
                           BehaviorKind::crossing}) {
        if (s == to_string(b)) return b;
    }
    return std::nullopt;
}

void RouteSpec::validate() const {
    if (route_id.empty()) throw std::invalid_argument("route: empty route_id");
    if (waypoints.size() < 2) throw std::invalid_argument("route: needs >= 2 waypoints");
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
        if ((waypoints[i] - waypoints[i - 1]).norm() <= 0.0) {
            throw std::invalid_argument("route: consecutive waypoints coincide at index " +
                                        std::to_string(i));
        }
    }
    if (!(lane_half_width > 0.0)) throw std::invalid_argument("route: lane_half_width must be > 0");
    if (!(speed_limit > 0.0)) throw std::invalid_argument("route: speed_limit must be > 0");
    for (const ScenarioTrigger& t : scenario_triggers) {
        if (t.trigger_progress <= 0.0 || t.trigger_progress >= 1.0) {
            throw std::invalid_argument("route: scenario trigger_progress must be in (0,1)");
        }
        if (t.scenario_ref.empty()) throw std::invalid_argument("route: empty scenario_ref");
    }
}

double ActorSpec::param(const std::string& name, double fallback) const {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
}

void ActorSpec::validate() const {
    if (actor_id.empty()) throw std::invalid_argument("actor: empty actor_id");
    for (const auto& [name, value] : params) {
        if (!kKnownParams.count(name)) {
            throw std::invalid_argument("actor " + actor_id + ": unknown param '" + name + "'");
        }
        if (!std::isfinite(value)) {
            throw std::invalid_argument("actor " + actor_id + ": non-finite param '" + name + "'");
        }
    }
    if (param("speed", 0.0) < 0.0) throw std::invalid_argument("actor " + actor_id + ": speed < 0");
    if (param("trigger", 10.0) <= 0.0) {
        throw std::invalid_argument("actor " + actor_id + ": trigger must be > 0");
    }
    for (const char* positive : {"decel", "merge_rate", "red_s", "green_s", "zone_len"}) {
        if (params.count(positive) && params.at(positive) <= 0.0) {
            throw std::invalid_argument("actor " + actor_id + ": " + positive + " must be > 0");
        }
    }
    if (trigger_progress < 0.0 || trigger_progress >= 1.0) {
        throw std::invalid_argument("actor " + actor_id + ": trigger_progress must be in [0,1)");
    }
}

void ScenarioSpec::validate() const {
    if (scenario_id.empty()) throw std::invalid_argument("scenario: empty scenario_id");
    if (actors.empty()) throw std::invalid_argument("scenario: needs >= 1 actor");
    for (const ActorSpec& a : actors) {
        a.validate();
        if (a.trigger_progress <= 0.0 || a.trigger_progress >= 1.0) {
            throw std::invalid_argument("scenario actor " + a.actor_id +
                                        ": trigger_progress must be in (0,1)");
        }
    }
}

namespace {

double route_heading(const WorldState& world, double arc) { return world.path->heading_at(arc); }

Vec2 lane_frame_to_world(const WorldState& world, double arc, double lateral) {
    const Vec2 on_path = world.path->point_at(arc);
    const Vec2 normal = geom::rotate(geom::from_heading(route_heading(world, arc)), M_PI / 2.0);
    return on_path + normal * lateral;
}

void spawn_actor(WorldState& world, ActorState& a) {
    const geom::PolylineProjection ego_proj = world.path->project({world.ego.x, world.ego.y});
    if (a.spec.spawn.relative) {
        a.arc = std::clamp(ego_proj.arc_length + a.spec.spawn.x, 0.0, world.path->total_length());
        a.lateral = a.spec.spawn.y;
        a.heading = route_heading(world, a.arc);
    } else {
        const geom::PolylineProjection p = world.path->project({a.spec.spawn.x, a.spec.spawn.y});
        a.arc = p.arc_length;
        a.lateral = p.signed_offset;
        a.heading = a.spec.spawn.heading;
    }
    const bool moving = a.spec.behavior == BehaviorKind::constant_velocity ||
                        a.spec.behavior == BehaviorKind::cut_in ||
                        a.spec.behavior == BehaviorKind::sudden_brake;
    a.speed = moving ? a.spec.param("speed", 0.0) : 0.0;
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    const double jitter = world.config.trigger_jitter * uni(world.rng);
    a.trigger_eff = a.spec.param("trigger", 10.0) * (1.0 + jitter);
    if (a.spec.behavior == BehaviorKind::crossing) {
        const double sign = a.lateral >= 0.0 ? 1.0 : -1.0;
        a.crossing_target = -a.lateral - sign * a.spec.param("walk_past", 1.0);
    }
    a.spawned = true;
}

double range_to_ego(const WorldState& world, const ActorState& a) {
    return (actor_position(a, world) - Vec2{world.ego.x, world.ego.y}).norm();
}

void advance_actor(WorldState& world, ActorState& a, double dt) {
    switch (a.spec.behavior) {
        case BehaviorKind::stationary:
            break;
        case BehaviorKind::constant_velocity:
            a.arc = std::min(a.arc + a.speed * dt, world.path->total_length());
            a.heading = route_heading(world, a.arc);
            break;
        case BehaviorKind::cut_in: {
            if (!a.triggered && range_to_ego(world, a) < a.trigger_eff) a.triggered = true;
            a.arc = std::min(a.arc + a.speed * dt, world.path->total_length());
            if (a.triggered && a.lateral != 0.0) {
                const double rate = a.spec.param("merge_rate", 1.0);
                const double shift = std::min(rate * dt, std::abs(a.lateral));
                a.lateral -= (a.lateral > 0.0 ? shift : -shift);
            }
            a.heading = route_heading(world, a.arc);
            break;
        }
        case BehaviorKind::sudden_brake: {
            if (!a.triggered && range_to_ego(world, a) < a.trigger_eff) a.triggered = true;
            if (a.triggered) {
                a.speed = std::max(0.0, a.speed - a.spec.param("decel", 8.0) * dt);
            }
            a.arc = std::min(a.arc + a.speed * dt, world.path->total_length());
            a.heading = route_heading(world, a.arc);
            break;
        }
        case BehaviorKind::crossing: {
            if (!a.triggered && range_to_ego(world, a) < a.trigger_eff) a.triggered = true;
            if (a.triggered && !a.crossing_done) {
                const double walk = a.spec.param("speed", 1.0) * dt;
                const double remaining = a.crossing_target - a.lateral;
                if (std::abs(remaining) <= walk) {
                    a.lateral = a.crossing_target;
                    a.crossing_done = true;
                    a.speed = 0.0;
                } else {
                    a.lateral += (remaining > 0.0 ? walk : -walk);
                    a.speed = a.spec.param("speed", 1.0);
                }
                a.heading = route_heading(world, a.arc) + (remaining > 0.0 ? M_PI / 2 : -M_PI / 2);
            }
            break;
        }
    }
}

struct LightPhase {
    bool red = false;
};

LightPhase light_phase(const WorldState& world, const ActorState& a) {
    const double red_s = a.spec.param("red_s", 3.0);
    const double green_s = a.spec.param("green_s", 5.0);
    const double t = std::fmod(world.tick * world.config.dt + a.spec.param("phase0", 0.0),
                               red_s + green_s);
    return LightPhase{t < red_s};
}

Obb light_zone(const WorldState& world, const ActorState& a) {
    Obb zone;
    zone.center = world.path->point_at(a.arc);
    zone.heading = route_heading(world, a.arc);
    zone.length = a.spec.param("zone_len", 3.0);
    zone.width = 2.0 * world.route.lane_half_width;
    return zone;
}

double footprint_length(ActorKind k) {
    switch (k) {
        case ActorKind::vehicle: return 4.0;
        case ActorKind::pedestrian: return 0.6;
        case ActorKind::static_obstacle: return 1.0;
        case ActorKind::traffic_light: return 0.0;
    }
    return 0.0;
}

double footprint_width(ActorKind k) {
    switch (k) {
        case ActorKind::vehicle: return 1.8;
        case ActorKind::pedestrian: return 0.6;
        case ActorKind::static_obstacle: return 1.0;
        case ActorKind::traffic_light: return 0.0;
    }
    return 0.0;
}

InfractionKind collision_kind(ActorKind k) {
    switch (k) {
        case ActorKind::pedestrian: return InfractionKind::collision_pedestrian;
        case ActorKind::vehicle: return InfractionKind::collision_vehicle;
        default: return InfractionKind::collision_static;
    }
}

void detect_infractions(WorldState& world, std::vector<Infraction>& out) {
    const Obb ego = ego_footprint(world);
    const geom::PolylineProjection proj = world.path->project({world.ego.x, world.ego.y});

    for (ActorState& a : world.actors) {
        if (!a.spawned) continue;
        if (a.spec.kind == ActorKind::traffic_light) {
            const bool inside = geom::point_in_obb({world.ego.x, world.ego.y}, light_zone(world, a));
            if (inside && !a.ego_in_zone && light_phase(world, a).red) {
                out.push_back(Infraction{InfractionKind::red_light, world.tick,
                                         "entered zone of " + a.spec.actor_id + " during red"});
            }
            a.ego_in_zone = inside;
            continue;
        }
        if (geom::obb_overlap(ego, actor_footprint(a, world))) {
            out.push_back(Infraction{collision_kind(a.spec.kind), world.tick,
                                     "overlap with actor " + a.spec.actor_id + " (" +
                                         to_string(a.spec.kind) + ")"});
            world.fatal = true;
        }
    }

    const double off = std::abs(proj.signed_offset);
    const bool outside = off > world.route.lane_half_width;
    if (outside && !world.ego_outside_lane) {
        out.push_back(Infraction{InfractionKind::boundary_crossing, world.tick,
                                 "lateral offset " + fmt("%.2f", proj.signed_offset) +
                                     " exceeds lane half-width"});
    }
    world.ego_outside_lane = outside;

    if (off > world.config.deviation_factor * world.route.lane_half_width) {
        out.push_back(Infraction{InfractionKind::route_deviation, world.tick,
                                 "left the route corridor (offset " + fmt("%.2f", off) + ")"});
        world.fatal = true;
    }
}

std::string render_text(const WorldState& world) {
    const geom::PolylineProjection proj = world.path->project({world.ego.x, world.ego.y});
    const double heading_err =
        core::normalize_heading(world.ego.heading - route_heading(world, proj.arc_length));

    std::ostringstream os;
    os << "tick=" << world.tick << " speed=" << fmt("%.2f", world.ego.speed)
       << " lane_offset=" << fmt("%+.2f", proj.signed_offset)
       << " heading_err=" << fmt("%+.3f", heading_err)
       << " progress=" << fmt("%.3f", world.progress)
       << " speed_limit=" << fmt("%.2f", world.route.speed_limit) << "\n";

    struct Nearby {
        const ActorState* actor;
        double fwd, lat, range;
    };
    std::vector<Nearby> nearby;
    const ActorState* nearest_light = nullptr;
    double nearest_light_fwd = 0.0;
    for (const ActorState& a : world.actors) {
        if (!a.spawned) continue;
        const Vec2 rel = geom::rotate(actor_position(a, world) - Vec2{world.ego.x, world.ego.y},
                                      -world.ego.heading);
        if (a.spec.kind == ActorKind::traffic_light) {
            const double zone_reach = a.spec.param("zone_len", 3.0);
            if (rel.x > -zone_reach && rel.x < 15.0 &&
                (!nearest_light || rel.x < nearest_light_fwd)) {
                nearest_light = &a;
                nearest_light_fwd = rel.x;
            }
            continue;
        }
        nearby.push_back(Nearby{&a, rel.x, rel.y, rel.norm()});
    }
    std::sort(nearby.begin(), nearby.end(),
              [](const Nearby& l, const Nearby& r) { return l.range < r.range; });
    if (nearby.size() > 5) nearby.resize(5);

    os << "actors:";
    if (nearby.empty()) {
        os << " no actors";
    } else {
        for (std::size_t i = 0; i < nearby.size(); ++i) {
            const Nearby& n = nearby[i];
            os << (i == 0 ? " " : "; ") << to_string(n.actor->spec.kind)
               << " fwd=" << fmt("%.2f", n.fwd) << " lat=" << fmt("%+.2f", n.lat)
               << " range=" << fmt("%.2f", n.range) << " speed=" << fmt("%.2f", n.actor->speed);
        }
    }
    os << "\n";

    os << "light:";
    std::string light_state = "none";
    if (nearest_light) {
        light_state = light_phase(world, *nearest_light).red ? "red" : "green";
        os << " " << light_state << " dist=" << fmt("%.2f", nearest_light_fwd);
    } else {
        os << " none";
    }
    os << "\n";

    std::string threat = "none";
    double best_range = std::numeric_limits<double>::max();
    for (const Nearby& n : nearby) {
        if (n.fwd > 0.3 && std::abs(n.lat) < 2.5 && n.range < best_range) best_range = n.range;
    }
    if (best_range < std::numeric_limits<double>::max()) {
        threat = best_range < 10.0 ? "near" : (best_range < 25.0 ? "mid" : "far");
    }

    const double off_thresh = 0.3 * world.route.lane_half_width;
    std::string lane = "centered";
    if (proj.signed_offset > off_thresh) lane = "off_right";
    else if (proj.signed_offset < -off_thresh) lane = "off_left";

    std::string course = "aligned";
    if (heading_err > 0.15) course = "veer_right";
    else if (heading_err < -0.15) course = "veer_left";
    else if (heading_err > 0.05) course = "drift_right";
    else if (heading_err < -0.05) course = "drift_left";

    os << "tokens: threat=" << threat << " lane=" << lane << " course=" << course
       << " light_state=" << light_state << "\n";
    return os.str();
}

std::vector<std::uint8_t> render_raster(const WorldState& world) {
    const int n = world.config.raster_px;
    const double window = world.config.raster_window_m;
    const double scale = window / n;
    const Vec2 origin{world.ego.x - window / 2.0, world.ego.y - window / 2.0};

    std::vector<std::uint8_t> img(static_cast<std::size_t>(n) * n * 3, 0);
    auto put = [&](int px, int py, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        const std::size_t idx = (static_cast<std::size_t>(py) * n + px) * 3;
        img[idx] = r;
        img[idx + 1] = g;
        img[idx + 2] = b;
    };

    const Obb ego = ego_footprint(world);
    for (int py = 0; py < n; ++py) {
        for (int px = 0; px < n; ++px) {
            const Vec2 p = origin + Vec2{(px + 0.5) * scale, (py + 0.5) * scale};
            if (world.path->project(p).distance <= world.route.lane_half_width) {
                put(px, py, 70, 70, 70);
            }
            if (geom::point_in_obb(p, ego)) put(px, py, 255, 255, 255);
        }
    }
    for (const ActorState& a : world.actors) {
        if (!a.spawned) continue;
        if (a.spec.kind == ActorKind::traffic_light) {
            const Vec2 c = world.path->point_at(a.arc);
            const bool red = light_phase(world, a).red;
            for (int py = 0; py < n; ++py) {
                for (int px = 0; px < n; ++px) {
                    const Vec2 p = origin + Vec2{(px + 0.5) * scale, (py + 0.5) * scale};
                    if ((p - c).norm() <= 0.8) put(px, py, red ? 255 : 0, red ? 0 : 255, 0);
                }
            }
            continue;
        }
        const Obb box = actor_footprint(a, world);
        for (int py = 0; py < n; ++py) {
            for (int px = 0; px < n; ++px) {
                const Vec2 p = origin + Vec2{(px + 0.5) * scale, (py + 0.5) * scale};
                if (!geom::point_in_obb(p, box)) continue;
                switch (a.spec.kind) {
                    case ActorKind::vehicle: put(px, py, 220, 60, 60); break;
                    case ActorKind::pedestrian: put(px, py, 60, 220, 60); break;
                    default: put(px, py, 90, 90, 220); break;
                }
            }
        }
    }

    std::string header = "P6\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.begin(), img.end());
    return out;
}

core::ObservationSummary summarize(const WorldState& world) {
    core::ObservationSummary s;
    s.frame_index = world.tick;
    s.timestamp = world.tick * world.config.dt;
    s.ego = world.ego;
    s.route_progress = world.progress;
    for (const ActorState& a : world.actors) {
        if (!a.spawned) continue;
        if (a.spec.kind != ActorKind::vehicle && a.spec.kind != ActorKind::pedestrian) continue;
        s.actors.push_back(core::ActorSample{range_to_ego(world, a), a.speed});
    }
    return s;
}

}  // namespace

geom::Obb ego_footprint(const WorldState& world) {
    return Obb{{world.ego.x, world.ego.y}, world.ego.heading, world.config.ego_length,
               world.config.ego_width};
}

geom::Vec2 actor_position(const ActorState& actor, const WorldState& world) {
    return lane_frame_to_world(world, actor.arc, actor.lateral);
}

geom::Obb actor_footprint(const ActorState& actor, const WorldState& world) {
    return Obb{actor_position(actor, world), actor.heading, footprint_length(actor.spec.kind),
               footprint_width(actor.spec.kind)};
}

WorldState load_route(const RouteSpec& route, const std::optional<ScenarioSpec>& scenario,
                      std::uint64_t seed, const SimConfig& config) {
    route.validate();
    if (scenario) scenario->validate();

    WorldState world;
    world.route = route;
    world.config = config;
    world.rng_seed = seed;
    world.rng.seed(seed);
    world.path = std::make_shared<const geom::Polyline>(route.waypoints);

    const Vec2 start = route.waypoints[0];
    const Vec2 dir = route.waypoints[1] - route.waypoints[0];
    world.ego = EgoState{start.x, start.y, std::atan2(dir.y, dir.x), 0.0};

    if (scenario) {
        for (const ActorSpec& spec : scenario->actors) {
            ActorState a;
            a.spec = spec;
            world.actors.push_back(std::move(a));
        }
    }
    // Actors declared with trigger_progress 0 exist from the start.
    for (ActorState& a : world.actors) {
        if (a.spec.trigger_progress <= 0.0) spawn_actor(world, a);
    }
    return world;
}

core::EgoState bicycle_step(const EgoState& ego, const core::ControlVector& u, double dt,
                            const SimConfig& config) {
    if (!(dt > 0.0)) throw std::invalid_argument("bicycle_step: dt must be > 0");
    const double accel =
        config.accel_max * u.throttle - config.brake_max * u.brake - config.drag * ego.speed;
    const double speed = std::max(0.0, ego.speed + accel * dt);
    const double heading = core::normalize_heading(
        ego.heading + (speed / config.wheel_base) * std::tan(config.max_steer_rad * u.steer) * dt);
    return EgoState{ego.x + speed * std::cos(heading) * dt, ego.y + speed * std::sin(heading) * dt,
                    heading, speed};
}

double route_progress(const WorldState& world) {
    const geom::PolylineProjection p = world.path->project({world.ego.x, world.ego.y});
    return std::max(world.progress, p.arc_length / world.path->total_length());
}

core::Observation render_observation(const WorldState& world, ObservationMode mode) {
    core::Observation obs;
    obs.frame_index = world.tick;
    obs.timestamp = world.tick * world.config.dt;
    obs.ego = world.ego;
    obs.route_progress = world.progress;
    if (mode == ObservationMode::text) {
        obs.scene = core::ScenePayload::from_text(render_text(world));
    } else {
        obs.scene = core::ScenePayload::from_image(render_raster(world), "ppm");
    }
    return obs;
}

StepResult step(WorldState& world, const core::ControlVector& u, double dt) {
    world.ego = bicycle_step(world.ego, u, dt, world.config);
    world.tick += 1;

    const double new_progress = route_progress(world);
    if (new_progress > world.progress + kProgressEps) {
        world.frames_without_progress = 0;
    } else {
        world.frames_without_progress += 1;
    }
    world.progress = new_progress;

    for (ActorState& a : world.actors) {
        if (!a.spawned && world.progress >= a.spec.trigger_progress) spawn_actor(world, a);
    }
    for (ActorState& a : world.actors) {
        if (a.spawned) advance_actor(world, a, dt);
    }

    StepResult result;
    detect_infractions(world, result.infractions);
    result.fatal = world.fatal;
    result.observation = render_observation(world, ObservationMode::text);
    result.summary = summarize(world);
    return result;
}

namespace {

json vec_to_json(const Vec2& v) { return json::array({v.x, v.y}); }

}  // namespace

nlohmann::json to_json(const RouteSpec& r) {
    json wps = json::array();
    for (const Vec2& w : r.waypoints) wps.push_back(vec_to_json(w));
    json tags = json::array();
    for (SkillTag t : r.skill_tags) tags.push_back(to_string(t));
    json trigs = json::array();
    for (const ScenarioTrigger& t : r.scenario_triggers) {
        trigs.push_back(json{{"trigger_progress", t.trigger_progress},
                             {"scenario_ref", t.scenario_ref}});
    }
    return json{{"route_id", r.route_id},           {"waypoints", std::move(wps)},
                {"lane_half_width", r.lane_half_width}, {"speed_limit", r.speed_limit},
                {"skill_tags", std::move(tags)},    {"scenario_triggers", std::move(trigs)}};
}

RouteSpec route_from_json(const json& j) {
    RouteSpec r;
    r.route_id = j.at("route_id").get<std::string>();
    for (const json& w : j.at("waypoints")) {
        r.waypoints.push_back(Vec2{w.at(0).get<double>(), w.at(1).get<double>()});
    }
    r.lane_half_width = j.at("lane_half_width").get<double>();
    r.speed_limit = j.at("speed_limit").get<double>();
    if (j.contains("skill_tags")) {
        for (const json& t : j.at("skill_tags")) {
            auto tag = skill_from_string(t.get<std::string>());
            if (!tag) throw std::invalid_argument("route: unknown skill tag " + t.get<std::string>());
            r.skill_tags.insert(*tag);
        }
    }
    if (j.contains("scenario_triggers")) {
        for (const json& t : j.at("scenario_triggers")) {
            r.scenario_triggers.push_back(ScenarioTrigger{
                t.at("trigger_progress").get<double>(), t.at("scenario_ref").get<std::string>()});
        }
    }
    r.validate();
    return r;
}

nlohmann::json to_json(const ActorSpec& a) {
    return json{{"actor_id", a.actor_id},
                {"kind", to_string(a.kind)},
                {"spawn", json{{"relative", a.spawn.relative},
                               {"x", a.spawn.x},
                               {"y", a.spawn.y},
                               {"heading", a.spawn.heading}}},
                {"behavior", to_string(a.behavior)},
                {"params", a.params},
                {"trigger_progress", a.trigger_progress}};
}

ActorSpec actor_from_json(const json& j) {
    ActorSpec a;
    a.actor_id = j.at("actor_id").get<std::string>();
    auto kind = actor_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("actor: unknown kind");
    a.kind = *kind;
    const json& s = j.at("spawn");
    a.spawn = SpawnPose{s.at("relative").get<bool>(), s.at("x").get<double>(),
                        s.at("y").get<double>(), s.value("heading", 0.0)};
    auto behavior = behavior_from_string(j.at("behavior").get<std::string>());
    if (!behavior) throw std::invalid_argument("actor: unknown behavior");
    a.behavior = *behavior;
    if (j.contains("params")) {
        a.params = j.at("params").get<std::map<std::string, double>>();
    }
    a.trigger_progress = j.value("trigger_progress", 0.0);
    a.validate();
    return a;
}

nlohmann::json to_json(const ScenarioSpec& s) {
    json actors = json::array();
    for (const ActorSpec& a : s.actors) actors.push_back(to_json(a));
    return json{{"scenario_id", s.scenario_id},
                {"base_route_id", s.base_route_id},
                {"actors", std::move(actors)},
                {"description", s.description}};
}

ScenarioSpec scenario_from_json(const json& j) {
    ScenarioSpec s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.base_route_id = j.at("base_route_id").get<std::string>();
    for (const json& a : j.at("actors")) s.actors.push_back(actor_from_json(a));
    s.description = j.value("description", "");
    s.validate();
    return s;
}

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

}  // namespace

RouteSpec load_route_file(const std::string& path) { return route_from_json(parse_file(path)); }

ScenarioSpec load_scenario_file(const std::string& path) {
    return scenario_from_json(parse_file(path));
}

std::vector<RouteSpec> load_route_library(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<RouteSpec> routes;
    if (!fs::is_directory(dir)) throw std::runtime_error("route library is not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            routes.push_back(load_route_file(entry.path().string()));
        }
    }
    std::sort(routes.begin(), routes.end(),
              [](const RouteSpec& a, const RouteSpec& b) { return a.route_id < b.route_id; });
    return routes;
}

}  // namespace adloop::sim
