#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adloop/sim.hpp"

using namespace adloop;

namespace {

sim::RouteSpec straight_route(double length = 100.0, double half_width = 1.75) {
    sim::RouteSpec r;
    r.route_id = "straight";
    r.waypoints = {{0.0, 0.0}, {length, 0.0}};
    r.lane_half_width = half_width;
    r.speed_limit = 5.0;
    return r;
}

// Exact convex-overlap oracle, independent of the SAT implementation:
// corner containment in either direction or any edge pair crossing.
struct OracleRect {
    double cx, cy, heading, length, width;
};

std::array<std::pair<double, double>, 4> oracle_corners(const OracleRect& r) {
    const double c = std::cos(r.heading), s = std::sin(r.heading);
    const double hl = r.length / 2.0, hw = r.width / 2.0;
    std::array<std::pair<double, double>, 4> out;
    const double dx[4] = {hl, hl, -hl, -hl};
    const double dy[4] = {hw, -hw, -hw, hw};
    for (int i = 0; i < 4; ++i) {
        out[i] = {r.cx + c * dx[i] - s * dy[i], r.cy + s * dx[i] + c * dy[i]};
    }
    return out;
}

bool oracle_point_in(double px, double py, const OracleRect& r) {
    const double c = std::cos(-r.heading), s = std::sin(-r.heading);
    const double rx = c * (px - r.cx) - s * (py - r.cy);
    const double ry = s * (px - r.cx) + c * (py - r.cy);
    return std::abs(rx) <= r.length / 2.0 && std::abs(ry) <= r.width / 2.0;
}

bool segments_cross(std::pair<double, double> a, std::pair<double, double> b,
                    std::pair<double, double> c, std::pair<double, double> d) {
    auto orient = [](std::pair<double, double> p, std::pair<double, double> q,
                     std::pair<double, double> r) {
        return (q.first - p.first) * (r.second - p.second) -
               (q.second - p.second) * (r.first - p.first);
    };
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

bool oracle_overlap(const OracleRect& a, const OracleRect& b) {
    const auto ca = oracle_corners(a);
    const auto cb = oracle_corners(b);
    for (const auto& p : ca) {
        if (oracle_point_in(p.first, p.second, b)) return true;
    }
    for (const auto& p : cb) {
        if (oracle_point_in(p.first, p.second, a)) return true;
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("obb_overlap agrees with the brute-force oracle on random pairs") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> pos(-6.0, 6.0);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> len(0.4, 5.0);
    int overlaps = 0;
    for (int i = 0; i < 3000; ++i) {
        const OracleRect a{pos(rng), pos(rng), ang(rng), len(rng), len(rng)};
        const OracleRect b{pos(rng), pos(rng), ang(rng), len(rng), len(rng)};
        const geom::Obb ga{{a.cx, a.cy}, a.heading, a.length, a.width};
        const geom::Obb gb{{b.cx, b.cy}, b.heading, b.length, b.width};
        const bool expect = oracle_overlap(a, b);
        CHECK(geom::obb_overlap(ga, gb) == expect);
        if (expect) ++overlaps;
    }
    CHECK(overlaps > 100);  // the sample actually exercises both outcomes
    CHECK(overlaps < 2900);
}

TEST_CASE("load_route places ego at the first waypoint facing the second") {
    const auto route = straight_route();
    const sim::WorldState world = sim::load_route(route, std::nullopt, 1);
    CHECK(world.ego.x == 0.0);
    CHECK(world.ego.y == 0.0);
    CHECK(world.ego.heading == doctest::Approx(0.0));
    CHECK(world.progress == 0.0);
    CHECK(sim::route_progress(world) == doctest::Approx(0.0));
}

TEST_CASE("load_route arms scenario actors without spawning them") {
    const auto route = straight_route();
    sim::ScenarioSpec scenario;
    scenario.scenario_id = "s";
    scenario.base_route_id = route.route_id;
    sim::ActorSpec actor;
    actor.actor_id = "a1";
    actor.kind = sim::ActorKind::vehicle;
    actor.behavior = sim::BehaviorKind::cut_in;
    actor.params = {{"speed", 3.0}, {"trigger", 15.0}};
    actor.trigger_progress = 0.5;
    actor.spawn = {true, 12.0, 2.5, 0.0};
    scenario.actors.push_back(actor);

    const sim::WorldState world = sim::load_route(route, scenario, 1);
    REQUIRE(world.actors.size() == 1);
    CHECK_FALSE(world.actors[0].spawned);
}

TEST_CASE("load_route rejects malformed routes") {
    sim::RouteSpec bad;
    bad.route_id = "bad";
    bad.waypoints = {{0.0, 0.0}};
    bad.lane_half_width = 1.0;
    bad.speed_limit = 5.0;
    CHECK_THROWS_AS(sim::load_route(bad, std::nullopt, 1), std::invalid_argument);

    bad.waypoints = {{0.0, 0.0}, {0.0, 0.0}};
    CHECK_THROWS_AS(sim::load_route(bad, std::nullopt, 1), std::invalid_argument);
}

TEST_CASE("bicycle_step: throttle accelerates along an unchanged heading") {
    const sim::SimConfig config;
    const core::EgoState ego{0.0, 0.0, 0.0, 0.0};
    const auto next = sim::bicycle_step(ego, core::make_control(0.0, 0.8, 0.0), 0.1, config);
    CHECK(next.heading == doctest::Approx(0.0));
    CHECK(next.speed > 0.0);
    CHECK(next.x > 0.0);
    CHECK(next.y == doctest::Approx(0.0));
}

TEST_CASE("bicycle_step: rest stays at rest under full brake") {
    const sim::SimConfig config;
    const core::EgoState ego{3.0, 4.0, 0.7, 0.0};
    const auto next = sim::bicycle_step(ego, core::make_control(0.0, 0.0, 1.0), 0.1, config);
    CHECK(next.x == ego.x);
    CHECK(next.y == ego.y);
    CHECK(next.heading == doctest::Approx(ego.heading));
    CHECK(next.speed == 0.0);
}

TEST_CASE("bicycle_step: steering is mirror-symmetric") {
    const sim::SimConfig config;
    const core::EgoState ego{0.0, 0.0, 0.0, 2.0};
    const auto left = sim::bicycle_step(ego, core::make_control(-0.5, 0.4, 0.0), 0.1, config);
    const auto right = sim::bicycle_step(ego, core::make_control(0.5, 0.4, 0.0), 0.1, config);
    CHECK(left.heading == doctest::Approx(-right.heading));
    CHECK(left.y == doctest::Approx(-right.y));
    CHECK(left.x == doctest::Approx(right.x));
    CHECK(left.speed == doctest::Approx(right.speed));
}

TEST_CASE("step reports no infractions for clean in-lane driving") {
    auto world = sim::load_route(straight_route(), std::nullopt, 1);
    const auto result = sim::step(world, core::make_control(0.0, 0.5, 0.0), 0.1);
    CHECK(result.infractions.empty());
    CHECK_FALSE(result.fatal);
}

TEST_CASE("step flags boundary_crossing when the lateral offset exceeds half-width") {
    auto world = sim::load_route(straight_route(100.0, 1.0), std::nullopt, 1);
    world.ego.y = 1.2;  // beyond the 1.0 m half-width
    const auto result = sim::step(world, core::make_control(0.0, 0.0, 0.0), 0.1);
    REQUIRE(result.infractions.size() >= 1);
    CHECK(result.infractions[0].kind == core::InfractionKind::boundary_crossing);
}

TEST_CASE("boundary_crossing is edge-triggered, not repeated every frame") {
    auto world = sim::load_route(straight_route(100.0, 1.0), std::nullopt, 1);
    world.ego.y = 1.2;
    int count = 0;
    for (int i = 0; i < 5; ++i) {
        const auto result = sim::step(world, core::make_control(0.0, 0.0, 0.0), 0.1);
        for (const auto& inf : result.infractions) {
            if (inf.kind == core::InfractionKind::boundary_crossing) ++count;
        }
    }
    CHECK(count == 1);
}

TEST_CASE("overlapping a vehicle footprint raises collision_vehicle") {
    const auto route = straight_route();
    sim::ScenarioSpec scenario;
    scenario.scenario_id = "s";
    scenario.base_route_id = route.route_id;
    sim::ActorSpec actor;
    actor.actor_id = "lead";
    actor.kind = sim::ActorKind::vehicle;
    actor.behavior = sim::BehaviorKind::stationary;
    actor.trigger_progress = 0.01;
    actor.spawn = {true, 3.0, 0.0, 0.0};  // 3 m ahead: 4 m footprints overlap
    scenario.actors.push_back(actor);

    auto world = sim::load_route(route, scenario, 1);
    world.ego.x = 2.0;  // progress past the trigger so the actor spawns
    bool collided = false;
    for (int i = 0; i < 3 && !collided; ++i) {
        const auto result = sim::step(world, core::make_control(0.0, 0.3, 0.0), 0.1);
        for (const auto& inf : result.infractions) {
            if (inf.kind == core::InfractionKind::collision_vehicle) collided = true;
        }
    }
    CHECK(collided);

    // Independent check: the two footprints really do overlap.
    const auto ego_box = sim::ego_footprint(world);
    const auto actor_box = sim::actor_footprint(world.actors[0], world);
    const OracleRect a{ego_box.center.x, ego_box.center.y, ego_box.heading, ego_box.length,
                       ego_box.width};
    const OracleRect b{actor_box.center.x, actor_box.center.y, actor_box.heading,
                       actor_box.length, actor_box.width};
    CHECK(oracle_overlap(a, b));
}

TEST_CASE("route_progress endpoints and midpoint match hand geometry") {
    auto world = sim::load_route(straight_route(100.0), std::nullopt, 1);
    CHECK(sim::route_progress(world) == doctest::Approx(0.0));

    world.ego.x = 50.0;
    world.ego.y = 0.4;
    world.progress = 0.0;
    CHECK(sim::route_progress(world) == doctest::Approx(0.5));

    world.ego.x = 100.0;
    CHECK(sim::route_progress(world) == doctest::Approx(1.0));
}

TEST_CASE("route_progress is monotonically non-decreasing") {
    auto world = sim::load_route(straight_route(50.0), std::nullopt, 1);
    double last = 0.0;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const auto u = core::clamp_control(uni(rng) * 0.4 - 0.2, uni(rng), uni(rng) * 0.3);
        sim::step(world, u, 0.1);
        CHECK(world.progress >= last);
        last = world.progress;
    }
}

TEST_CASE("zero controls bleed speed to zero and hold position") {
    auto world = sim::load_route(straight_route(), std::nullopt, 1);
    world.ego.speed = 5.0;
    for (int i = 0; i < 1000; ++i) sim::step(world, core::make_control(0.0, 0.0, 0.0), 0.1);
    CHECK(world.ego.speed < 1e-9);
    const double x_before = world.ego.x;
    sim::step(world, core::make_control(0.0, 0.0, 0.0), 0.1);
    CHECK(std::abs(world.ego.x - x_before) < 1e-9);
}

TEST_CASE("text observation of an empty scene mentions ego speed and no actors") {
    auto world = sim::load_route(straight_route(), std::nullopt, 1);
    world.ego.speed = 2.5;
    const auto obs = sim::render_observation(world, sim::ObservationMode::text);
    REQUIRE(obs.scene.kind == core::ScenePayload::Kind::text);
    CHECK(obs.scene.text.find("speed=2.50") != std::string::npos);
    CHECK(obs.scene.text.find("no actors") != std::string::npos);
}

TEST_CASE("rendering the same world twice is byte-identical") {
    const auto route = straight_route();
    auto world = sim::load_route(route, std::nullopt, 1);
    for (int i = 0; i < 10; ++i) sim::step(world, core::make_control(0.1, 0.5, 0.0), 0.1);
    const auto a = sim::render_observation(world, sim::ObservationMode::text);
    const auto b = sim::render_observation(world, sim::ObservationMode::text);
    CHECK(a.scene.text == b.scene.text);
    const auto ra = sim::render_observation(world, sim::ObservationMode::raster);
    const auto rb = sim::render_observation(world, sim::ObservationMode::raster);
    CHECK(ra.scene.image == rb.scene.image);
    CHECK(ra.scene.encoding == "ppm");
    CHECK(ra.scene.image.size() > 15);  // P6 header + payload
}

TEST_CASE("an actor 10 m ahead is listed with range 10 within tolerance") {
    const auto route = straight_route();
    sim::ScenarioSpec scenario;
    scenario.scenario_id = "s";
    scenario.base_route_id = route.route_id;
    sim::ActorSpec actor;
    actor.actor_id = "a";
    actor.kind = sim::ActorKind::vehicle;
    actor.behavior = sim::BehaviorKind::stationary;
    actor.trigger_progress = 0.001;
    actor.spawn = {true, 10.0, 0.0, 0.0};
    scenario.actors.push_back(actor);

    auto world = sim::load_route(route, scenario, 1);
    world.ego.x = 0.2;  // cross the trigger progress
    sim::step(world, core::make_control(0.0, 0.0, 0.0), 0.1);
    const auto obs = sim::render_observation(world, sim::ObservationMode::text);
    const auto pos = obs.scene.text.find("range=");
    REQUIRE(pos != std::string::npos);
    const double range = std::strtod(obs.scene.text.c_str() + pos + 6, nullptr);
    // Spawn was measured from the ego's projection when it crossed the trigger.
    CHECK(range == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("determinism: same seed and controls give identical observation streams") {
    const auto route = straight_route();
    sim::ScenarioSpec scenario;
    scenario.scenario_id = "s";
    scenario.base_route_id = route.route_id;
    sim::ActorSpec actor;
    actor.actor_id = "a";
    actor.kind = sim::ActorKind::vehicle;
    actor.behavior = sim::BehaviorKind::sudden_brake;
    actor.params = {{"speed", 1.0}, {"trigger", 12.0}};
    actor.trigger_progress = 0.1;
    actor.spawn = {true, 15.0, 0.0, 0.0};
    scenario.actors.push_back(actor);

    auto run = [&](std::uint64_t seed) {
        auto world = sim::load_route(route, scenario, seed);
        std::ostringstream os;
        for (int i = 0; i < 200; ++i) {
            const auto result = sim::step(world, core::make_control(0.0, 0.6, 0.0), 0.1);
            os << result.observation.scene.text;
        }
        return os.str();
    };
    CHECK(run(7) == run(7));

    // Different seeds draw different trigger jitter.
    auto spawn_trigger = [&](std::uint64_t seed) {
        auto world = sim::load_route(route, scenario, seed);
        for (int i = 0; i < 200 && !world.actors[0].spawned; ++i) {
            sim::step(world, core::make_control(0.0, 0.6, 0.0), 0.1);
        }
        REQUIRE(world.actors[0].spawned);
        return world.actors[0].trigger_eff;
    };
    CHECK(spawn_trigger(7) != spawn_trigger(8));
}

TEST_CASE("red light infraction fires when entering the zone during red") {
    auto route = straight_route(60.0);
    sim::ScenarioSpec scenario;
    scenario.scenario_id = "s";
    scenario.base_route_id = route.route_id;
    sim::ActorSpec light;
    light.actor_id = "tl";
    light.kind = sim::ActorKind::traffic_light;
    light.behavior = sim::BehaviorKind::stationary;
    light.trigger_progress = 0.01;
    light.spawn = {false, 30.0, 0.0, 0.0};
    light.params = {{"red_s", 1e6}, {"green_s", 1.0}};  // effectively always red
    scenario.actors.push_back(light);

    auto world = sim::load_route(route, scenario, 1);
    bool red_seen = false;
    for (int i = 0; i < 400 && !red_seen; ++i) {
        const auto result = sim::step(world, core::make_control(0.0, 0.7, 0.0), 0.1);
        for (const auto& inf : result.infractions) {
            if (inf.kind == core::InfractionKind::red_light) red_seen = true;
        }
    }
    CHECK(red_seen);
}

TEST_CASE("route and scenario JSON round-trip through their loaders") {
    auto route = straight_route();
    route.skill_tags = {sim::SkillTag::merging, sim::SkillTag::traffic_sign};
    route.scenario_triggers.push_back(sim::ScenarioTrigger{0.4, "cutin_pack"});
    const auto j = sim::to_json(route);
    const auto back = sim::route_from_json(j);
    CHECK(back.route_id == route.route_id);
    CHECK(back.skill_tags == route.skill_tags);
    CHECK(back.waypoints.size() == route.waypoints.size());
    CHECK(back.scenario_triggers.size() == 1);

    sim::ScenarioSpec scenario;
    scenario.scenario_id = "scn";
    scenario.base_route_id = "straight";
    sim::ActorSpec actor;
    actor.actor_id = "a1";
    actor.kind = sim::ActorKind::pedestrian;
    actor.behavior = sim::BehaviorKind::crossing;
    actor.params = {{"speed", 1.2}, {"trigger", 9.0}};
    actor.trigger_progress = 0.3;
    actor.spawn = {true, 8.0, 3.0, 0.0};
    scenario.actors.push_back(actor);
    const auto sj = sim::to_json(scenario);
    const auto sback = sim::scenario_from_json(sj);
    CHECK(sback.scenario_id == scenario.scenario_id);
    CHECK(sback.actors.size() == 1);
    CHECK(sback.actors[0].params.at("speed") == 1.2);
}

TEST_CASE("actor param validation rejects bad values") {
    sim::ActorSpec actor;
    actor.actor_id = "a";
    actor.kind = sim::ActorKind::vehicle;
    actor.behavior = sim::BehaviorKind::cut_in;
    actor.params = {{"speed", -1.0}};
    CHECK_THROWS_AS(actor.validate(), std::invalid_argument);
    actor.params = {{"speed", 1.0}, {"trigger", 0.0}};
    CHECK_THROWS_AS(actor.validate(), std::invalid_argument);
    actor.params = {{"speed", 1.0}, {"bogus", 2.0}};
    CHECK_THROWS_AS(actor.validate(), std::invalid_argument);
    actor.params = {{"speed", 1.0}, {"trigger", 5.0}};
    CHECK_NOTHROW(actor.validate());
}
