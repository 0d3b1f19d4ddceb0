#include <doctest.h>

#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "adloop/scengen.hpp"

using namespace adloop;

namespace {

core::Observation text_obs(const std::string& text) {
    core::Observation obs;
    obs.scene = core::ScenePayload::from_text(text);
    return obs;
}

sim::RouteSpec route_with_id(const std::string& id) {
    sim::RouteSpec r;
    r.route_id = id;
    r.waypoints = {{0, 0}, {80, 0}};
    r.lane_half_width = 1.75;
    r.speed_limit = 5.0;
    return r;
}

bool actors_equal(const sim::ActorSpec& a, const sim::ActorSpec& b) {
    return a.actor_id == b.actor_id && a.kind == b.kind && a.behavior == b.behavior &&
           a.spawn.relative == b.spawn.relative && a.spawn.x == b.spawn.x &&
           a.spawn.y == b.spawn.y && a.trigger_progress == b.trigger_progress &&
           a.params == b.params;
}

const char* kValidBlock =
    "ACTOR vehicle AT progress=0.5 offset=0 BEHAVIOR cut_in speed=6 trigger=15";

}  // namespace

TEST_CASE("parse_dsl compiles a single cut_in actor line") {
    const auto result = scengen::parse_dsl(kValidBlock);
    REQUIRE(result.ok());
    const auto& spec = *result.spec;
    REQUIRE(spec.actors.size() == 1);
    CHECK(spec.actors[0].kind == sim::ActorKind::vehicle);
    CHECK(spec.actors[0].behavior == sim::BehaviorKind::cut_in);
    CHECK(spec.actors[0].trigger_progress == 0.5);
    CHECK(spec.actors[0].params.at("speed") == 6.0);
    CHECK(spec.actors[0].params.at("trigger") == 15.0);
}

TEST_CASE("parse_dsl reports out-of-range progress naming the field") {
    const auto result = scengen::parse_dsl(
        "ACTOR vehicle AT progress=1.5 offset=0 BEHAVIOR cut_in speed=6");
    REQUIRE_FALSE(result.ok());
    CHECK(result.error.message.find("progress") != std::string::npos);
    CHECK(result.error.line == 1);
}

TEST_CASE("parse_dsl extracts the block from surrounding prose") {
    std::mt19937_64 rng(31);
    const std::vector<std::string> prose = {
        "Sure! Here is the threat scenario you asked for.",
        "The ego vehicle approaches an intersection.",
        "I think the most dangerous actor is the lead vehicle.",
        "Hope this helps -- let me know if you need anything else.",
        "```",
    };
    std::uniform_int_distribution<std::size_t> pick(0, prose.size() - 1);
    std::uniform_int_distribution<int> count(0, 3);

    const auto direct = scengen::parse_dsl(kValidBlock);
    REQUIRE(direct.ok());

    for (int i = 0; i < 200; ++i) {
        std::string text;
        for (int k = count(rng); k > 0; --k) text += prose[pick(rng)] + "\n";
        text += std::string(kValidBlock) + "\n";
        for (int k = count(rng); k > 0; --k) text += prose[pick(rng)] + "\n";

        const auto wrapped = scengen::parse_dsl(text);
        REQUIRE(wrapped.ok());
        REQUIRE(wrapped.spec->actors.size() == direct.spec->actors.size());
        CHECK(actors_equal(wrapped.spec->actors[0], direct.spec->actors[0]));
    }
}

TEST_CASE("parse_dsl reports the first failure when no block parses") {
    const auto result = scengen::parse_dsl("some prose\n\nACTOR spaceship AT progress=0.5");
    REQUIRE_FALSE(result.ok());
    CHECK(result.error.line == 3);
    CHECK(result.error.message.find("spaceship") != std::string::npos);

    const auto empty = scengen::parse_dsl("nothing to see here");
    REQUIRE_FALSE(empty.ok());
    CHECK(empty.error.message.find("no DSL block") != std::string::npos);
}

TEST_CASE("parse_dsl skips a malformed early block when a later one parses") {
    const std::string text = std::string("ACTOR typo list:\n\nreal block below\n") + kValidBlock;
    const auto result = scengen::parse_dsl(text);
    REQUIRE(result.ok());
    CHECK(result.spec->actors.size() == 1);
}

TEST_CASE("format_dsl then parse_dsl is the identity on randomized specs") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> kind_pick(0, 3);
    std::uniform_int_distribution<int> behavior_pick(0, 4);
    std::uniform_int_distribution<int> actor_count(1, 4);
    const sim::ActorKind kinds[] = {sim::ActorKind::vehicle, sim::ActorKind::pedestrian,
                                    sim::ActorKind::static_obstacle, sim::ActorKind::traffic_light};
    const sim::BehaviorKind behaviors[] = {
        sim::BehaviorKind::stationary, sim::BehaviorKind::constant_velocity,
        sim::BehaviorKind::cut_in, sim::BehaviorKind::sudden_brake, sim::BehaviorKind::crossing};

    for (int t = 0; t < 500; ++t) {
        sim::ScenarioSpec spec;
        spec.scenario_id = "scenario";
        const int n = actor_count(rng);
        for (int a = 0; a < n; ++a) {
            sim::ActorSpec actor;
            actor.actor_id = "a" + std::to_string(a + 1);
            actor.kind = kinds[kind_pick(rng)];
            actor.behavior = behaviors[behavior_pick(rng)];
            actor.trigger_progress = 0.001 + uni(rng) * 0.998;
            actor.spawn = {true, uni(rng) * 30.0, uni(rng) * 8.0 - 4.0, 0.0};
            actor.params["speed"] = uni(rng) * 8.0;
            if (uni(rng) < 0.7) actor.params["trigger"] = 1.0 + uni(rng) * 20.0;
            if (uni(rng) < 0.3) actor.params["merge_rate"] = 0.5 + uni(rng);
            spec.actors.push_back(std::move(actor));
        }
        if (uni(rng) < 0.5) spec.description = "threat variant " + std::to_string(t);

        const std::string text = scengen::format_dsl(spec);
        const auto parsed = scengen::parse_dsl(text);
        REQUIRE(parsed.ok());
        REQUIRE(parsed.spec->actors.size() == spec.actors.size());
        for (std::size_t a = 0; a < spec.actors.size(); ++a) {
            CHECK(actors_equal(parsed.spec->actors[a], spec.actors[a]));
        }
        CHECK(parsed.spec->description == spec.description);
    }
}

TEST_CASE("elicit_p3 collects three stage answers") {
    auto fast = adapters::scripted_adapter({
        {"happening in the scene", "a car ahead", adapters::CallStatus::ok},
        {"influence", "the car may stop", adapters::CallStatus::ok},
        {"next action", "slow down", adapters::CallStatus::ok},
    });
    const auto answers = scengen::elicit_p3(*fast, {text_obs("scene")});
    CHECK(answers.perception == "a car ahead");
    CHECK(answers.prediction == "the car may stop");
    CHECK(answers.planning == "slow down");
    CHECK_FALSE(answers.degraded);
}

TEST_CASE("elicit_p3 degrades failed stages to empty strings") {
    auto fast = adapters::scripted_adapter({
        {"influence", "", adapters::CallStatus::timeout},
        {"", "fine", adapters::CallStatus::ok},
    });
    const auto answers = scengen::elicit_p3(*fast, {text_obs("scene")});
    CHECK(answers.perception == "fine");
    CHECK(answers.prediction.empty());
    CHECK(answers.planning == "fine");
    CHECK(answers.degraded);
    REQUIRE(answers.failure_details.size() == 1);

    auto dead = adapters::scripted_adapter({});
    const auto silent = scengen::elicit_p3(*dead, {text_obs("scene")});
    CHECK(silent.perception.empty());
    CHECK(silent.prediction.empty());
    CHECK(silent.planning.empty());
    CHECK(silent.degraded);
}

TEST_CASE("the fusion prompt embeds all three answers verbatim") {
    scengen::P3Answers answers;
    answers.perception = "PERCEPTION-TEXT-XYZ";
    answers.prediction = "PREDICTION-TEXT-ABC";
    answers.planning = "PLANNING-TEXT-123";
    const std::string prompt =
        scengen::build_fusion_prompt(answers, scengen::default_grammar_reference());
    CHECK(prompt.find(answers.perception) != std::string::npos);
    CHECK(prompt.find(answers.prediction) != std::string::npos);
    CHECK(prompt.find(answers.planning) != std::string::npos);
    CHECK(prompt.find("ACTOR") != std::string::npos);  // grammar reference included
}

TEST_CASE("fuse returns the raw block or a failure detail") {
    scengen::P3Answers answers;
    auto slow = adapters::scripted_adapter({{"", kValidBlock, adapters::CallStatus::ok}});
    const auto ok = scengen::fuse(answers, *slow, scengen::default_grammar_reference());
    CHECK(ok.ok);
    CHECK(ok.text == kValidBlock);

    auto dead = adapters::scripted_adapter({{"", "", adapters::CallStatus::timeout}});
    const auto fail = scengen::fuse(answers, *dead, scengen::default_grammar_reference());
    CHECK_FALSE(fail.ok);
    CHECK_FALSE(fail.detail.empty());
}

TEST_CASE("generate_suite pairs one scenario per route") {
    std::vector<sim::RouteSpec> routes;
    for (int i = 0; i < 5; ++i) routes.push_back(route_with_id("route_" + std::to_string(i)));

    auto fast = adapters::scripted_adapter({{"", "something is ahead", adapters::CallStatus::ok}});
    auto slow = adapters::scripted_adapter({{"", kValidBlock, adapters::CallStatus::ok}});
    const auto outcome = scengen::generate_suite(routes, *fast, *slow);
    CHECK(outcome.scenarios.size() == 5);
    CHECK(outcome.skips.empty());
    for (std::size_t i = 0; i < outcome.scenarios.size(); ++i) {
        CHECK(outcome.scenarios[i].base_route_id == routes[i].route_id);
        CHECK(outcome.scenarios[i].scenario_id == routes[i].route_id + "_threat");
        CHECK_NOTHROW(outcome.scenarios[i].validate());
        // Every emitted scenario loads into the simulator.
        CHECK_NOTHROW(sim::load_route(routes[i], outcome.scenarios[i], 1));
    }
}

TEST_CASE("generate_suite repairs one bad emission and logs hopeless routes") {
    const auto routes = std::vector<sim::RouteSpec>{route_with_id("r1")};

    auto fast = adapters::scripted_adapter({{"", "scene summary", adapters::CallStatus::ok}});
    // First fusion emits garbage; the repair re-prompt (which carries the
    // parse error) matches the first rule and emits a valid block.
    auto repairing = adapters::scripted_adapter({
        {"previous attempt failed to parse", kValidBlock, adapters::CallStatus::ok},
        {"", "ACTOR gremlin AT progress=0.5 BEHAVIOR lurk", adapters::CallStatus::ok},
    });
    const auto repaired = scengen::generate_suite(routes, *fast, *repairing);
    CHECK(repaired.scenarios.size() == 1);
    CHECK(repaired.repair_counts.at("r1") == 1);

    auto hopeless = adapters::scripted_adapter({{"", "no dsl here", adapters::CallStatus::ok}});
    const auto skipped = scengen::generate_suite(routes, *fast, *hopeless);
    CHECK(skipped.scenarios.empty());
    REQUIRE(skipped.skips.size() == 1);
    CHECK(skipped.skips[0].route_id == "r1");
}

TEST_CASE("generate_suite is deterministic under scripted adapters") {
    std::vector<sim::RouteSpec> routes;
    for (int i = 0; i < 3; ++i) routes.push_back(route_with_id("d" + std::to_string(i)));
    auto fast = adapters::scripted_adapter({{"", "stable answer", adapters::CallStatus::ok}});
    auto slow = adapters::scripted_adapter({{"", kValidBlock, adapters::CallStatus::ok}});

    const auto a = scengen::generate_suite(routes, *fast, *slow);
    const auto b = scengen::generate_suite(routes, *fast, *slow);
    REQUIRE(a.scenarios.size() == b.scenarios.size());
    for (std::size_t i = 0; i < a.scenarios.size(); ++i) {
        CHECK(sim::to_json(a.scenarios[i]) == sim::to_json(b.scenarios[i]));
    }
}

TEST_CASE("suite write/load round-trips through the manifest") {
    const std::string dir = "build/test_suite_dir";
    std::filesystem::remove_all(dir);

    std::vector<sim::RouteSpec> routes = {route_with_id("w1"), route_with_id("w2")};
    auto fast = adapters::scripted_adapter({{"", "x", adapters::CallStatus::ok}});
    auto slow = adapters::scripted_adapter({{"", kValidBlock, adapters::CallStatus::ok}});
    const auto outcome = scengen::generate_suite(routes, *fast, *slow);
    scengen::write_suite(outcome, dir);

    const auto loaded = scengen::load_suite(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.at("w1").scenario_id == "w1_threat");
    CHECK(loaded.at("w2").actors.size() == 1);
    std::filesystem::remove_all(dir);
}
