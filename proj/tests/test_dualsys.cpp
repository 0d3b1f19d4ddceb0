#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "adloop/dualsys.hpp"

using namespace adloop;

namespace {

core::Observation text_obs(std::int64_t frame, const std::string& text) {
    core::Observation obs;
    obs.frame_index = frame;
    obs.timestamp = 0.1 * static_cast<double>(frame);
    obs.scene = core::ScenePayload::from_text(text);
    return obs;
}

dualsys::SlowSystem scripted_slow(std::vector<adapters::ScriptRule> rules,
                                  dualsys::ParsingMode mode) {
    dualsys::SlowSystem slow;
    slow.adapter = adapters::scripted_adapter(std::move(rules));
    slow.prompt_template = dualsys::default_template(mode);
    if (mode == dualsys::ParsingMode::DCS) slow.candidates = dualsys::default_candidates();
    return slow;
}

}  // namespace

TEST_CASE("template validation enforces the candidates placeholder rule") {
    dualsys::PromptTemplate t;
    t.template_id = "x";
    t.mode = dualsys::ParsingMode::CNG;
    t.body = "cmd {command_text} scene {scene} {candidates}";
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t.body = "cmd {command_text} scene {scene}";
    CHECK_NOTHROW(t.validate());
    t.mode = dualsys::ParsingMode::DCS;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t.body += " pick one: {candidates}";
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("candidate set validation") {
    dualsys::CandidateSet c;
    c.entries.push_back({"STOP", core::make_control(0, 0, 1)});
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // needs >= 2
    c.entries.push_back({"stop", core::make_control(0, 0.5, 0)});
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // case-insensitive duplicate
    c.entries[1].label = "GO";
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(dualsys::default_candidates().validate());
    CHECK(dualsys::default_candidates().entries.size() == 7);
}

TEST_CASE("build_fast_prompts embeds task text and every history frame") {
    core::TaskSet tasks = dualsys::default_task_set();

    const auto one = dualsys::build_fast_prompts({text_obs(0, "scene zero")}, tasks);
    REQUIRE(one.size() == 3);
    CHECK(one[0].task == core::TaskId::action_prediction);
    CHECK(one[0].prompt.find(tasks.prompt_per_task.at(core::TaskId::action_prediction)) !=
          std::string::npos);
    CHECK(one[0].prompt.find("scene zero") != std::string::npos);

    const std::vector<core::Observation> three = {text_obs(0, "frame-a"), text_obs(1, "frame-b"),
                                                  text_obs(2, "frame-c")};
    const auto prompts = dualsys::build_fast_prompts(three, tasks);
    REQUIRE(prompts.size() == 3);
    for (const auto& p : prompts) {
        CHECK(p.prompt.find("frame-a") != std::string::npos);
        CHECK(p.prompt.find("frame-b") != std::string::npos);
        CHECK(p.prompt.find("frame-c") != std::string::npos);
    }

    CHECK_THROWS_AS(dualsys::build_fast_prompts({}, tasks), std::invalid_argument);
}

TEST_CASE("query_fast records per-task failures without throwing") {
    core::TaskSet tasks = dualsys::default_task_set();
    const auto prompts = dualsys::build_fast_prompts({text_obs(0, "s")}, tasks);

    auto ok = adapters::scripted_adapter({{"", "Keep going straight", adapters::CallStatus::ok}});
    const auto all_ok = dualsys::query_fast(*ok, prompts);
    CHECK(all_ok.commands.per_task_text.size() == 3);
    CHECK(all_ok.failures.empty());
    CHECK(*all_ok.commands.text_for(core::TaskId::action_prediction) == "Keep going straight");

    // The trajectory task prompt times out; the others answer.
    auto partial = adapters::scripted_adapter({
        {"trajectory", "", adapters::CallStatus::timeout},
        {"", "fine", adapters::CallStatus::ok},
    });
    const auto mixed = dualsys::query_fast(*partial, prompts);
    CHECK(mixed.commands.per_task_text.size() == 2);
    REQUIRE(mixed.failures.size() == 1);
    CHECK(mixed.failures[0].task == core::TaskId::trajectory_forecasting);
    CHECK(mixed.failures[0].status == adapters::CallStatus::timeout);

    auto broken = adapters::scripted_adapter({});
    const auto none = dualsys::query_fast(*broken, prompts);
    CHECK(none.commands.empty());
    CHECK(none.failures.size() == 3);
}

TEST_CASE("build_slow_prompt substitutes placeholders per mode") {
    const std::vector<core::Observation> history = {text_obs(0, "the scene text")};

    const std::string cng = dualsys::build_slow_prompt(
        "turn left slowly", history, dualsys::default_template(dualsys::ParsingMode::CNG),
        std::nullopt);
    CHECK(cng.find("turn left slowly") != std::string::npos);
    CHECK(cng.find("the scene text") != std::string::npos);
    CHECK(cng.find("{command_text}") == std::string::npos);
    CHECK(cng.find("{scene}") == std::string::npos);
    CHECK(cng.find("STOP") == std::string::npos);  // no candidate list in CNG

    const auto candidates = dualsys::default_candidates();
    const std::string dcs = dualsys::build_slow_prompt(
        "stop now", history, dualsys::default_template(dualsys::ParsingMode::DCS), candidates);
    for (const auto& entry : candidates.entries) {
        CHECK(dcs.find(entry.label) != std::string::npos);
    }

    CHECK_THROWS_AS(dualsys::build_slow_prompt("x", history,
                                               dualsys::default_template(dualsys::ParsingMode::DCS),
                                               std::nullopt),
                    std::invalid_argument);
}

TEST_CASE("parse_cng handles labeled fields in any order with prose") {
    auto u = dualsys::parse_cng("steer: -0.25, throttle: 0.4, brake: 0.0");
    REQUIRE(u.has_value());
    CHECK(u->steer == -0.25);
    CHECK(u->throttle == 0.4);
    CHECK(u->brake == 0.0);

    u = dualsys::parse_cng("I will brake. steer=0 throttle=0 brake=1.0");
    REQUIRE(u.has_value());
    CHECK(u->steer == 0.0);
    CHECK(u->throttle == 0.0);
    CHECK(u->brake == 1.0);

    u = dualsys::parse_cng("Brake 0.2 first, then Throttle 0.1 and Steering -0.5.");
    REQUIRE(u.has_value());
    CHECK(u->steer == -0.5);
    CHECK(u->throttle == 0.1);
    CHECK(u->brake == 0.2);
}

TEST_CASE("parse_cng rejects ambiguous or numberless responses") {
    CHECK_FALSE(dualsys::parse_cng("turn left a bit").has_value());
    CHECK_FALSE(dualsys::parse_cng("").has_value());
    // duplicated labeled value is ambiguous
    CHECK_FALSE(dualsys::parse_cng("steer: 0.1 steer: 0.3 throttle: 1 brake: 0").has_value());
    // two bare numbers are not enough, four are too many
    CHECK_FALSE(dualsys::parse_cng("0.1 0.2").has_value());
    CHECK_FALSE(dualsys::parse_cng("0.1 0.2 0.3 0.4").has_value());
}

TEST_CASE("parse_cng accepts exactly three positional numbers and clamps") {
    const auto u = dualsys::parse_cng("-0.4 0.9 0.0");
    REQUIRE(u.has_value());
    CHECK(u->steer == -0.4);
    CHECK(u->throttle == 0.9);

    const auto clamped = dualsys::parse_cng("steer: -3.5, throttle: 2.0, brake: -1.0");
    REQUIRE(clamped.has_value());
    CHECK(clamped->steer == -1.0);
    CHECK(clamped->throttle == 1.0);
    CHECK(clamped->brake == 0.0);
}

TEST_CASE("parse_cng inverts the canonical formatting of any valid control") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const auto u = core::clamp_control(uni(rng) * 2 - 1, uni(rng), uni(rng));
        const auto parsed = dualsys::parse_cng(core::format_control(u));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == u);
    }
}

TEST_CASE("select_dcs picks the matching candidate") {
    dualsys::CandidateSet candidates;
    candidates.entries = {
        {"STOP", core::make_control(0, 0, 1)},
        {"STRAIGHT", core::make_control(0, 0.5, 0)},
        {"TURN_LEFT", core::make_control(-0.5, 0.3, 0)},
    };
    auto u = dualsys::select_dcs("TURN_LEFT", candidates);
    REQUIRE(u.has_value());
    CHECK(u->steer == -0.5);

    u = dualsys::select_dcs("I choose STOP because the light is red", candidates);
    REQUIRE(u.has_value());
    CHECK(u->brake == 1.0);

    CHECK_FALSE(dualsys::select_dcs("accelerate hard", candidates).has_value());
}

TEST_CASE("select_dcs ties break on earliest occurrence then longest label") {
    const auto candidates = dualsys::default_candidates();

    // Earliest mention wins.
    auto u = dualsys::select_dcs("either STRAIGHT or STOP would do", candidates);
    REQUIRE(u.has_value());
    CHECK(u->throttle == 0.6);

    // HARD_LEFT contains LEFT at a later offset; the full label starts first.
    u = dualsys::select_dcs("hard_left", candidates);
    REQUIRE(u.has_value());
    CHECK(u->steer == -0.8);

    // Case-insensitive.
    u = dualsys::select_dcs("Stop.", candidates);
    REQUIRE(u.has_value());
    CHECK(u->brake == 1.0);

    // Always a member of the set.
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> pick(0, 6);
    for (int i = 0; i < 200; ++i) {
        const auto& entry = candidates.entries[static_cast<std::size_t>(pick(rng))];
        const auto selected = dualsys::select_dcs("response: " + entry.label + " thanks", candidates);
        REQUIRE(selected.has_value());
        CHECK(*selected == entry.control);
    }
}

TEST_CASE("fallback_action is the constant full-brake control") {
    const auto a = dualsys::fallback_action();
    const auto b = dualsys::fallback_action();
    CHECK(a == b);
    CHECK(a.steer == 0.0);
    CHECK(a.throttle == 0.0);
    CHECK(a.brake == 1.0);
    CHECK(core::control_in_range(a));
}

TEST_CASE("translate composes prompt, query, and parse") {
    const std::vector<core::Observation> history = {text_obs(0, "clear road")};

    auto slow_cng = scripted_slow({{"", "steer:0 throttle:0.5 brake:0", adapters::CallStatus::ok}},
                                  dualsys::ParsingMode::CNG);
    auto outcome =
        dualsys::translate("Keep going straight", history, dualsys::ParsingMode::CNG, slow_cng);
    CHECK_FALSE(outcome.used_fallback);
    CHECK(outcome.control == core::make_control(0, 0.5, 0));

    auto slow_dcs = scripted_slow({{"", "STOP", adapters::CallStatus::ok}},
                                  dualsys::ParsingMode::DCS);
    outcome = dualsys::translate("halt", history, dualsys::ParsingMode::DCS, slow_dcs);
    CHECK_FALSE(outcome.used_fallback);
    CHECK(outcome.control == core::make_control(0, 0, 1));
}

TEST_CASE("translate degrades to fallback on every failure path") {
    const std::vector<core::Observation> history = {text_obs(0, "scene")};

    auto timing_out = scripted_slow({{"", "", adapters::CallStatus::timeout}},
                                    dualsys::ParsingMode::CNG);
    auto outcome = dualsys::translate("go", history, dualsys::ParsingMode::CNG, timing_out);
    CHECK(outcome.used_fallback);
    CHECK(outcome.control == dualsys::fallback_action());
    CHECK_FALSE(outcome.failure_detail.empty());

    auto unparsable = scripted_slow({{"", "I refuse to answer with numbers",
                                      adapters::CallStatus::ok}},
                                    dualsys::ParsingMode::CNG);
    outcome = dualsys::translate("go", history, dualsys::ParsingMode::CNG, unparsable);
    CHECK(outcome.used_fallback);

    outcome = dualsys::translate("", history, dualsys::ParsingMode::CNG, timing_out);
    CHECK(outcome.used_fallback);
}

TEST_CASE("every control leaving translate is in range under fuzzed adapters") {
    const std::vector<core::Observation> history = {text_obs(0, "scene")};
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 4);

    for (int i = 0; i < 500; ++i) {
        std::string response;
        switch (coin(rng)) {
            case 0: response = "steer: " + std::to_string(uni(rng) * 10 - 5) +
                               " throttle: " + std::to_string(uni(rng) * 4) +
                               " brake: " + std::to_string(uni(rng) * 4 - 2); break;
            case 1: response = "gibberish with one number " + std::to_string(uni(rng)); break;
            case 2: response = "STOP maybe STRAIGHT"; break;
            case 3: response = ""; break;
            default: response = std::to_string(uni(rng)) + " " + std::to_string(uni(rng)) + " " +
                                std::to_string(uni(rng));
        }
        const auto status = coin(rng) == 0 ? adapters::CallStatus::timeout : adapters::CallStatus::ok;
        const auto mode = coin(rng) < 2 ? dualsys::ParsingMode::CNG : dualsys::ParsingMode::DCS;
        auto slow = scripted_slow({{"", response, status}}, mode);
        const auto outcome = dualsys::translate("cmd", history, mode, slow);
        CHECK(core::control_in_range(outcome.control));
    }
}

TEST_CASE("apply_suffix_control appends configured suffixes to matching prefixes") {
    dualsys::SuffixTable table;
    table.entries = {{"Keep going straight", " with speed = 0.5"}};

    CHECK(dualsys::apply_suffix_control("Keep going straight", table) ==
          "Keep going straight with speed = 0.5");
    CHECK(dualsys::apply_suffix_control("Turn left", table) == "Turn left");
    CHECK(dualsys::apply_suffix_control("Keep going straight then stop", table) ==
          "Keep going straight then stop with speed = 0.5");

    const dualsys::SuffixTable empty;
    CHECK(dualsys::apply_suffix_control("anything", empty) == "anything");
}

TEST_CASE("hybrid_mode_select classifies by the leading token") {
    const std::vector<core::Observation> history = {text_obs(0, "scene")};
    const std::string question = dualsys::default_threat_question();

    auto yes = adapters::scripted_adapter({{"", "Yes, a pedestrian is crossing",
                                            adapters::CallStatus::ok}});
    CHECK(dualsys::hybrid_mode_select(*yes, history, question) == dualsys::SlowChoice::risk_mode);

    auto no = adapters::scripted_adapter({{"", "No.", adapters::CallStatus::ok}});
    CHECK(dualsys::hybrid_mode_select(*no, history, question) == dualsys::SlowChoice::default_mode);

    auto unclear = adapters::scripted_adapter({{"", "Unclear", adapters::CallStatus::ok}});
    CHECK(dualsys::hybrid_mode_select(*unclear, history, question) ==
          dualsys::SlowChoice::default_mode);

    auto failing = adapters::scripted_adapter({});
    CHECK(dualsys::hybrid_mode_select(*failing, history, question) ==
          dualsys::SlowChoice::default_mode);
}

TEST_CASE("templates, candidates, and suffix tables load from JSON") {
    using nlohmann::json;
    const json tj{{"template_id", "t1"},
                  {"mode", "CNG"},
                  {"body", "do {command_text} given {scene}"}};
    const auto tmpl = dualsys::template_from_json(tj);
    CHECK(tmpl.template_id == "t1");

    const json cj{{"entries", json::array({
                      json{{"label", "A"}, {"control", json{{"steer", 0.0}, {"throttle", 0.1}, {"brake", 0.0}}}},
                      json{{"label", "B"}, {"control", json{{"steer", 0.5}, {"throttle", 0.2}, {"brake", 0.0}}}},
                  })}};
    const auto cand = dualsys::candidates_from_json(cj);
    CHECK(cand.entries.size() == 2);

    const json sj{{"entries", json::array({json{{"pattern", "Go"}, {"suffix", " fast"}}})}};
    const auto table = dualsys::suffix_table_from_json(sj);
    CHECK(dualsys::apply_suffix_control("Go", table) == "Go fast");
}
