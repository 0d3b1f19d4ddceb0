#ifndef ADLOOP_SCENGEN_HPP
#define ADLOOP_SCENGEN_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adloop/adapters.hpp"
#include "adloop/core.hpp"
#include "adloop/sim.hpp"

namespace adloop::scengen {

using sim::ScenarioSpec;

/// Answers to the three-stage elicitation. Failed stages carry empty
/// strings and set the degraded flag.
struct P3Answers {
    std::string perception;
    std::string prediction;
    std::string planning;
    bool degraded = false;
    std::vector<std::string> failure_details;
};

struct StagePrompts {
    std::string perception = "Describe what is happening in the scene right now.";
    std::string prediction =
        "Identify the factors most likely to influence how this scene evolves in the next "
        "few seconds.";
    std::string planning = "Determine the appropriate next action for the ego vehicle.";
};

/// Loads stage queries from a JSON file with keys perception, prediction,
/// and planning; missing keys keep their defaults.
StagePrompts load_stage_prompts(const std::string& path);

P3Answers elicit_p3(adapters::Adapter& fast, const std::vector<core::Observation>& history,
                    const StagePrompts& prompts = StagePrompts{});

/// One-line-per-statement scenario grammar reference, embedded verbatim in
/// fusion prompts and shipped as a grammar file.
std::string default_grammar_reference();

std::string build_fusion_prompt(const P3Answers& answers, const std::string& grammar_reference,
                                const std::string& repair_hint = "");

struct FuseResult {
    bool ok = false;
    std::string text;    // raw model output when ok
    std::string detail;  // failure diagnostic otherwise
};

/// Fuses the three answers into a threat description in the scenario DSL
/// via the slow system. Adapter failures are reported, not thrown.
FuseResult fuse(const P3Answers& answers, adapters::Adapter& slow,
                const std::string& grammar_reference, const std::string& repair_hint = "");

struct DslError {
    int line = 0;  // 1-based; 0 when not applicable
    int column = 0;
    std::string message;

    std::string to_string() const;
};

struct DslParseResult {
    std::optional<ScenarioSpec> spec;
    DslError error;  // valid when !spec

    bool ok() const { return spec.has_value(); }
};

/// Parses the first well-formed DSL block out of surrounding prose.
/// Actor ids are positional (a1, a2, ...); scenario and route ids are
/// assigned by the caller afterwards.
DslParseResult parse_dsl(const std::string& text);

/// Canonical DSL text for a scenario; parse_dsl(format_dsl(s)) round-trips
/// every DSL-carried field exactly.
std::string format_dsl(const ScenarioSpec& spec);

struct SkipEntry {
    std::string route_id;
    std::string detail;
};

struct GenerateOptions {
    int repair_budget = 3;  // re-prompts appending the parse error
    StagePrompts stage_prompts;
    std::string grammar_reference = default_grammar_reference();
    sim::SimConfig sim_config;
};

struct GenerateOutcome {
    std::vector<ScenarioSpec> scenarios;
    std::vector<SkipEntry> skips;
    std::map<std::string, int> repair_counts;  // route_id -> repairs used
};

/// One scenario attempted per route; parse failures trigger repair
/// re-prompts up to the budget. Deterministic under scripted adapters.
GenerateOutcome generate_suite(const std::vector<sim::RouteSpec>& routes,
                               adapters::Adapter& fast, adapters::Adapter& slow,
                               const GenerateOptions& options = GenerateOptions{});

/// Persists scenarios as one JSON file each plus a manifest mapping
/// route_id -> scenario_id, and a skip log when anything was skipped.
void write_suite(const GenerateOutcome& outcome, const std::string& dir);

/// Loads a suite directory back into route_id -> ScenarioSpec.
std::map<std::string, ScenarioSpec> load_suite(const std::string& dir);

}  // namespace adloop::scengen

#endif
