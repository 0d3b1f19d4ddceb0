#include "adloop/scengen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace adloop::scengen {

namespace {

using adapters::ModelRequest;
using adapters::ModelResponse;
using nlohmann::json;

const std::set<std::string> kDslParams = {
    "speed", "trigger", "ahead", "decel", "merge_rate",
    "red_s", "green_s", "phase0", "zone_len", "walk_past",
};

std::string shortest_repr(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct Token {
    std::string text;
    int column = 0;  // 1-based
};

std::vector<Token> tokenize(const std::string& line) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        tokens.push_back(Token{line.substr(start, i - start), static_cast<int>(start) + 1});
    }
    return tokens;
}

bool iequals(const std::string& a, const char* b) {
    const std::size_t n = std::strlen(b);
    if (a.size() != n) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

struct LineParseError {
    int column;
    std::string message;
};

std::optional<LineParseError> parse_pair(const Token& token, std::string& key, double& value) {
    const std::size_t eq = token.text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= token.text.size()) {
        return LineParseError{token.column, "expected key=value, got '" + token.text + "'"};
    }
    key = token.text.substr(0, eq);
    const std::string raw = token.text.substr(eq + 1);
    char* end = nullptr;
    value = std::strtod(raw.c_str(), &end);
    if (end != raw.c_str() + raw.size() || !std::isfinite(value)) {
        return LineParseError{token.column + static_cast<int>(eq) + 1,
                              "bad numeric value '" + raw + "' for " + key};
    }
    return std::nullopt;
}

/// Parses one ACTOR statement; the actor id is filled by the caller.
std::optional<LineParseError> parse_actor_line(const std::vector<Token>& tokens,
                                               sim::ActorSpec& out) {
    if (tokens.size() < 4) return LineParseError{1, "ACTOR line too short"};

    auto kind = sim::actor_kind_from_string(tokens[1].text);
    if (!kind) return LineParseError{tokens[1].column, "unknown actor kind '" + tokens[1].text + "'"};
    out.kind = *kind;

    if (!iequals(tokens[2].text, "AT")) {
        return LineParseError{tokens[2].column, "expected AT, got '" + tokens[2].text + "'"};
    }

    std::size_t i = 3;
    bool have_progress = false;
    double ahead = 10.0;
    out.spawn.relative = true;
    out.spawn.y = 0.0;
    for (; i < tokens.size() && !iequals(tokens[i].text, "BEHAVIOR"); ++i) {
        std::string key;
        double value = 0.0;
        if (auto err = parse_pair(tokens[i], key, value)) return err;
        if (key == "progress") {
            if (value <= 0.0 || value >= 1.0) {
                return LineParseError{tokens[i].column, "progress must be in (0,1)"};
            }
            out.trigger_progress = value;
            have_progress = true;
        } else if (key == "offset") {
            out.spawn.y = value;
        } else {
            return LineParseError{tokens[i].column, "unknown placement field '" + key + "'"};
        }
    }
    if (!have_progress) return LineParseError{tokens[2].column, "missing progress field"};
    if (i >= tokens.size()) {
        return LineParseError{tokens.back().column, "missing BEHAVIOR clause"};
    }
    if (i + 1 >= tokens.size()) {
        return LineParseError{tokens[i].column, "BEHAVIOR needs a name"};
    }

    auto behavior = sim::behavior_from_string(tokens[i + 1].text);
    if (!behavior) {
        return LineParseError{tokens[i + 1].column,
                              "unknown behavior '" + tokens[i + 1].text + "'"};
    }
    out.behavior = *behavior;

    for (std::size_t k = i + 2; k < tokens.size(); ++k) {
        std::string key;
        double value = 0.0;
        if (auto err = parse_pair(tokens[k], key, value)) return err;
        if (key == "ahead") {
            ahead = value;
        } else if (kDslParams.count(key)) {
            out.params[key] = value;
        } else {
            return LineParseError{tokens[k].column, "unknown behavior param '" + key + "'"};
        }
    }
    out.spawn.x = ahead;

    try {
        out.actor_id = "a0";  // placeholder so validate() passes; caller renumbers
        out.validate();
    } catch (const std::invalid_argument& e) {
        return LineParseError{1, e.what()};
    }
    return std::nullopt;
}

bool looks_like_dsl(const std::vector<Token>& tokens) {
    return !tokens.empty() && (iequals(tokens[0].text, "ACTOR") || iequals(tokens[0].text, "DESC"));
}

struct BlockParse {
    std::optional<ScenarioSpec> spec;
    DslError error;
};

BlockParse parse_block(const std::vector<std::pair<int, std::string>>& lines) {
    ScenarioSpec spec;
    spec.scenario_id = "scenario";
    bool have_desc = false;
    for (const auto& [line_no, text] : lines) {
        const std::vector<Token> tokens = tokenize(text);
        if (iequals(tokens[0].text, "DESC")) {
            if (have_desc) {
                return BlockParse{std::nullopt, DslError{line_no, tokens[0].column, "duplicate DESC"}};
            }
            const std::size_t at = text.find(tokens[0].text) + tokens[0].text.size();
            std::size_t start = at;
            while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) {
                ++start;
            }
            spec.description = text.substr(start);
            have_desc = true;
            continue;
        }
        sim::ActorSpec actor;
        if (auto err = parse_actor_line(tokens, actor)) {
            return BlockParse{std::nullopt, DslError{line_no, err->column, err->message}};
        }
        actor.actor_id = "a" + std::to_string(spec.actors.size() + 1);
        spec.actors.push_back(std::move(actor));
    }
    if (spec.actors.empty()) {
        return BlockParse{std::nullopt,
                          DslError{lines.front().first, 1, "block has no ACTOR statement"}};
    }
    return BlockParse{std::move(spec), DslError{}};
}

}  // namespace

std::string DslError::to_string() const {
    std::ostringstream os;
    os << "line " << line << ", column " << column << ": " << message;
    return os.str();
}

DslParseResult parse_dsl(const std::string& text) {
    // Split into lines, treating code fences as blanks.
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("```", 0) == 0) line.clear();
        lines.push_back(line);
    }

    // Candidate blocks: maximal runs of DSL-looking lines (blanks allowed
    // inside). The first block that parses wins; otherwise report the first
    // failure seen.
    std::optional<DslError> first_error;
    std::size_t i = 0;
    while (i < lines.size()) {
        if (!looks_like_dsl(tokenize(lines[i]))) {
            ++i;
            continue;
        }
        std::vector<std::pair<int, std::string>> block;
        std::size_t j = i;
        for (; j < lines.size(); ++j) {
            const std::vector<Token> tokens = tokenize(lines[j]);
            if (tokens.empty()) continue;  // blank inside a block
            if (!looks_like_dsl(tokens)) break;
            block.emplace_back(static_cast<int>(j) + 1, lines[j]);
        }
        BlockParse parsed = parse_block(block);
        if (parsed.spec) {
            return DslParseResult{std::move(parsed.spec), DslError{}};
        }
        if (!first_error) first_error = parsed.error;
        i = j > i ? j : i + 1;
    }
    if (first_error) return DslParseResult{std::nullopt, *first_error};
    return DslParseResult{std::nullopt, DslError{1, 1, "no DSL block found"}};
}

std::string format_dsl(const ScenarioSpec& spec) {
    std::ostringstream os;
    if (!spec.description.empty()) {
        std::string desc = spec.description;
        std::replace(desc.begin(), desc.end(), '\n', ' ');
        os << "DESC " << desc << "\n";
    }
    for (const sim::ActorSpec& a : spec.actors) {
        os << "ACTOR " << sim::to_string(a.kind) << " AT progress="
           << shortest_repr(a.trigger_progress) << " offset=" << shortest_repr(a.spawn.y)
           << " BEHAVIOR " << sim::to_string(a.behavior) << " ahead=" << shortest_repr(a.spawn.x);
        for (const auto& [key, value] : a.params) {
            os << " " << key << "=" << shortest_repr(value);
        }
        os << "\n";
    }
    return os.str();
}

StagePrompts load_stage_prompts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stage prompts: " + path);
    const json j = json::parse(in);
    StagePrompts prompts;
    prompts.perception = j.value("perception", prompts.perception);
    prompts.prediction = j.value("prediction", prompts.prediction);
    prompts.planning = j.value("planning", prompts.planning);
    return prompts;
}

P3Answers elicit_p3(adapters::Adapter& fast, const std::vector<core::Observation>& history,
                    const StagePrompts& prompts) {
    if (history.empty()) throw std::invalid_argument("elicit_p3: empty history");

    std::ostringstream scene;
    for (const core::Observation& obs : history) {
        if (obs.scene.kind == core::ScenePayload::Kind::text) {
            scene << obs.scene.text;
        } else {
            scene << "<image " << obs.scene.encoding << ">\n";
        }
    }

    P3Answers answers;
    auto ask = [&](const std::string& stage, const std::string& question, std::string& slot) {
        std::ostringstream prompt;
        prompt << question << "\n\nScene:\n" << scene.str();
        const ModelResponse r = fast.complete(ModelRequest{prompt.str(), {}});
        if (r.ok()) {
            slot = r.text;
        } else {
            slot.clear();
            answers.degraded = true;
            answers.failure_details.push_back(stage + ": " + adapters::to_string(r.status));
        }
    };
    ask("perception", prompts.perception, answers.perception);
    ask("prediction", prompts.prediction, answers.prediction);
    ask("planning", prompts.planning, answers.planning);
    return answers;
}

std::string default_grammar_reference() {
    return
        "Scenario DSL, one statement per line:\n"
        "  ACTOR <kind> AT progress=<p> offset=<m> BEHAVIOR <name> [param=value ...]\n"
        "  DESC <one-line free text>\n"
        "kinds: vehicle, pedestrian, static_obstacle, traffic_light\n"
        "behaviors: stationary, constant_velocity, cut_in, sudden_brake, crossing\n"
        "progress: fraction of the route in (0,1) at which the actor appears\n"
        "offset: lateral meters from lane center (positive = +steer side)\n"
        "params: ahead (spawn meters in front of ego, default 10), speed (m/s),\n"
        "        trigger (activation range m), decel, merge_rate, red_s, green_s,\n"
        "        phase0, zone_len, walk_past\n";
}

std::string build_fusion_prompt(const P3Answers& answers, const std::string& grammar_reference,
                                const std::string& repair_hint) {
    std::ostringstream os;
    os << "Fuse the three reasoning stages below into one threat-critical driving scenario.\n"
       << "Answer ONLY with statements in the scenario DSL.\n\n"
       << grammar_reference << "\nPerception:\n" << answers.perception << "\n\nPrediction:\n"
       << answers.prediction << "\n\nPlanning:\n" << answers.planning << "\n";
    if (!repair_hint.empty()) {
        os << "\nYour previous attempt failed to parse: " << repair_hint
           << "\nEmit a corrected DSL block.\n";
    }
    return os.str();
}

FuseResult fuse(const P3Answers& answers, adapters::Adapter& slow,
                const std::string& grammar_reference, const std::string& repair_hint) {
    const ModelResponse r =
        slow.complete(ModelRequest{build_fusion_prompt(answers, grammar_reference, repair_hint), {}});
    if (!r.ok()) {
        return FuseResult{false, "", std::string("fusion ") + adapters::to_string(r.status) +
                                         ": " + r.text};
    }
    return FuseResult{true, r.text, ""};
}

GenerateOutcome generate_suite(const std::vector<sim::RouteSpec>& routes,
                               adapters::Adapter& fast, adapters::Adapter& slow,
                               const GenerateOptions& options) {
    if (routes.empty()) throw std::invalid_argument("generate_suite: no routes");

    GenerateOutcome outcome;
    for (const sim::RouteSpec& route : routes) {
        // Deterministic per-route seed so elicitation sees the same scene
        // every run.
        std::uint64_t seed = 0xcbf29ce484222325ULL;
        for (char c : route.route_id) seed = (seed ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;

        sim::WorldState world = sim::load_route(route, std::nullopt, seed, options.sim_config);
        const std::vector<core::Observation> history = {
            sim::render_observation(world, sim::ObservationMode::text)};

        const P3Answers answers = elicit_p3(fast, history, options.stage_prompts);

        std::string repair_hint;
        bool emitted = false;
        for (int attempt = 0; attempt <= options.repair_budget; ++attempt) {
            const FuseResult fused = fuse(answers, slow, options.grammar_reference, repair_hint);
            if (!fused.ok) {
                outcome.skips.push_back(SkipEntry{route.route_id, fused.detail});
                break;
            }
            DslParseResult parsed = parse_dsl(fused.text);
            if (parsed.ok()) {
                ScenarioSpec spec = std::move(*parsed.spec);
                spec.scenario_id = route.route_id + "_threat";
                spec.base_route_id = route.route_id;
                outcome.scenarios.push_back(std::move(spec));
                outcome.repair_counts[route.route_id] = attempt;
                emitted = true;
                break;
            }
            repair_hint = parsed.error.to_string();
            if (attempt == options.repair_budget) {
                outcome.skips.push_back(
                    SkipEntry{route.route_id, "repair budget exhausted: " + repair_hint});
            }
        }
        (void)emitted;
    }
    return outcome;
}

void write_suite(const GenerateOutcome& outcome, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest = json::object();
    for (const ScenarioSpec& spec : outcome.scenarios) {
        manifest[spec.base_route_id] = spec.scenario_id;
        std::ofstream out(fs::path(dir) / (spec.scenario_id + ".json"));
        out << sim::to_json(spec).dump(2) << "\n";
    }
    std::ofstream mout(fs::path(dir) / "manifest.json");
    mout << manifest.dump(2) << "\n";
    if (!outcome.skips.empty()) {
        json skips = json::array();
        for (const SkipEntry& s : outcome.skips) {
            skips.push_back(json{{"route_id", s.route_id}, {"detail", s.detail}});
        }
        std::ofstream sout(fs::path(dir) / "skips.json");
        sout << skips.dump(2) << "\n";
    }
}

std::map<std::string, ScenarioSpec> load_suite(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream min(fs::path(dir) / "manifest.json");
    if (!min) throw std::runtime_error("suite manifest missing in " + dir);
    const json manifest = json::parse(min);
    std::map<std::string, ScenarioSpec> suite;
    for (auto it = manifest.begin(); it != manifest.end(); ++it) {
        const std::string file = (fs::path(dir) / (it.value().get<std::string>() + ".json")).string();
        suite[it.key()] = sim::load_scenario_file(file);
    }
    return suite;
}

}  // namespace adloop::scengen
