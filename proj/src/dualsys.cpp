#include "adloop/dualsys.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

namespace adloop::dualsys {

namespace {

using adapters::CallStatus;
using adapters::ModelRequest;
using adapters::ModelResponse;
using core::ControlVector;
using core::Observation;
using nlohmann::json;

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string scene_history_text(const std::vector<Observation>& history) {
    std::ostringstream os;
    for (const Observation& obs : history) {
        os << "[frame " << obs.frame_index << "] ";
        if (obs.scene.kind == core::ScenePayload::Kind::text) {
            os << obs.scene.text;
            if (obs.scene.text.empty() || obs.scene.text.back() != '\n') os << "\n";
        } else {
            os << "<image " << obs.scene.encoding << " " << obs.scene.image.size() << " bytes>\n";
        }
    }
    return os.str();
}

std::vector<adapters::ImagePayload> collect_images(const std::vector<Observation>& history) {
    std::vector<adapters::ImagePayload> images;
    for (const Observation& obs : history) {
        if (obs.scene.kind == core::ScenePayload::Kind::image) {
            images.push_back(adapters::ImagePayload{obs.scene.image, obs.scene.encoding});
        }
    }
    return images;
}

}  // namespace

const char* to_string(ParsingMode m) { return m == ParsingMode::CNG ? "CNG" : "DCS"; }

std::optional<ParsingMode> parsing_mode_from_string(const std::string& s) {
    if (s == "CNG" || s == "cng") return ParsingMode::CNG;
    if (s == "DCS" || s == "dcs") return ParsingMode::DCS;
    return std::nullopt;
}

void PromptTemplate::validate() const {
    if (template_id.empty()) throw std::invalid_argument("template: empty template_id");
    if (body.find("{command_text}") == std::string::npos) {
        throw std::invalid_argument("template " + template_id + ": missing {command_text}");
    }
    const bool has_candidates = body.find("{candidates}") != std::string::npos;
    if (mode == ParsingMode::CNG && has_candidates) {
        throw std::invalid_argument("template " + template_id + ": CNG must omit {candidates}");
    }
    if (mode == ParsingMode::DCS && !has_candidates) {
        throw std::invalid_argument("template " + template_id + ": DCS requires {candidates}");
    }
}

void CandidateSet::validate() const {
    if (entries.size() < 2) throw std::invalid_argument("candidates: need >= 2 entries");
    std::vector<std::string> seen;
    for (const Entry& e : entries) {
        if (e.label.empty()) throw std::invalid_argument("candidates: empty label");
        const std::string lower = to_lower(e.label);
        if (std::find(seen.begin(), seen.end(), lower) != seen.end()) {
            throw std::invalid_argument("candidates: duplicate label " + e.label);
        }
        seen.push_back(lower);
        if (!core::control_in_range(e.control)) {
            throw std::invalid_argument("candidates: control out of range for " + e.label);
        }
    }
}

CandidateSet default_candidates() {
    CandidateSet c;
    c.entries = {
        {"STOP", core::make_control(0.0, 0.0, 1.0)},
        {"STRAIGHT_SLOW", core::make_control(0.0, 0.3, 0.0)},
        {"STRAIGHT", core::make_control(0.0, 0.6, 0.0)},
        {"LEFT", core::make_control(-0.4, 0.3, 0.0)},
        {"RIGHT", core::make_control(0.4, 0.3, 0.0)},
        {"HARD_LEFT", core::make_control(-0.8, 0.2, 0.0)},
        {"HARD_RIGHT", core::make_control(0.8, 0.2, 0.0)},
    };
    return c;
}

std::vector<TaskPrompt> build_fast_prompts(const std::vector<Observation>& history,
                                           const core::TaskSet& tasks) {
    if (history.empty()) throw std::invalid_argument("build_fast_prompts: empty history");
    tasks.validate();

    const std::string scene = scene_history_text(history);
    auto images = collect_images(history);

    std::vector<TaskPrompt> prompts;
    for (core::TaskId task : tasks.tasks) {
        std::ostringstream os;
        os << tasks.prompt_per_task.at(task) << "\n\nObservation history (most recent last):\n"
           << scene << "\nTask: " << core::to_string(task) << "\n";
        prompts.push_back(TaskPrompt{task, os.str(), images});
    }
    return prompts;
}

FastResult query_fast(adapters::Adapter& fast, const std::vector<TaskPrompt>& prompts) {
    FastResult result;
    for (const TaskPrompt& p : prompts) {
        const ModelResponse r = fast.complete(ModelRequest{p.prompt, p.images});
        if (r.ok()) {
            result.commands.per_task_text[p.task] = r.text;
        } else {
            result.failures.push_back(TaskFailure{p.task, r.status, r.text});
        }
    }
    return result;
}

std::string format_candidates(const CandidateSet& candidates) {
    std::ostringstream os;
    for (std::size_t i = 0; i < candidates.entries.size(); ++i) {
        if (i) os << "\n";
        os << "- " << candidates.entries[i].label;
    }
    return os.str();
}

std::string build_slow_prompt(const std::string& command,
                              const std::vector<Observation>& history,
                              const PromptTemplate& tmpl,
                              const std::optional<CandidateSet>& candidates) {
    tmpl.validate();
    if (tmpl.mode == ParsingMode::DCS && !candidates) {
        throw std::invalid_argument("build_slow_prompt: DCS template requires candidates");
    }
    if (tmpl.mode == ParsingMode::CNG && candidates) {
        throw std::invalid_argument("build_slow_prompt: CNG template takes no candidates");
    }
    if (candidates) candidates->validate();

    // Single pass so substituted text is never rescanned for placeholders.
    std::string out;
    out.reserve(tmpl.body.size() + command.size());
    std::size_t pos = 0;
    while (pos < tmpl.body.size()) {
        const std::size_t brace = tmpl.body.find('{', pos);
        if (brace == std::string::npos) {
            out.append(tmpl.body, pos, std::string::npos);
            break;
        }
        out.append(tmpl.body, pos, brace - pos);
        if (tmpl.body.compare(brace, 14, "{command_text}") == 0) {
            out += command;
            pos = brace + 14;
        } else if (tmpl.body.compare(brace, 7, "{scene}") == 0) {
            out += scene_history_text(history);
            pos = brace + 7;
        } else if (tmpl.body.compare(brace, 12, "{candidates}") == 0) {
            out += format_candidates(*candidates);
            pos = brace + 12;
        } else {
            out += '{';
            pos = brace + 1;
        }
    }
    return out;
}

std::optional<core::ControlVector> parse_cng(const std::string& response) {
    static const std::regex labeled(
        R"((steer(?:ing)?|throttle|brak(?:e|ing))\s*[:=]?\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))",
        std::regex::icase);
    static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");

    double steer = 0.0, throttle = 0.0, brake = 0.0;
    int n_steer = 0, n_throttle = 0, n_brake = 0;
    for (auto it = std::sregex_iterator(response.begin(), response.end(), labeled);
         it != std::sregex_iterator(); ++it) {
        const std::string label = to_lower((*it)[1].str());
        const double value = std::strtod((*it)[2].str().c_str(), nullptr);
        if (label.rfind("steer", 0) == 0) {
            steer = value;
            ++n_steer;
        } else if (label == "throttle") {
            throttle = value;
            ++n_throttle;
        } else {
            brake = value;
            ++n_brake;
        }
    }
    if (n_steer > 1 || n_throttle > 1 || n_brake > 1) return std::nullopt;  // ambiguous

    if (n_steer + n_throttle + n_brake < 3) {
        // Positional fallback: exactly three bare numbers, in control order.
        std::vector<double> values;
        for (auto it = std::sregex_iterator(response.begin(), response.end(), number);
             it != std::sregex_iterator(); ++it) {
            values.push_back(std::strtod(it->str().c_str(), nullptr));
        }
        if (values.size() != 3) return std::nullopt;
        steer = values[0];
        throttle = values[1];
        brake = values[2];
    }
    try {
        return core::clamp_control(steer, throttle, brake);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

std::optional<core::ControlVector> select_dcs(const std::string& response,
                                              const CandidateSet& candidates) {
    candidates.validate();
    const std::string haystack = to_lower(response);

    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    const CandidateSet::Entry* best = nullptr;
    for (const auto& entry : candidates.entries) {
        const std::string needle = to_lower(entry.label);
        const std::size_t pos = haystack.find(needle);
        if (pos == std::string::npos) continue;
        if (pos < best_pos || (pos == best_pos && needle.size() > best_len)) {
            best_pos = pos;
            best_len = needle.size();
            best = &entry;
        }
    }
    if (!best) return std::nullopt;
    return best->control;
}

core::ControlVector fallback_action() { return core::make_control(0.0, 0.0, 1.0); }

TranslateOutcome translate(const std::string& command,
                           const std::vector<Observation>& history, ParsingMode mode,
                           const SlowSystem& slow) {
    auto fail = [](std::string detail) {
        return TranslateOutcome{fallback_action(), true, std::move(detail)};
    };
    if (command.empty()) return fail("empty command");
    if (!slow.adapter) return fail("no slow adapter configured");

    std::string prompt;
    try {
        prompt = build_slow_prompt(command, history, slow.prompt_template,
                                   mode == ParsingMode::DCS ? slow.candidates : std::nullopt);
    } catch (const std::exception& e) {
        return fail(std::string("prompt build failed: ") + e.what());
    }

    const ModelResponse response =
        slow.adapter->complete(ModelRequest{prompt, collect_images(history)});
    if (!response.ok()) {
        return fail(std::string("slow system ") + adapters::to_string(response.status) + ": " +
                    response.text);
    }

    std::optional<ControlVector> control;
    if (mode == ParsingMode::CNG) {
        control = parse_cng(response.text);
        if (!control) return fail("CNG parse failure on: " + response.text);
    } else {
        if (!slow.candidates) return fail("DCS mode without candidate set");
        control = select_dcs(response.text, *slow.candidates);
        if (!control) return fail("DCS selection failure on: " + response.text);
    }
    return TranslateOutcome{*control, false, ""};
}

std::string apply_suffix_control(const std::string& command, const SuffixTable& table) {
    for (const auto& [pattern, suffix] : table.entries) {
        if (!pattern.empty() && command.rfind(pattern, 0) == 0) {
            return command + suffix;
        }
    }
    return command;
}

SlowChoice hybrid_mode_select(adapters::Adapter& fast,
                              const std::vector<Observation>& history,
                              const std::string& threat_question) {
    std::ostringstream os;
    os << threat_question << "\n\nObservation history (most recent last):\n"
       << scene_history_text(history) << "\nAnswer yes or no.\n";
    const ModelResponse r = fast.complete(ModelRequest{os.str(), collect_images(history)});
    if (!r.ok()) return SlowChoice::default_mode;

    // Classify by the leading alphabetic token.
    std::size_t i = 0;
    while (i < r.text.size() && !std::isalpha(static_cast<unsigned char>(r.text[i]))) ++i;
    std::size_t j = i;
    while (j < r.text.size() && std::isalpha(static_cast<unsigned char>(r.text[j]))) ++j;
    const std::string token = to_lower(r.text.substr(i, j - i));
    return token == "yes" ? SlowChoice::risk_mode : SlowChoice::default_mode;
}

core::TaskSet default_task_set() {
    core::TaskSet t;
    t.tasks = {core::TaskId::action_prediction, core::TaskId::trajectory_forecasting,
               core::TaskId::semantic_reasoning};
    t.prompt_per_task = {
        {core::TaskId::action_prediction,
         "You are driving. Decide what the vehicle should do next and answer with one short "
         "driving command."},
        {core::TaskId::trajectory_forecasting,
         "Describe the trajectory the vehicle should follow over the next few seconds."},
        {core::TaskId::semantic_reasoning,
         "List the elements of the scene that matter for the next driving decision."},
    };
    return t;
}

std::string default_threat_question() { return "Is there a security threat in the scene ahead?"; }

PromptTemplate default_template(ParsingMode mode) {
    PromptTemplate t;
    t.mode = mode;
    if (mode == ParsingMode::CNG) {
        t.template_id = "cng-default-v1";
        t.body =
            "You translate a high-level driving command into low-level vehicle controls.\n\n"
            "Command: {command_text}\n\nScene history:\n{scene}\n"
            "Reply with three labeled values: steer in [-1, 1], throttle in [0, 1], "
            "brake in [0, 1].\nFormat: steer: <v>, throttle: <v>, brake: <v>\n";
    } else {
        t.template_id = "dcs-default-v1";
        t.body =
            "You translate a high-level driving command into one control primitive.\n\n"
            "Command: {command_text}\n\nScene history:\n{scene}\n"
            "Choose the best matching option and reply with its label only:\n{candidates}\n";
    }
    return t;
}

PromptTemplate template_from_json(const json& j) {
    PromptTemplate t;
    t.template_id = j.at("template_id").get<std::string>();
    auto mode = parsing_mode_from_string(j.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("template: unknown mode");
    t.mode = *mode;
    t.body = j.at("body").get<std::string>();
    t.validate();
    return t;
}

CandidateSet candidates_from_json(const json& j) {
    CandidateSet c;
    for (const json& e : j.at("entries")) {
        c.entries.push_back(CandidateSet::Entry{e.at("label").get<std::string>(),
                                                core::control_from_json(e.at("control"))});
    }
    c.validate();
    return c;
}

SuffixTable suffix_table_from_json(const json& j) {
    SuffixTable t;
    for (const json& e : j.at("entries")) {
        t.entries.emplace_back(e.at("pattern").get<std::string>(),
                               e.at("suffix").get<std::string>());
    }
    return t;
}

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

}  // namespace

PromptTemplate load_template_file(const std::string& path) {
    return template_from_json(parse_file(path));
}

CandidateSet load_candidates_file(const std::string& path) {
    return candidates_from_json(parse_file(path));
}

SuffixTable load_suffix_file(const std::string& path) {
    return suffix_table_from_json(parse_file(path));
}

}  // namespace adloop::dualsys
