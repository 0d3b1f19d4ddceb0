#ifndef ADLOOP_DUALSYS_HPP
#define ADLOOP_DUALSYS_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adloop/adapters.hpp"
#include "adloop/core.hpp"

namespace adloop::dualsys {

enum class ParsingMode { CNG, DCS };

const char* to_string(ParsingMode m);
std::optional<ParsingMode> parsing_mode_from_string(const std::string& s);

/// Control prompt template with named placeholders {command_text}, {scene}
/// and, for DCS, {candidates}.
struct PromptTemplate {
    std::string template_id;
    std::string body;
    ParsingMode mode = ParsingMode::CNG;

    /// CNG templates must omit {candidates}; DCS templates must contain it.
    void validate() const;
};

/// Discrete candidate control set for DCS selection.
struct CandidateSet {
    struct Entry {
        std::string label;
        core::ControlVector control;
    };
    std::vector<Entry> entries;

    /// >= 2 entries, labels unique case-insensitively, controls in range.
    void validate() const;
};

/// The 7-entry default spanning stop/straight/turn primitives.
CandidateSet default_candidates();

struct TaskPrompt {
    core::TaskId task;
    std::string prompt;
    std::vector<adapters::ImagePayload> images;
};

/// One prompt per task, embedding the task's query text and the
/// observation history (scene text inline, images as payloads).
/// Throws on empty history.
std::vector<TaskPrompt> build_fast_prompts(const std::vector<core::Observation>& history,
                                           const core::TaskSet& tasks);

struct TaskFailure {
    core::TaskId task;
    adapters::CallStatus status;
    std::string detail;
};

struct FastResult {
    core::CommandSet commands;
    std::vector<TaskFailure> failures;
};

/// Queries the fast system once per task; transport failures become
/// per-task failure records rather than exceptions.
FastResult query_fast(adapters::Adapter& fast, const std::vector<TaskPrompt>& prompts);

/// Substitutes {command_text}, {scene}, and {candidates} into the template.
/// Throws if a placeholder required by the mode cannot be resolved.
std::string build_slow_prompt(const std::string& command,
                              const std::vector<core::Observation>& history,
                              const PromptTemplate& tmpl,
                              const std::optional<CandidateSet>& candidates);

/// Candidate list rendered one label per line, in set order.
std::string format_candidates(const CandidateSet& candidates);

/// Extracts labeled steer/throttle/brake values from free text, clamping
/// into range. Labeled fields win; exactly three bare numbers are accepted
/// as a fallback; anything more ambiguous fails.
std::optional<core::ControlVector> parse_cng(const std::string& response);

/// Returns the control of the candidate whose label occurs earliest in the
/// response (case-insensitive; ties broken toward the longest label).
std::optional<core::ControlVector> select_dcs(const std::string& response,
                                              const CandidateSet& candidates);

/// Full brake, zero steer: the action substituted on any failure path.
core::ControlVector fallback_action();

struct TranslateOutcome {
    core::ControlVector control;
    bool used_fallback = false;
    std::string failure_detail;  // empty when the translation succeeded
};

struct SlowSystem {
    adapters::AdapterPtr adapter;
    PromptTemplate prompt_template;
    std::optional<CandidateSet> candidates;  // required in DCS mode
};

/// Builds the slow prompt, queries the slow system, and parses per mode.
/// Never throws for model-side failures: every failure path degrades to
/// fallback_action() so the closed loop cannot stall.
TranslateOutcome translate(const std::string& command,
                           const std::vector<core::Observation>& history, ParsingMode mode,
                           const SlowSystem& slow);

/// Literal-prefix suffix table for fine-grained control: when the command
/// starts with a pattern, the configured suffix is appended.
struct SuffixTable {
    std::vector<std::pair<std::string, std::string>> entries;  // pattern -> suffix
};

std::string apply_suffix_control(const std::string& command, const SuffixTable& table);

enum class SlowChoice { default_mode, risk_mode };

/// Poses the threat question to the fast system; an affirmative leading
/// token selects the risk-mode slow system, anything else the default.
SlowChoice hybrid_mode_select(adapters::Adapter& fast,
                              const std::vector<core::Observation>& history,
                              const std::string& threat_question);

/// Default stage/query texts; real deployments override via prompt files.
core::TaskSet default_task_set();
std::string default_threat_question();
PromptTemplate default_template(ParsingMode mode);

PromptTemplate template_from_json(const nlohmann::json& j);
PromptTemplate load_template_file(const std::string& path);
CandidateSet candidates_from_json(const nlohmann::json& j);
CandidateSet load_candidates_file(const std::string& path);
SuffixTable suffix_table_from_json(const nlohmann::json& j);
SuffixTable load_suffix_file(const std::string& path);

}  // namespace adloop::dualsys

#endif
