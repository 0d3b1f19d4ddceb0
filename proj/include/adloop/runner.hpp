#ifndef ADLOOP_RUNNER_HPP
#define ADLOOP_RUNNER_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adloop/adapters.hpp"
#include "adloop/core.hpp"
#include "adloop/dualsys.hpp"
#include "adloop/metrics.hpp"
#include "adloop/sim.hpp"

namespace adloop::runner {

/// Fully resolved wiring for episode runs: adapters constructed, templates
/// and tables loaded. Built from RunConfig or assembled directly in tests.
struct EpisodeSetup {
    adapters::AdapterPtr fast;
    dualsys::SlowSystem slow;
    std::optional<dualsys::SlowSystem> slow_risk;  // hybrid mode's risk branch
    core::TaskSet tasks = dualsys::default_task_set();
    dualsys::ParsingMode mode = dualsys::ParsingMode::CNG;
    bool hybrid = false;
    std::string threat_question = dualsys::default_threat_question();
    dualsys::SuffixTable suffixes;
    sim::SimConfig sim_config;
    sim::ObservationMode observation_mode = sim::ObservationMode::text;
    int history_len = 5;  // k+1 observations fed to the fast system
    int max_frames = 600;
};

/// Closed loop: render -> fast prompts -> fast commands -> (suffix/hybrid)
/// -> translate -> step, until the episode terminates. Adapter failures
/// degrade to the fallback action; only simulator faults throw.
core::EpisodeTrace run_episode(const EpisodeSetup& setup, const sim::RouteSpec& route,
                               const std::optional<sim::ScenarioSpec>& scenario,
                               std::uint64_t seed);

/// Merges a route's built-in scenario triggers (actors re-based onto the
/// trigger progress) with an optional paired threat scenario.
std::optional<sim::ScenarioSpec> merge_scenarios(
    const sim::RouteSpec& route,
    const std::map<std::string, sim::ScenarioSpec>& referenced,
    const std::optional<sim::ScenarioSpec>& paired);

struct RunConfig {
    std::string routes_dir;
    std::optional<std::string> scenario_suite_dir;
    nlohmann::json fast_adapter;       // adapter config objects, see build_adapter
    nlohmann::json slow_adapter;
    std::optional<nlohmann::json> slow_risk_adapter;
    dualsys::ParsingMode parsing_mode = dualsys::ParsingMode::CNG;
    bool hybrid_mode = false;
    std::optional<std::string> suffix_table_path;
    std::optional<std::string> candidates_path;   // DCS candidate override
    std::optional<std::string> template_path;     // slow prompt template
    int repetitions = 10;
    std::uint64_t seed = 1;
    int max_frames = 600;
    int history_len = 5;
    sim::ObservationMode observation_mode = sim::ObservationMode::text;
    int parallelism = 1;
    std::string output_dir;
    sim::SimConfig sim_config;
    metrics::PenaltyTable penalties = metrics::default_penalties();
    metrics::ComfortThresholds comfort_thresholds;

    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

/// Builds an adapter from a config object:
///   {"kind":"script","path":...} | {"kind":"endpoint","url":...,...}
///   | {"kind":"record"|"replay","cassette":...,"inner":{...}}
adapters::AdapterPtr build_adapter(const nlohmann::json& j);

EpisodeSetup setup_from_config(const RunConfig& config);

struct EpisodeRecord {
    std::string route_id;
    std::optional<std::string> scenario_id;
    int repetition = 0;
    std::string trace_file;  // relative to the output directory
    metrics::MetricsReport report;
};

struct EpisodeFailure {
    std::string route_id;
    int repetition = 0;
    std::string error;
};

struct RepetitionSummary {
    int repetition = 0;
    double success_rate = 0.0;  // percent over routes
    double driving_score = 0.0;
    double efficiency = 0.0;
    std::optional<double> comfort;
    std::optional<double> skill_score;
};

struct AggregateReport {
    std::string label;
    int repetitions = 0;
    int routes = 0;
    int episodes = 0;
    metrics::Stat success_rate;
    metrics::Stat driving_score;
    metrics::Stat efficiency;
    std::optional<metrics::Stat> comfort;
    std::optional<metrics::Stat> skill_score;
    std::vector<RepetitionSummary> per_repetition;
};

struct CampaignResult {
    AggregateReport aggregate;
    std::vector<EpisodeRecord> episodes;
    std::vector<EpisodeFailure> failures;
};

/// Runs repetitions x routes episodes (seeds derived as seed + repetition),
/// evaluates metrics, aggregates to mean +/- std, and persists traces,
/// aggregate JSON, a text report, and a manifest under the output
/// directory. Per-episode failures are recorded and do not abort the
/// campaign.
CampaignResult run_campaign(const RunConfig& config);

/// In-memory variant used by tests: no filesystem access, caller supplies
/// resolved routes and paired scenarios.
CampaignResult run_campaign_inmemory(
    const EpisodeSetup& setup, const std::vector<sim::RouteSpec>& routes,
    const std::map<std::string, sim::ScenarioSpec>& paired_scenarios,
    const std::map<std::string, sim::ScenarioSpec>& referenced_scenarios, int repetitions,
    std::uint64_t seed, const metrics::PenaltyTable& penalties,
    const metrics::ComfortThresholds& thresholds, int parallelism = 1,
    const std::string& label = "campaign");

nlohmann::json to_json(const AggregateReport& report);

/// Fixed-width table with one row per campaign: Success Rate, Driving
/// Score, Efficiency, Comfortness, Skill Score as mean+/-std, two decimals,
/// missing cells rendered as an em dash.
std::string render_report(const AggregateReport& report);

}  // namespace adloop::runner

#endif
