#include "adloop/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "adloop/scengen.hpp"

namespace adloop::runner {

namespace {

using core::EpisodeTrace;
using nlohmann::json;

std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

core::EpisodeTrace run_episode(const EpisodeSetup& setup, const sim::RouteSpec& route,
                               const std::optional<sim::ScenarioSpec>& scenario,
                               std::uint64_t seed) {
    if (!setup.fast || !setup.slow.adapter) {
        throw std::invalid_argument("run_episode: fast and slow adapters are required");
    }
    if (setup.hybrid && (!setup.slow_risk || !setup.slow_risk->adapter)) {
        throw std::invalid_argument("run_episode: hybrid mode needs a risk-mode slow system");
    }
    if (setup.max_frames < 1) throw std::invalid_argument("run_episode: max_frames must be >= 1");

    sim::WorldState world = sim::load_route(route, scenario, seed, setup.sim_config);

    EpisodeTrace trace;
    trace.route_id = route.route_id;
    if (scenario) trace.scenario_id = scenario->scenario_id;

    std::deque<core::Observation> history;
    history.push_back(sim::render_observation(world, setup.observation_mode));

    for (int frame = 0; frame < setup.max_frames; ++frame) {
        const std::vector<core::Observation> history_vec(history.begin(), history.end());

        const auto prompts = dualsys::build_fast_prompts(history_vec, setup.tasks);
        const dualsys::FastResult fast = dualsys::query_fast(*setup.fast, prompts);

        core::ControlVector control = dualsys::fallback_action();
        const auto command = fast.commands.text_for(core::TaskId::action_prediction);
        if (command && !command->empty()) {
            const std::string final_command = dualsys::apply_suffix_control(*command, setup.suffixes);
            const dualsys::SlowSystem* slow = &setup.slow;
            if (setup.hybrid) {
                const auto choice =
                    dualsys::hybrid_mode_select(*setup.fast, history_vec, setup.threat_question);
                if (choice == dualsys::SlowChoice::risk_mode) slow = &*setup.slow_risk;
            }
            control = dualsys::translate(final_command, history_vec, setup.mode, *slow).control;
        }

        sim::StepResult result = sim::step(world, control, setup.sim_config.dt);

        core::FrameRecord record;
        record.observation = result.summary;
        record.observation.frame_index = frame;  // trace-local indexing from 0
        record.commands = fast.commands;
        record.control = control;
        record.dt = setup.sim_config.dt;
        core::append_frame(trace, std::move(record));
        for (core::Infraction& inf : result.infractions) {
            inf.frame_index = frame;  // align with trace-local indexing
            trace.infractions.push_back(std::move(inf));
        }

        if (result.fatal) {
            trace.terminated_by = core::TerminationReason::infraction_fatal;
            break;
        }
        if (world.progress >= 1.0) {
            trace.terminated_by = core::TerminationReason::finished;
            break;
        }
        if (world.frames_without_progress >= setup.sim_config.blocked_after_frames) {
            trace.terminated_by = core::TerminationReason::blocked;
            break;
        }
        if (frame + 1 == setup.max_frames) {
            trace.terminated_by = core::TerminationReason::timeout;
            trace.infractions.push_back(core::Infraction{core::InfractionKind::timeout, frame,
                                                         "frame budget exhausted"});
            break;
        }

        history.push_back(setup.observation_mode == sim::ObservationMode::text
                              ? result.observation
                              : sim::render_observation(world, setup.observation_mode));
        while (static_cast<int>(history.size()) > setup.history_len) history.pop_front();
    }

    trace.completed_fraction = world.progress;
    core::validate_trace(trace);
    return trace;
}

std::optional<sim::ScenarioSpec> merge_scenarios(
    const sim::RouteSpec& route,
    const std::map<std::string, sim::ScenarioSpec>& referenced,
    const std::optional<sim::ScenarioSpec>& paired) {
    sim::ScenarioSpec merged;
    merged.scenario_id = paired ? paired->scenario_id : route.route_id + "_builtin";
    merged.base_route_id = route.route_id;

    int suffix = 0;
    for (const sim::ScenarioTrigger& trigger : route.scenario_triggers) {
        auto it = referenced.find(trigger.scenario_ref);
        if (it == referenced.end()) {
            throw std::runtime_error("route " + route.route_id + " references unknown scenario " +
                                     trigger.scenario_ref);
        }
        for (sim::ActorSpec actor : it->second.actors) {
            actor.trigger_progress = trigger.trigger_progress;
            actor.actor_id = "r" + std::to_string(++suffix) + "_" + actor.actor_id;
            merged.actors.push_back(std::move(actor));
        }
    }
    if (paired) {
        merged.description = paired->description;
        for (sim::ActorSpec actor : paired->actors) {
            merged.actors.push_back(std::move(actor));
        }
    }
    if (merged.actors.empty()) return std::nullopt;
    return merged;
}

void RunConfig::validate() const {
    namespace fs = std::filesystem;
    if (routes_dir.empty() || !fs::exists(routes_dir)) {
        throw std::invalid_argument("config: routes dir missing: " + routes_dir);
    }
    if (scenario_suite_dir && !fs::exists(*scenario_suite_dir)) {
        throw std::invalid_argument("config: scenario suite missing: " + *scenario_suite_dir);
    }
    for (const auto& path : {suffix_table_path, candidates_path, template_path}) {
        if (path && !fs::exists(*path)) {
            throw std::invalid_argument("config: referenced file missing: " + *path);
        }
    }
    if (repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
    if (max_frames < 1) throw std::invalid_argument("config: max_frames must be >= 1");
    if (history_len < 1) throw std::invalid_argument("config: history_len must be >= 1");
    if (parallelism < 1) throw std::invalid_argument("config: parallelism must be >= 1");
    if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
    if (fast_adapter.is_null() || slow_adapter.is_null()) {
        throw std::invalid_argument("config: fast and slow adapter configs are required");
    }
    if (hybrid_mode && (!slow_risk_adapter || slow_risk_adapter->is_null())) {
        throw std::invalid_argument("config: hybrid_mode needs slow_risk");
    }
    penalties.validate();
    comfort_thresholds.validate();
}

adapters::AdapterPtr build_adapter(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "script") {
        return adapters::scripted_adapter(
            adapters::load_script_file(j.at("path").get<std::string>()));
    }
    if (kind == "endpoint") {
        adapters::EndpointSpec spec;
        spec.url = j.at("url").get<std::string>();
        if (j.contains("api_style")) {
            auto style = adapters::api_style_from_string(j.at("api_style").get<std::string>());
            if (!style) throw std::invalid_argument("adapter: unknown api_style");
            spec.api_style = *style;
        }
        spec.deadline_s = j.value("deadline_s", 10.0);
        spec.max_retries = j.value("max_retries", 0);
        if (j.contains("auth_token")) spec.auth_token = j.at("auth_token").get<std::string>();
        if (j.contains("auth_token_env")) {
            if (const char* tok = std::getenv(j.at("auth_token_env").get<std::string>().c_str())) {
                spec.auth_token = std::string(tok);
            }
        }
        return std::make_shared<adapters::EndpointAdapter>(std::move(spec));
    }
    if (kind == "record" || kind == "replay") {
        adapters::AdapterPtr inner;
        if (j.contains("inner") && !j.at("inner").is_null()) inner = build_adapter(j.at("inner"));
        return adapters::record_replay(std::move(inner), j.at("cassette").get<std::string>(),
                                       kind == "record" ? adapters::CassetteMode::record
                                                        : adapters::CassetteMode::replay);
    }
    throw std::invalid_argument("adapter: unknown kind '" + kind + "'");
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    c.routes_dir = j.at("routes").get<std::string>();
    if (j.contains("scenario_suite") && !j.at("scenario_suite").is_null()) {
        c.scenario_suite_dir = j.at("scenario_suite").get<std::string>();
    }
    c.fast_adapter = j.at("fast");
    c.slow_adapter = j.at("slow");
    if (j.contains("slow_risk") && !j.at("slow_risk").is_null()) {
        c.slow_risk_adapter = j.at("slow_risk");
    }
    if (j.contains("parsing_mode")) {
        auto mode = dualsys::parsing_mode_from_string(j.at("parsing_mode").get<std::string>());
        if (!mode) throw std::invalid_argument("config: unknown parsing_mode");
        c.parsing_mode = *mode;
    }
    c.hybrid_mode = j.value("hybrid_mode", false);
    if (j.contains("suffix_table") && !j.at("suffix_table").is_null()) {
        c.suffix_table_path = j.at("suffix_table").get<std::string>();
    }
    if (j.contains("candidates") && !j.at("candidates").is_null()) {
        c.candidates_path = j.at("candidates").get<std::string>();
    }
    if (j.contains("prompt_template") && !j.at("prompt_template").is_null()) {
        c.template_path = j.at("prompt_template").get<std::string>();
    }
    c.repetitions = j.value("repetitions", 10);
    c.seed = j.value("seed", std::uint64_t{1});
    c.max_frames = j.value("max_frames", 600);
    c.history_len = j.value("history_len", 5);
    if (j.contains("observation_mode")) {
        const std::string mode = j.at("observation_mode").get<std::string>();
        if (mode == "text") c.observation_mode = sim::ObservationMode::text;
        else if (mode == "raster") c.observation_mode = sim::ObservationMode::raster;
        else throw std::invalid_argument("config: unknown observation_mode " + mode);
    }
    c.parallelism = j.value("parallelism", 1);
    c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("sim")) {
        const json& s = j.at("sim");
        c.sim_config.dt = s.value("dt", c.sim_config.dt);
        c.sim_config.accel_max = s.value("accel_max", c.sim_config.accel_max);
        c.sim_config.brake_max = s.value("brake_max", c.sim_config.brake_max);
        c.sim_config.drag = s.value("drag", c.sim_config.drag);
        c.sim_config.wheel_base = s.value("wheel_base", c.sim_config.wheel_base);
        c.sim_config.max_steer_rad = s.value("max_steer_rad", c.sim_config.max_steer_rad);
        c.sim_config.blocked_after_frames =
            s.value("blocked_after_frames", c.sim_config.blocked_after_frames);
        c.sim_config.deviation_factor = s.value("deviation_factor", c.sim_config.deviation_factor);
        c.sim_config.trigger_jitter = s.value("trigger_jitter", c.sim_config.trigger_jitter);
    }
    if (j.contains("penalties")) c.penalties = metrics::penalties_from_json(j.at("penalties"));
    if (j.contains("comfort_thresholds")) {
        c.comfort_thresholds = metrics::comfort_thresholds_from_json(j.at("comfort_thresholds"));
    }
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    return config_from_json(json::parse(in));
}

EpisodeSetup setup_from_config(const RunConfig& config) {
    EpisodeSetup setup;
    setup.fast = build_adapter(config.fast_adapter);
    setup.mode = config.parsing_mode;

    dualsys::SlowSystem slow;
    slow.adapter = build_adapter(config.slow_adapter);
    slow.prompt_template = config.template_path ? dualsys::load_template_file(*config.template_path)
                                                : dualsys::default_template(config.parsing_mode);
    if (config.parsing_mode == dualsys::ParsingMode::DCS) {
        slow.candidates = config.candidates_path
                              ? dualsys::load_candidates_file(*config.candidates_path)
                              : dualsys::default_candidates();
    }
    setup.slow = std::move(slow);

    if (config.slow_risk_adapter) {
        dualsys::SlowSystem risk = setup.slow;
        risk.adapter = build_adapter(*config.slow_risk_adapter);
        setup.slow_risk = std::move(risk);
    }
    setup.hybrid = config.hybrid_mode;
    if (config.suffix_table_path) {
        setup.suffixes = dualsys::load_suffix_file(*config.suffix_table_path);
    }
    setup.sim_config = config.sim_config;
    setup.observation_mode = config.observation_mode;
    setup.history_len = config.history_len;
    setup.max_frames = config.max_frames;
    return setup;
}

namespace {

struct Job {
    std::size_t route_index;
    int repetition;
};

struct Slot {
    bool ok = false;
    EpisodeRecord record;
    EpisodeTrace trace;
    std::string error;
};

using TraceSink = std::function<void(const EpisodeRecord&, const EpisodeTrace&)>;

CampaignResult execute_campaign(const EpisodeSetup& setup,
                                const std::vector<sim::RouteSpec>& routes,
                                const std::map<std::string, sim::ScenarioSpec>& paired,
                                const std::map<std::string, sim::ScenarioSpec>& referenced,
                                int repetitions, std::uint64_t seed,
                                const metrics::PenaltyTable& penalties,
                                const metrics::ComfortThresholds& thresholds, int parallelism,
                                const std::string& label, const TraceSink& sink) {
    if (routes.empty()) throw std::invalid_argument("campaign: no routes");
    if (repetitions < 1) throw std::invalid_argument("campaign: repetitions must be >= 1");

    std::vector<Job> jobs;
    for (int rep = 0; rep < repetitions; ++rep) {
        for (std::size_t r = 0; r < routes.size(); ++r) jobs.push_back(Job{r, rep});
    }
    std::vector<Slot> slots(jobs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            const sim::RouteSpec& route = routes[job.route_index];
            Slot& slot = slots[i];
            slot.record.route_id = route.route_id;
            slot.record.repetition = job.repetition;
            try {
                std::optional<sim::ScenarioSpec> pair;
                if (auto it = paired.find(route.route_id); it != paired.end()) pair = it->second;
                const auto merged = merge_scenarios(route, referenced, pair);
                if (pair) slot.record.scenario_id = pair->scenario_id;
                slot.trace = run_episode(setup, route, merged,
                                         seed + static_cast<std::uint64_t>(job.repetition));
                // Traces carry the paired threat id only; built-in route
                // actors are part of the route, not a scenario.
                slot.trace.scenario_id = slot.record.scenario_id;
                slot.record.report = metrics::evaluate(slot.trace, route, penalties, thresholds);
                slot.ok = true;
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        }
    };

    if (parallelism <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < parallelism; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<RepetitionSummary> summaries;
    for (int rep = 0; rep < repetitions; ++rep) {
        std::vector<metrics::MetricsReport> reports;
        std::map<std::string, metrics::RouteResult> route_results;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i].repetition != rep || !slots[i].ok) continue;
            reports.push_back(slots[i].record.report);
            route_results[slots[i].record.route_id] = metrics::RouteResult{
                routes[jobs[i].route_index].skill_tags, slots[i].record.report.success};
        }
        if (reports.empty()) continue;
        const metrics::AggregateStats stats = metrics::aggregate(reports);
        RepetitionSummary summary;
        summary.repetition = rep;
        summary.success_rate = stats.success_rate;
        summary.driving_score = stats.driving_score.mean;
        summary.efficiency = stats.efficiency.mean;
        if (stats.comfort) summary.comfort = stats.comfort->mean;
        summary.skill_score = metrics::skill_score(route_results);
        summaries.push_back(summary);
    }
    if (summaries.empty()) throw std::runtime_error("campaign: every episode failed");

    CampaignResult result;
    int episodes = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        Slot& slot = slots[i];
        if (!slot.ok) {
            result.failures.push_back(
                EpisodeFailure{slot.record.route_id, slot.record.repetition, slot.error});
            continue;
        }
        ++episodes;
        if (sink) sink(slot.record, slot.trace);
        result.episodes.push_back(slot.record);
    }

    AggregateReport report;
    report.label = label;
    report.repetitions = static_cast<int>(summaries.size());
    report.routes = static_cast<int>(routes.size());
    report.episodes = episodes;
    report.per_repetition = summaries;
    std::vector<double> sr, ds, eff, comf, skill;
    for (const RepetitionSummary& s : summaries) {
        sr.push_back(s.success_rate);
        ds.push_back(s.driving_score);
        eff.push_back(s.efficiency);
        if (s.comfort) comf.push_back(*s.comfort);
        if (s.skill_score) skill.push_back(*s.skill_score);
    }
    report.success_rate = metrics::mean_std(sr);
    report.driving_score = metrics::mean_std(ds);
    report.efficiency = metrics::mean_std(eff);
    if (!comf.empty()) report.comfort = metrics::mean_std(comf);
    if (!skill.empty()) report.skill_score = metrics::mean_std(skill);
    result.aggregate = std::move(report);
    return result;
}

std::string trace_filename(const EpisodeRecord& record) {
    return "traces/" + record.route_id + "__" +
           (record.scenario_id ? *record.scenario_id : std::string("clean")) + "__rep" +
           std::to_string(record.repetition) + ".json";
}

}  // namespace

CampaignResult run_campaign_inmemory(
    const EpisodeSetup& setup, const std::vector<sim::RouteSpec>& routes,
    const std::map<std::string, sim::ScenarioSpec>& paired_scenarios,
    const std::map<std::string, sim::ScenarioSpec>& referenced_scenarios, int repetitions,
    std::uint64_t seed, const metrics::PenaltyTable& penalties,
    const metrics::ComfortThresholds& thresholds, int parallelism, const std::string& label) {
    return execute_campaign(setup, routes, paired_scenarios, referenced_scenarios, repetitions,
                            seed, penalties, thresholds, parallelism, label, nullptr);
}

CampaignResult run_campaign(const RunConfig& config) {
    config.validate();
    namespace fs = std::filesystem;

    const std::vector<sim::RouteSpec> routes = sim::load_route_library(config.routes_dir);
    if (routes.empty()) throw std::invalid_argument("campaign: no routes in " + config.routes_dir);

    // Route-referenced scenarios live in <routes>/scenarios/<ref>.json.
    std::map<std::string, sim::ScenarioSpec> referenced;
    for (const sim::RouteSpec& route : routes) {
        for (const sim::ScenarioTrigger& trigger : route.scenario_triggers) {
            if (referenced.count(trigger.scenario_ref)) continue;
            const fs::path path =
                fs::path(config.routes_dir) / "scenarios" / (trigger.scenario_ref + ".json");
            referenced[trigger.scenario_ref] = sim::load_scenario_file(path.string());
        }
    }

    std::map<std::string, sim::ScenarioSpec> paired;
    if (config.scenario_suite_dir) paired = scengen::load_suite(*config.scenario_suite_dir);

    const EpisodeSetup setup = setup_from_config(config);

    fs::create_directories(fs::path(config.output_dir) / "traces");
    TraceSink sink = [&](const EpisodeRecord& record, const EpisodeTrace& trace) {
        std::ofstream out(fs::path(config.output_dir) / trace_filename(record));
        out << core::serialize_trace(trace) << "\n";
    };

    CampaignResult result = execute_campaign(
        setup, routes, paired, referenced, config.repetitions, config.seed, config.penalties,
        config.comfort_thresholds, config.parallelism, fs::path(config.routes_dir).filename().string(),
        sink);
    for (EpisodeRecord& record : result.episodes) record.trace_file = trace_filename(record);

    {
        std::ofstream out(fs::path(config.output_dir) / "aggregate.json");
        out << to_json(result.aggregate).dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(config.output_dir) / "report.txt");
        out << render_report(result.aggregate);
    }
    {
        json files = json::array();
        for (const EpisodeRecord& r : result.episodes) files.push_back(r.trace_file);
        json failures = json::array();
        for (const EpisodeFailure& f : result.failures) {
            failures.push_back(
                json{{"route_id", f.route_id}, {"repetition", f.repetition}, {"error", f.error}});
        }
        json route_ids = json::array();
        for (const sim::RouteSpec& r : routes) route_ids.push_back(r.route_id);
        const json manifest{{"routes", route_ids},
                            {"repetitions", config.repetitions},
                            {"episodes", static_cast<int>(result.episodes.size())},
                            {"traces", std::move(files)},
                            {"failures", std::move(failures)},
                            {"aggregate_file", "aggregate.json"},
                            {"report_file", "report.txt"}};
        std::ofstream out(fs::path(config.output_dir) / "manifest.json");
        out << manifest.dump(2) << "\n";
    }
    return result;
}

namespace {

json stat_to_json(const metrics::Stat& s) {
    return json{{"mean", s.mean}, {"std", s.std_dev}};
}

}  // namespace

nlohmann::json to_json(const AggregateReport& report) {
    json reps = json::array();
    for (const RepetitionSummary& s : report.per_repetition) {
        reps.push_back(json{{"repetition", s.repetition},
                            {"success_rate", s.success_rate},
                            {"driving_score", s.driving_score},
                            {"efficiency", s.efficiency},
                            {"comfort", s.comfort ? json(*s.comfort) : json(nullptr)},
                            {"skill_score", s.skill_score ? json(*s.skill_score) : json(nullptr)}});
    }
    return json{{"label", report.label},
                {"repetitions", report.repetitions},
                {"routes", report.routes},
                {"episodes", report.episodes},
                {"success_rate", stat_to_json(report.success_rate)},
                {"driving_score", stat_to_json(report.driving_score)},
                {"efficiency", stat_to_json(report.efficiency)},
                {"comfort", report.comfort ? stat_to_json(*report.comfort) : json(nullptr)},
                {"skill_score",
                 report.skill_score ? stat_to_json(*report.skill_score) : json(nullptr)},
                {"per_repetition", std::move(reps)}};
}

std::string render_report(const AggregateReport& report) {
    auto cell = [](const std::optional<metrics::Stat>& s) -> std::string {
        if (!s) return "—";
        return fmt2(s->mean) + "±" + fmt2(s->std_dev);
    };
    const std::vector<std::pair<std::string, std::string>> columns = {
        {"Success Rate", cell(report.success_rate)},
        {"Driving Score", cell(report.driving_score)},
        {"Efficiency", cell(report.efficiency)},
        {"Comfortness", cell(report.comfort)},
        {"Skill Score", cell(report.skill_score)},
    };

    auto display_width = [](const std::string& s) {
        // '±' and the em dash are multi-byte; measure code points, not bytes.
        std::size_t w = 0;
        for (std::size_t i = 0; i < s.size();) {
            const auto c = static_cast<unsigned char>(s[i]);
            i += c < 0x80 ? 1 : (c < 0xe0 ? 2 : 3);
            ++w;
        }
        return w;
    };
    auto pad = [&](const std::string& s, std::size_t w) {
        std::string out = s;
        for (std::size_t d = display_width(s); d < w; ++d) out += ' ';
        return out;
    };

    std::vector<std::size_t> widths = {std::max<std::size_t>(report.label.size(), 8)};
    for (const auto& [head, value] : columns) {
        widths.push_back(std::max(display_width(head), display_width(value)));
    }

    std::ostringstream os;
    os << pad("Config", widths[0]);
    for (std::size_t i = 0; i < columns.size(); ++i) {
        os << " | " << pad(columns[i].first, widths[i + 1]);
    }
    os << "\n" << std::string(widths[0], '-');
    for (std::size_t i = 0; i < columns.size(); ++i) os << "-+-" << std::string(widths[i + 1], '-');
    os << "\n" << pad(report.label, widths[0]);
    for (std::size_t i = 0; i < columns.size(); ++i) {
        os << " | " << pad(columns[i].second, widths[i + 1]);
    }
    os << "\n";
    return os.str();
}

}  // namespace adloop::runner
