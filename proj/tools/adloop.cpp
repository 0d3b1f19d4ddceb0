#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adloop/hil.hpp"
#include "adloop/runner.hpp"
#include "adloop/scengen.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitCampaignWithFailures = 2;
constexpr int kExitFatal = 3;

using adloop::runner::RunConfig;

int cmd_run(const std::string& config_path, const std::optional<std::string>& output_override,
            std::optional<int> repetitions_override, std::optional<std::uint64_t> seed_override) {
    RunConfig config;
    try {
        config = adloop::runner::load_config_file(config_path);
        if (output_override) config.output_dir = *output_override;
        if (repetitions_override) config.repetitions = *repetitions_override;
        if (seed_override) config.seed = *seed_override;
        config.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    try {
        const auto result = adloop::runner::run_campaign(config);
        std::cout << adloop::runner::render_report(result.aggregate);
        std::cout << result.episodes.size() << " episodes, " << result.failures.size()
                  << " failures; artifacts in " << config.output_dir << "\n";
        return result.failures.empty() ? kExitOk : kExitCampaignWithFailures;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return kExitFatal;
    }
}

int cmd_report(const std::string& aggregate_path) {
    try {
        std::ifstream in(aggregate_path);
        if (!in) throw std::runtime_error("cannot open " + aggregate_path);
        const nlohmann::json j = nlohmann::json::parse(in);
        adloop::runner::AggregateReport report;
        report.label = j.at("label").get<std::string>();
        report.repetitions = j.at("repetitions").get<int>();
        report.routes = j.at("routes").get<int>();
        report.episodes = j.at("episodes").get<int>();
        auto stat = [&](const char* key) {
            return adloop::metrics::Stat{j.at(key).at("mean").get<double>(),
                                         j.at(key).at("std").get<double>()};
        };
        report.success_rate = stat("success_rate");
        report.driving_score = stat("driving_score");
        report.efficiency = stat("efficiency");
        if (!j.at("comfort").is_null()) report.comfort = stat("comfort");
        if (!j.at("skill_score").is_null()) report.skill_score = stat("skill_score");
        std::cout << adloop::runner::render_report(report);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "report error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

int cmd_scen_gen(const std::string& routes_dir, const std::string& fast_config_path,
                 const std::string& slow_config_path, const std::string& out_dir,
                 int repair_budget, const std::optional<std::string>& stage_prompts_path) {
    try {
        const auto routes = adloop::sim::load_route_library(routes_dir);
        nlohmann::json fast_cfg, slow_cfg;
        {
            std::ifstream f(fast_config_path), s(slow_config_path);
            if (!f || !s) throw std::runtime_error("cannot open adapter config");
            fast_cfg = nlohmann::json::parse(f);
            slow_cfg = nlohmann::json::parse(s);
        }
        auto fast = adloop::runner::build_adapter(fast_cfg);
        auto slow = adloop::runner::build_adapter(slow_cfg);

        adloop::scengen::GenerateOptions options;
        options.repair_budget = repair_budget;
        if (stage_prompts_path) {
            options.stage_prompts = adloop::scengen::load_stage_prompts(*stage_prompts_path);
        }
        const auto outcome = adloop::scengen::generate_suite(routes, *fast, *slow, options);
        adloop::scengen::write_suite(outcome, out_dir);
        std::cout << outcome.scenarios.size() << " scenarios written to " << out_dir << ", "
                  << outcome.skips.size() << " routes skipped\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "scen-gen error: " << e.what() << "\n";
        return kExitFatal;
    }
}

int cmd_hil_serve(const std::string& bind, int port, double cycle_s, const std::string& mode,
                  const std::optional<std::string>& config_path,
                  const std::optional<std::string>& log_path) {
    try {
        adloop::hil::Controller controller;
        adloop::runner::EpisodeSetup setup;
        if (mode == "brake") {
            controller = [](const adloop::core::Observation&) {
                return adloop::core::make_control(0.0, 0.0, 1.0);
            };
        } else if (mode == "straight") {
            controller = [](const adloop::core::Observation&) {
                return adloop::core::make_control(0.0, 0.5, 0.0);
            };
        } else if (mode == "pipeline") {
            if (!config_path) throw std::runtime_error("pipeline mode needs --config");
            const RunConfig config = adloop::runner::load_config_file(*config_path);
            setup = adloop::runner::setup_from_config(config);
            controller = [setup](const adloop::core::Observation& obs) {
                const std::vector<adloop::core::Observation> history{obs};
                const auto prompts = adloop::dualsys::build_fast_prompts(history, setup.tasks);
                const auto fast = adloop::dualsys::query_fast(*setup.fast, prompts);
                const auto command =
                    fast.commands.text_for(adloop::core::TaskId::action_prediction);
                if (!command || command->empty()) return adloop::dualsys::fallback_action();
                return adloop::dualsys::translate(*command, history, setup.mode, setup.slow)
                    .control;
            };
        } else {
            throw std::runtime_error("unknown controller mode: " + mode);
        }

        adloop::hil::TcpListener listener(bind, port);
        std::cout << "listening on " << bind << ":" << listener.port() << "\n";
        adloop::hil::ServeOptions options;
        options.cycle_s = cycle_s;
        const auto log = adloop::hil::serve_session(listener, controller, options);
        std::cout << "session ended: " << log.end_reason << " (" << log.cycles << " cycles, "
                  << log.overruns << " overruns)\n";
        if (log_path) {
            std::ofstream out(*log_path);
            out << adloop::hil::to_json(log).dump(2) << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "hil-serve error: " << e.what() << "\n";
        return kExitFatal;
    }
}

int cmd_hil_simclient(const std::string& host, int port, const std::string& platform_kind,
                      double max_speed, double track_width, double wheel_base,
                      double max_steer_angle, double route_length, double half_width,
                      int max_cycles) {
    try {
        adloop::hil::PlatformParams platform;
        auto kind = adloop::hil::platform_kind_from_string(platform_kind);
        if (!kind) throw std::runtime_error("unknown platform kind: " + platform_kind);
        platform.kind = *kind;
        platform.max_speed = max_speed;
        platform.track_width = track_width;
        platform.wheel_base = wheel_base;
        platform.max_steer_angle = max_steer_angle;

        adloop::hil::PhysicalRoute route;
        route.length_m = route_length;
        route.lane_half_width_m = half_width;

        adloop::hil::ClientOptions options;
        options.max_cycles = max_cycles;
        const auto log = adloop::hil::sim_vehicle_client(host, port, platform, route, options);
        std::cout << adloop::hil::to_json(log).dump(2) << "\n";
        return log.aborted ? kExitFatal : kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "hil-simclient error: " << e.what() << "\n";
        return kExitFatal;
    }
}

int cmd_validate_config(const std::string& config_path) {
    try {
        const RunConfig config = adloop::runner::load_config_file(config_path);
        config.validate();
        const auto routes = adloop::sim::load_route_library(config.routes_dir);
        std::cout << "config ok: " << routes.size() << " routes, "
                  << adloop::dualsys::to_string(config.parsing_mode) << " mode, "
                  << config.repetitions << " repetitions\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop evaluation harness for driving VLM pipelines"};
    app.require_subcommand(1);

    // run
    std::string run_config;
    std::optional<std::string> run_output;
    std::optional<int> run_repetitions;
    std::optional<std::uint64_t> run_seed;
    auto* run = app.add_subcommand("run", "Run an evaluation campaign");
    run->add_option("--config", run_config, "Campaign config JSON")->required();
    run->add_option("--output", run_output, "Override output directory");
    run->add_option("--repetitions", run_repetitions, "Override repetitions");
    run->add_option("--seed", run_seed, "Override base seed");

    // report
    std::string report_aggregate;
    auto* report = app.add_subcommand("report", "Render a stored aggregate as a table");
    report->add_option("--aggregate", report_aggregate, "aggregate.json path")->required();

    // scen-gen
    std::string sg_routes, sg_fast, sg_slow, sg_out;
    int sg_repairs = 3;
    std::optional<std::string> sg_stage_prompts;
    auto* scen = app.add_subcommand("scen-gen", "Generate a threat scenario suite");
    scen->add_option("--routes", sg_routes, "Route library directory")->required();
    scen->add_option("--fast", sg_fast, "Fast adapter config JSON")->required();
    scen->add_option("--slow", sg_slow, "Slow adapter config JSON")->required();
    scen->add_option("--out", sg_out, "Output suite directory")->required();
    scen->add_option("--repairs", sg_repairs, "Repair re-prompt budget");
    scen->add_option("--stage-prompts", sg_stage_prompts, "Stage query override JSON");

    // hil-serve
    std::string hs_bind = "127.0.0.1", hs_mode = "straight";
    int hs_port = 0;
    double hs_cycle = adloop::hil::kDefaultCycleS;
    std::optional<std::string> hs_config, hs_log;
    auto* serve = app.add_subcommand("hil-serve", "Serve one control session over TCP");
    serve->add_option("--bind", hs_bind, "Bind address");
    serve->add_option("--port", hs_port, "Port (0 = ephemeral)");
    serve->add_option("--cycle", hs_cycle, "Actuation cycle seconds");
    serve->add_option("--mode", hs_mode, "Controller: straight|brake|pipeline");
    serve->add_option("--config", hs_config, "Campaign config (pipeline mode)");
    serve->add_option("--log", hs_log, "Write the session log JSON here");

    // hil-simclient
    std::string hc_host = "127.0.0.1", hc_platform = "differential";
    int hc_port = 0, hc_max_cycles = 400;
    double hc_max_speed = 1.0, hc_track = 0.12, hc_wheel_base = 0.2, hc_steer = 0.5;
    double hc_length = 10.0, hc_half_width = 0.5;
    auto* client = app.add_subcommand("hil-simclient", "Run the simulated vehicle client");
    client->add_option("--host", hc_host, "Server host");
    client->add_option("--port", hc_port, "Server port")->required();
    client->add_option("--platform", hc_platform, "differential|ackermann|tracked|mecanum");
    client->add_option("--max-speed", hc_max_speed, "m/s");
    client->add_option("--track-width", hc_track, "m (differential)");
    client->add_option("--wheel-base", hc_wheel_base, "m (ackermann)");
    client->add_option("--max-steer-angle", hc_steer, "rad (ackermann)");
    client->add_option("--route-length", hc_length, "m");
    client->add_option("--half-width", hc_half_width, "m");
    client->add_option("--max-cycles", hc_max_cycles, "cycle budget");

    // validate-config
    std::string vc_config;
    auto* validate = app.add_subcommand("validate-config", "Check a campaign config");
    validate->add_option("--config", vc_config, "Campaign config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(run_config, run_output, run_repetitions, run_seed);
    if (report->parsed()) return cmd_report(report_aggregate);
    if (scen->parsed()) {
        return cmd_scen_gen(sg_routes, sg_fast, sg_slow, sg_out, sg_repairs, sg_stage_prompts);
    }
    if (serve->parsed()) return cmd_hil_serve(hs_bind, hs_port, hs_cycle, hs_mode, hs_config, hs_log);
    if (client->parsed()) {
        return cmd_hil_simclient(hc_host, hc_port, hc_platform, hc_max_speed, hc_track,
                                 hc_wheel_base, hc_steer, hc_length, hc_half_width, hc_max_cycles);
    }
    if (validate->parsed()) return cmd_validate_config(vc_config);
    return kExitConfigError;
}
