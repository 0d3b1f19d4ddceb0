#ifndef ADLOOP_METRICS_HPP
#define ADLOOP_METRICS_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adloop/core.hpp"
#include "adloop/sim.hpp"

namespace adloop::metrics {

/// Multiplicative penalty per infraction kind, each in (0, 1].
struct PenaltyTable {
    std::map<core::InfractionKind, double> multipliers;

    /// Every kind present, every multiplier in (0, 1]; throws otherwise.
    void validate() const;
    double factor(core::InfractionKind kind) const;
};

/// Leaderboard-style defaults; fully config-overridable.
PenaltyTable default_penalties();

struct ComfortThresholds {
    double max_abs_steer_delta = 0.1;  // per frame
    double max_abs_accel = 3.0;        // m/s^2
    double max_abs_jerk = 10.0;        // m/s^3

    void validate() const;
};

struct MetricsReport {
    bool success = false;
    double driving_score = 0.0;        // [0, 100]
    double efficiency = 0.0;           // >= 0
    std::optional<double> comfort;     // [0, 100]; absent for traces < 20 frames
    std::map<sim::SkillTag, bool> per_skill_success;
};

/// 100 * completed_fraction * product of penalty factors over infractions.
double driving_score(const core::EpisodeTrace& trace, const PenaltyTable& penalties);

/// True iff the route was fully completed with zero infractions.
bool success(const core::EpisodeTrace& trace);

/// Mean of (ego speed / reference speed * 100) over the 5%-progress
/// checkpoints reached by the trace. The reference is the mean speed of
/// moving actors within 30 m at the checkpoint frame when any exist,
/// otherwise the route speed limit.
double efficiency(const core::EpisodeTrace& trace, const sim::RouteSpec& route);

/// Percentage of disjoint 20-frame windows whose intra-window steer deltas,
/// accelerations, and jerks all stay within thresholds. Traces shorter than
/// one window have no comfort value.
std::optional<double> comfort(const core::EpisodeTrace& trace, const ComfortThresholds& thresholds);

struct RouteResult {
    std::set<sim::SkillTag> skill_tags;
    bool success = false;
};

/// Unweighted mean of per-skill success rates; skills with no tagged routes
/// are excluded. Absent when nothing is tagged.
std::optional<double> skill_score(const std::map<std::string, RouteResult>& results);

struct Stat {
    double mean = 0.0;
    double std_dev = 0.0;  // sample (n-1); 0 when n == 1
};

/// Mean and sample standard deviation; throws on empty input.
Stat mean_std(const std::vector<double>& values);

struct AggregateStats {
    int n = 0;
    double success_rate = 0.0;  // percent
    Stat driving_score;
    Stat efficiency;
    std::optional<Stat> comfort;  // over reports that have comfort
};

/// Aggregates repeated-run reports: success as a rate, the scalar metrics
/// as mean +/- sample std. Throws on empty input.
AggregateStats aggregate(const std::vector<MetricsReport>& reports);

MetricsReport evaluate(const core::EpisodeTrace& trace, const sim::RouteSpec& route,
                       const PenaltyTable& penalties, const ComfortThresholds& thresholds);

PenaltyTable penalties_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PenaltyTable& p);
ComfortThresholds comfort_thresholds_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MetricsReport& r);

}  // namespace adloop::metrics

#endif
