#include "adloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace adloop::metrics {

namespace {

using core::EpisodeTrace;
using core::InfractionKind;
using nlohmann::json;

constexpr int kWindow = 20;            // comfort window, frames
constexpr double kCheckpointStep = 0.05;
constexpr double kNeighborRange = 30.0;  // m, efficiency reference lookup

}  // namespace

void PenaltyTable::validate() const {
    for (InfractionKind kind : core::kAllInfractionKinds) {
        auto it = multipliers.find(kind);
        if (it == multipliers.end()) {
            throw std::invalid_argument(std::string("penalties: missing kind ") +
                                        core::to_string(kind));
        }
        if (!(it->second > 0.0) || it->second > 1.0) {
            throw std::invalid_argument(std::string("penalties: multiplier for ") +
                                        core::to_string(kind) + " must be in (0,1]");
        }
    }
}

double PenaltyTable::factor(InfractionKind kind) const { return multipliers.at(kind); }

PenaltyTable default_penalties() {
    PenaltyTable p;
    p.multipliers = {
        {InfractionKind::collision_pedestrian, 0.50},
        {InfractionKind::collision_vehicle, 0.60},
        {InfractionKind::collision_static, 0.65},
        {InfractionKind::red_light, 0.70},
        {InfractionKind::boundary_crossing, 0.80},
        {InfractionKind::route_deviation, 0.70},
        {InfractionKind::timeout, 0.70},
    };
    return p;
}

void ComfortThresholds::validate() const {
    if (!(max_abs_steer_delta > 0.0) || !(max_abs_accel > 0.0) || !(max_abs_jerk > 0.0)) {
        throw std::invalid_argument("comfort thresholds must be strictly positive");
    }
}

double driving_score(const EpisodeTrace& trace, const PenaltyTable& penalties) {
    penalties.validate();
    double score = 100.0 * trace.completed_fraction;
    for (const core::Infraction& inf : trace.infractions) {
        score *= penalties.factor(inf.kind);
    }
    return score;
}

bool success(const EpisodeTrace& trace) {
    return trace.completed_fraction == 1.0 && trace.infractions.empty();
}

double efficiency(const EpisodeTrace& trace, const sim::RouteSpec& route) {
    double sum = 0.0;
    int reached = 0;
    for (int cp = 1; cp <= 20; ++cp) {
        const double threshold = cp * kCheckpointStep;
        const core::FrameRecord* frame = nullptr;
        for (const core::FrameRecord& f : trace.frames) {
            if (f.observation.route_progress >= threshold - 1e-12) {
                frame = &f;
                break;
            }
        }
        if (!frame) continue;  // unreached checkpoints are excluded

        double actor_speed_sum = 0.0;
        int actor_count = 0;
        for (const core::ActorSample& a : frame->observation.actors) {
            if (a.range_m <= kNeighborRange) {
                actor_speed_sum += a.speed_mps;
                ++actor_count;
            }
        }
        double reference = route.speed_limit;
        if (actor_count > 0) {
            const double mean_speed = actor_speed_sum / actor_count;
            // A fully stopped neighborhood gives no usable reference.
            if (mean_speed > 1e-3) reference = mean_speed;
        }
        sum += frame->observation.ego.speed / reference * 100.0;
        ++reached;
    }
    return reached == 0 ? 0.0 : sum / reached;
}

std::optional<double> comfort(const EpisodeTrace& trace, const ComfortThresholds& thresholds) {
    thresholds.validate();
    const std::size_t n = trace.frames.size();
    if (n < kWindow) return std::nullopt;

    const std::size_t windows = n / kWindow;
    std::size_t smooth = 0;
    for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t s = w * kWindow;
        bool ok = true;
        double prev_accel = 0.0;
        for (std::size_t i = s + 1; i < s + kWindow && ok; ++i) {
            const auto& cur = trace.frames[i];
            const auto& prev = trace.frames[i - 1];
            const double dt = cur.dt > 0.0 ? cur.dt : 1.0;
            const double steer_delta = cur.control.steer - prev.control.steer;
            const double accel = (cur.observation.ego.speed - prev.observation.ego.speed) / dt;
            if (std::abs(steer_delta) > thresholds.max_abs_steer_delta) ok = false;
            if (std::abs(accel) > thresholds.max_abs_accel) ok = false;
            if (i >= s + 2) {
                const double jerk = (accel - prev_accel) / dt;
                if (std::abs(jerk) > thresholds.max_abs_jerk) ok = false;
            }
            prev_accel = accel;
        }
        if (ok) ++smooth;
    }
    return 100.0 * static_cast<double>(smooth) / static_cast<double>(windows);
}

std::optional<double> skill_score(const std::map<std::string, RouteResult>& results) {
    std::map<sim::SkillTag, std::pair<int, int>> tally;  // tag -> (successes, total)
    for (const auto& [route_id, result] : results) {
        for (sim::SkillTag tag : result.skill_tags) {
            auto& [successes, total] = tally[tag];
            if (result.success) ++successes;
            ++total;
        }
    }
    if (tally.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [tag, counts] : tally) {
        sum += 100.0 * counts.first / counts.second;
    }
    return sum / static_cast<double>(tally.size());
}

Stat mean_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_std: empty input");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    if (values.size() == 1) return Stat{mean, 0.0};
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return Stat{mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

AggregateStats aggregate(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: empty report list");

    AggregateStats out;
    out.n = static_cast<int>(reports.size());

    int successes = 0;
    std::vector<double> ds, eff, comf;
    for (const MetricsReport& r : reports) {
        if (r.success) ++successes;
        ds.push_back(r.driving_score);
        eff.push_back(r.efficiency);
        if (r.comfort) comf.push_back(*r.comfort);
    }
    out.success_rate = 100.0 * successes / static_cast<double>(reports.size());
    out.driving_score = mean_std(ds);
    out.efficiency = mean_std(eff);
    if (!comf.empty()) out.comfort = mean_std(comf);
    return out;
}

MetricsReport evaluate(const EpisodeTrace& trace, const sim::RouteSpec& route,
                       const PenaltyTable& penalties, const ComfortThresholds& thresholds) {
    MetricsReport r;
    r.success = success(trace);
    r.driving_score = driving_score(trace, penalties);
    r.efficiency = efficiency(trace, route);
    r.comfort = comfort(trace, thresholds);
    for (sim::SkillTag tag : route.skill_tags) r.per_skill_success[tag] = r.success;
    return r;
}

PenaltyTable penalties_from_json(const json& j) {
    PenaltyTable p = default_penalties();
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto kind = core::infraction_from_string(it.key());
        if (!kind) throw std::invalid_argument("penalties: unknown kind " + it.key());
        p.multipliers[*kind] = it.value().get<double>();
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const PenaltyTable& p) {
    json j = json::object();
    for (const auto& [kind, factor] : p.multipliers) j[core::to_string(kind)] = factor;
    return j;
}

ComfortThresholds comfort_thresholds_from_json(const json& j) {
    ComfortThresholds t;
    t.max_abs_steer_delta = j.value("max_abs_steer_delta", t.max_abs_steer_delta);
    t.max_abs_accel = j.value("max_abs_accel", t.max_abs_accel);
    t.max_abs_jerk = j.value("max_abs_jerk", t.max_abs_jerk);
    t.validate();
    return t;
}

nlohmann::json to_json(const MetricsReport& r) {
    json skills = json::object();
    for (const auto& [tag, ok] : r.per_skill_success) skills[sim::to_string(tag)] = ok;
    return json{{"success", r.success},
                {"driving_score", r.driving_score},
                {"efficiency", r.efficiency},
                {"comfort", r.comfort ? json(*r.comfort) : json(nullptr)},
                {"per_skill_success", std::move(skills)}};
}

}  // namespace adloop::metrics
