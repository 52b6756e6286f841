#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdrive/expert.hpp"
#include "sgdrive/net.hpp"
#include "sgdrive/sensor.hpp"
#include "sgdrive/town.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

struct EvalConfig {
    int n_paths = 50;
    int max_ticks = 1200;
    double goal_radius = 3.0;
    int stuck_timeout = 200;  // ticks without cursor progress
    double route_len_m = 180.0;
};

enum class Termination : int { Goal = 0, Timeout = 1, Stuck = 2 };

inline const char* termination_name(Termination t) {
    switch (t) {
        case Termination::Goal: return "goal";
        case Termination::Timeout: return "timeout";
        default: return "stuck";
    }
}

struct EpisodeResult {
    bool success = false;
    double distance_total = 0.0;
    double distance_non_normal = 0.0;
    std::array<int, 3> collisions{0, 0, 0};  // vehicle, pedestrian, other
    Termination termination = Termination::Timeout;
    int ticks = 0;
    // deviation from the shadow expert, for failure attribution
    double expert_steer_dev = 0.0;     // mean |steer - expert steer|
    double expert_throttle_dev = 0.0;  // fraction of mismatched throttle ticks
};

// Closed loop: sense -> subgoal angle -> policy -> step. Infractions mark
// distance as non-normal but never terminate an episode; collision events are
// debounced per actor (one count per contiguous contact). When net is null the
// scripted expert drives. Deterministic for fixed inputs.
inline EpisodeResult rollout(const TownMap& town, const PathSpec& path, const Pose& start,
                             std::vector<ActorState> actors, const ModelParameters* net,
                             const ExpertConfig& expert_cfg, const SimParams& sim,
                             const SensorParams& sensor, const EvalConfig& cfg,
                             std::uint64_t condition_seed, std::ostream* trace = nullptr) {
    WorldState world = make_world(town, start, std::move(actors), sim);
    ProgressCursor cursor;
    ProgressCursor shadow_cursor;
    ObservationStack stack;
    if (net) {
        stack.k = net->dims.k;
        stack.mode = net->mode;
    }

    EpisodeResult result;
    std::vector<bool> contact(world.actors.size(), false);
    bool other_contact = false;
    std::size_t last_progress = 0;
    int last_progress_tick = 0;
    double steer_dev_sum = 0.0;
    int throttle_mismatch = 0;

    if (distance(world.ego.position, path.back()) <= cfg.goal_radius) {
        result.success = true;
        result.termination = Termination::Goal;
        return result;
    }

    int t = 0;
    for (; t < cfg.max_ticks; ++t) {
        Action action;
        SubgoalAngle angle{0.0};
        if (net) {
            auto [subgoal, advanced] = select_subgoal(path, cursor, world.ego, expert_cfg.lookahead_min);
            cursor = advanced;
            if (distance(subgoal, world.ego.position) > 0.0)
                angle = subgoal_angle(subgoal_direction(subgoal, world.ego), world.ego.heading);
            stack.push(sense(town, world, world.ego, condition_seed, net->mode, sensor, sim.dt));
            const NetworkOutput out = forward(*net, stack, world.ego.speed, angle.degrees);
            action.steer = out.steer;
            action.throttle = out.throttle();

            Action expert_says;
            ProgressCursor c = shadow_cursor;
            std::tie(expert_says, std::ignore) =
                expert_action(town, world, path, c, expert_cfg, sim);
            shadow_cursor = c;
            steer_dev_sum += std::abs(action.steer - expert_says.steer);
            if (action.throttle != expert_says.throttle) ++throttle_mismatch;
        } else {
            std::tie(action, angle) = expert_action(town, world, path, cursor, expert_cfg, sim);
        }

        if (trace) {
            nlohmann::ordered_json line;
            line["tick"] = t;
            line["x"] = world.ego.position.x;
            line["y"] = world.ego.position.y;
            line["hx"] = world.ego.heading.x;
            line["hy"] = world.ego.heading.y;
            line["speed"] = world.ego.speed;
            line["angle"] = angle.degrees;
            line["steer"] = action.steer;
            line["throttle"] = action.throttle;
            (*trace) << line.dump() << '\n';
        }

        const Vec2 before = world.ego.position;
        world = step(town, world, action, sim.dt, sim);
        const double moved = distance(before, world.ego.position);
        result.distance_total += moved;
        if (world.collision_flags.any() || world.off_lane) result.distance_non_normal += moved;

        const Obb ego{world.ego.position, world.ego.heading, sim.ego_half};
        for (std::size_t a = 0; a < world.actors.size(); ++a) {
            const bool now = obb_overlap(ego, actor_obb(world.actors[a]));
            if (now && !contact[a]) {
                const int cat = world.actors[a].kind == ActorKind::Vehicle ? kCollisionVehicle
                                                                           : kCollisionPedestrian;
                ++result.collisions[cat];
            }
            contact[a] = now;
        }
        if (world.collision_flags.other && !other_contact) ++result.collisions[kCollisionOther];
        other_contact = world.collision_flags.other;

        if (cursor.last_passed_index > last_progress) {
            last_progress = cursor.last_passed_index;
            last_progress_tick = t;
        }

        if (distance(world.ego.position, path.back()) <= cfg.goal_radius) {
            result.success = true;
            result.termination = Termination::Goal;
            ++t;
            break;
        }
        if (t - last_progress_tick >= cfg.stuck_timeout) {
            result.termination = Termination::Stuck;
            ++t;
            break;
        }
        result.termination = Termination::Timeout;
    }

    result.ticks = t;
    if (net && t > 0) {
        result.expert_steer_dev = steer_dev_sum / t;
        result.expert_throttle_dev = static_cast<double>(throttle_mismatch) / t;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Aggregation: success rate over all episodes; normal-driving rate and
// per-category collisions per km over the successful episodes only. With no
// successful episodes those metrics are undefined (explicit marker, not 0).
// ---------------------------------------------------------------------------

struct EvalReport {
    int episodes = 0;
    int successes = 0;
    double success_rate = 0.0;  // percent
    std::optional<double> normal_driving_rate;  // percent
    std::array<std::optional<double>, 3> collisions_per_km;
    std::vector<EpisodeResult> per_episode;
};

inline EvalReport aggregate(const std::vector<EpisodeResult>& results) {
    if (results.empty()) throw DataError("aggregate needs at least one episode result");
    EvalReport r;
    r.episodes = static_cast<int>(results.size());
    r.per_episode = results;

    double dist_success = 0.0, dist_normal = 0.0;
    std::array<int, 3> coll{0, 0, 0};
    for (const auto& e : results) {
        if (!e.success) continue;
        ++r.successes;
        dist_success += e.distance_total;
        dist_normal += e.distance_total - e.distance_non_normal;
        for (int c = 0; c < 3; ++c) coll[c] += e.collisions[c];
    }
    r.success_rate = 100.0 * static_cast<double>(r.successes) / r.episodes;
    if (r.successes > 0 && dist_success > 0.0) {
        r.normal_driving_rate = 100.0 * dist_normal / dist_success;
        for (int c = 0; c < 3; ++c)
            r.collisions_per_km[c] = static_cast<double>(coll[c]) / (dist_success / 1000.0);
    }
    return r;
}

inline nlohmann::ordered_json episode_to_json(const EpisodeResult& e) {
    nlohmann::ordered_json j;
    j["success"] = e.success;
    j["termination"] = termination_name(e.termination);
    j["ticks"] = e.ticks;
    j["distance_m"] = e.distance_total;
    j["non_normal_m"] = e.distance_non_normal;
    j["collisions_vehicle"] = e.collisions[0];
    j["collisions_pedestrian"] = e.collisions[1];
    j["collisions_other"] = e.collisions[2];
    j["expert_steer_dev"] = e.expert_steer_dev;
    j["expert_throttle_dev"] = e.expert_throttle_dev;
    return j;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["format"] = "sgreport-v1";
    j["episodes"] = r.episodes;
    j["successes"] = r.successes;
    j["success_rate"] = r.success_rate;
    if (r.normal_driving_rate)
        j["normal_driving_rate"] = *r.normal_driving_rate;
    else
        j["normal_driving_rate"] = nullptr;
    const char* names[3] = {"vehicle", "pedestrian", "other"};
    for (int c = 0; c < 3; ++c) {
        if (r.collisions_per_km[c])
            j["collisions_per_km"][names[c]] = *r.collisions_per_km[c];
        else
            j["collisions_per_km"][names[c]] = nullptr;
    }
    j["per_episode"] = nlohmann::ordered_json::array();
    for (const auto& e : r.per_episode) j["per_episode"].push_back(episode_to_json(e));
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j["format"] != "sgreport-v1")
        throw DataError("not a sgreport-v1 document");
    EvalReport r;
    r.episodes = j["episodes"];
    r.successes = j["successes"];
    r.success_rate = j["success_rate"];
    if (!j["normal_driving_rate"].is_null()) r.normal_driving_rate = j["normal_driving_rate"];
    const char* names[3] = {"vehicle", "pedestrian", "other"};
    for (int c = 0; c < 3; ++c)
        if (!j["collisions_per_km"][names[c]].is_null())
            r.collisions_per_km[c] = j["collisions_per_km"][names[c]];
    for (const auto& ej : j["per_episode"]) {
        EpisodeResult e;
        e.success = ej["success"];
        const std::string term = ej["termination"];
        e.termination = term == "goal" ? Termination::Goal
                        : term == "stuck" ? Termination::Stuck
                                          : Termination::Timeout;
        e.ticks = ej["ticks"];
        e.distance_total = ej["distance_m"];
        e.distance_non_normal = ej["non_normal_m"];
        e.collisions = {ej["collisions_vehicle"], ej["collisions_pedestrian"],
                        ej["collisions_other"]};
        e.expert_steer_dev = ej["expert_steer_dev"];
        e.expert_throttle_dev = ej["expert_throttle_dev"];
        r.per_episode.push_back(e);
    }
    return r;
}

inline std::string report_to_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "episode,success,termination,ticks,distance_m,non_normal_m,coll_vehicle,coll_pedestrian,"
          "coll_other,expert_steer_dev,expert_throttle_dev\n";
    char buf[64];
    for (std::size_t i = 0; i < r.per_episode.size(); ++i) {
        const auto& e = r.per_episode[i];
        os << i << ',' << (e.success ? 1 : 0) << ',' << termination_name(e.termination) << ','
           << e.ticks << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", e.distance_total);
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", e.distance_non_normal);
        os << buf << ',' << e.collisions[0] << ',' << e.collisions[1] << ',' << e.collisions[2]
           << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", e.expert_steer_dev);
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", e.expert_throttle_dev);
        os << buf << '\n';
    }
    return os.str();
}

}  // namespace sgdrive
