#pragma once

#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/geometry.hpp"
#include "sgdrive/sensor.hpp"
#include "sgdrive/town.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

struct ExpertConfig {
    double steer_gain = 1.0 / 45.0;    // steer per degree of subgoal angle
    double stop_range = 6.0;           // obstacle lookahead along the forward corridor
    double red_stop_range = 6.0;       // stop-line distance for red lights
    double recovery_offset = 1.0;      // lateral offset of the side viewpoints
    double recovery_correction = 0.3;  // corrective steer per meter of offset
    double lookahead_min = 3.0;        // subgoal selection distance d
    double corridor_margin = 0.4;      // widens the stop corridor beyond the ego body

    void validate(double lane_width) const {
        if (steer_gain <= 0.0 || stop_range <= 0.0 || red_stop_range <= 0.0)
            throw ConfigError("expert gains and ranges must be positive");
        if (recovery_offset < 0.0 || recovery_offset >= 0.5 * lane_width)
            throw ConfigError("recovery_offset must be within half a lane width");
    }
};

namespace detail {

inline bool red_light_ahead(const TownMap& town, const WorldState& world, const SimParams& sim,
                            const ExpertConfig& cfg) {
    const int lane = town.nearest_lane(world.ego.position, world.ego.heading);
    if (lane < 0) return false;
    const double t_s = world.time_s(sim.dt);
    for (const auto& lm : town.lights) {
        if (lm.lane != lane) continue;
        if (town.axis_green(town.intersections[lm.intersection], lm.axis, t_s)) continue;
        const double ahead = (lm.position - world.ego.position).dot(world.ego.heading);
        if (ahead >= 0.0 && ahead <= cfg.red_stop_range) return true;
    }
    return false;
}

inline bool obstacle_ahead(const WorldState& world, const SimParams& sim,
                           const ExpertConfig& cfg) {
    // corridor box extending stop_range ahead of the ego front bumper
    Obb corridor;
    corridor.forward = world.ego.heading;
    corridor.half = {0.5 * cfg.stop_range, sim.ego_half.y + cfg.corridor_margin};
    corridor.center =
        world.ego.position + world.ego.heading * (sim.ego_half.x + 0.5 * cfg.stop_range);
    for (const auto& actor : world.actors)
        if (obb_overlap(corridor, actor_obb(actor))) return true;
    return false;
}

}  // namespace detail

// Proportional steering toward the subgoal; stop for red lights governing the
// current lane and for actors inside the forward corridor. Returns the angle
// used so the recorder can log it as the navigation command.
inline std::pair<Action, SubgoalAngle> expert_action(const TownMap& town, const WorldState& world,
                                                     const PathSpec& path, ProgressCursor& cursor,
                                                     const ExpertConfig& cfg,
                                                     const SimParams& sim) {
    auto [subgoal, advanced] = select_subgoal(path, cursor, world.ego, cfg.lookahead_min);
    cursor = advanced;

    SubgoalAngle angle{0.0};
    if (distance(subgoal, world.ego.position) > 0.0)
        angle = subgoal_angle(subgoal_direction(subgoal, world.ego), world.ego.heading);

    Action action;
    action.steer = clamp(cfg.steer_gain * angle.degrees, -1.0, 1.0);
    const bool must_stop = detail::red_light_ahead(town, world, sim, cfg) ||
                           detail::obstacle_ahead(world, sim, cfg);
    action.throttle = must_stop ? 0 : 1;
    return {action, angle};
}

struct RecoverySample {
    Pose viewpoint;
    SensorFrame frame;
    SubgoalAngle angle;
    Action action;
};

// Two laterally offset viewpoints per tick standing in for the side cameras.
// The left view is labeled with a corrective steer back toward the lane
// (positive steers right), the right view with the opposite shift; throttle is
// the center label unchanged. Angles are recomputed from the offset poses
// against the center subgoal.
inline std::vector<RecoverySample> recovery_samples(const TownMap& town, const WorldState& world,
                                                    const PathSpec& path,
                                                    const ProgressCursor& cursor,
                                                    const ExpertConfig& cfg, const SimParams& sim,
                                                    std::uint64_t condition_seed, ChannelMode mode,
                                                    const SensorParams& sp,
                                                    const Action& center_action) {
    auto [subgoal, ignored] = select_subgoal(path, cursor, world.ego, cfg.lookahead_min);
    (void)ignored;

    std::vector<RecoverySample> out;
    const Vec2 right = world.ego.heading.right();
    const double shifts[2] = {-cfg.recovery_offset, +cfg.recovery_offset};  // left, right
    const double delta = cfg.recovery_correction * cfg.recovery_offset;
    const double corrections[2] = {+delta, -delta};
    for (int side = 0; side < 2; ++side) {
        RecoverySample s;
        s.viewpoint = world.ego;
        s.viewpoint.position = world.ego.position + right * shifts[side];
        s.frame = sense(town, world, s.viewpoint, condition_seed, mode, sp, sim.dt);
        s.angle = SubgoalAngle{0.0};
        if (distance(subgoal, s.viewpoint.position) > 0.0)
            s.angle = subgoal_angle(subgoal_direction(subgoal, s.viewpoint), s.viewpoint.heading);
        s.action.steer = clamp(center_action.steer + corrections[side], -1.0, 1.0);
        s.action.throttle = center_action.throttle;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace sgdrive
