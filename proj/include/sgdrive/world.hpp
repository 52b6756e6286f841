#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/geometry.hpp"
#include "sgdrive/town.hpp"

namespace sgdrive {

// Steer in [-1, 1], throttle binary: the vehicle either stops or drives at a
// constant speed.
struct Action {
    double steer = 0.0;
    int throttle = 0;
};

struct SimParams {
    double dt = 0.2;
    double v_const = 5.0;
    double wheelbase = 2.5;
    double max_steer_deg = 35.0;
    Vec2 ego_half{2.2, 0.9};
    Vec2 vehicle_half{2.2, 0.9};
    Vec2 pedestrian_half{0.3, 0.3};
    double vehicle_speed = 3.5;
    double pedestrian_speed = 1.2;
};

enum class ActorKind : std::uint8_t { Vehicle = 0, Pedestrian = 1 };

struct ActorState {
    ActorKind kind = ActorKind::Vehicle;
    Pose pose;
    Vec2 half_extents;
    std::vector<Vec2> waypoints;  // cyclic script
    double script_speed = 0.0;
    std::size_t next_wp = 0;
};

enum CollisionCategory : int {
    kCollisionVehicle = 0,
    kCollisionPedestrian = 1,
    kCollisionOther = 2,
};

struct CollisionFlags {
    bool vehicle = false;
    bool pedestrian = false;
    bool other = false;

    bool any() const { return vehicle || pedestrian || other; }
    bool get(int category) const {
        return category == kCollisionVehicle ? vehicle
               : category == kCollisionPedestrian ? pedestrian
                                                  : other;
    }
};

struct WorldState {
    std::uint64_t tick = 0;
    Pose ego;
    std::vector<ActorState> actors;
    CollisionFlags collision_flags;
    bool off_lane = false;

    double time_s(double dt) const { return static_cast<double>(tick) * dt; }
};

// ---------------------------------------------------------------------------
// Oriented bounding boxes (separating axis test)
// ---------------------------------------------------------------------------

struct Obb {
    Vec2 center;
    Vec2 forward;  // unit
    Vec2 half;     // half extents along (forward, right)

    Vec2 right() const { return forward.right(); }
};

inline Obb actor_obb(const ActorState& a) { return {a.pose.position, a.pose.heading, a.half_extents}; }

inline bool obb_overlap(const Obb& a, const Obb& b) {
    const Vec2 axes[4] = {a.forward, a.right(), b.forward, b.right()};
    const Vec2 d = b.center - a.center;
    for (const Vec2& u : axes) {
        const double ra = std::abs(a.forward.dot(u)) * a.half.x + std::abs(a.right().dot(u)) * a.half.y;
        const double rb = std::abs(b.forward.dot(u)) * b.half.x + std::abs(b.right().dot(u)) * b.half.y;
        if (std::abs(d.dot(u)) > ra + rb) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Infractions: recomputed from geometry every tick, never carried stale.
// ---------------------------------------------------------------------------

inline std::pair<CollisionFlags, bool> infractions(const TownMap& town, const WorldState& world,
                                                   const SimParams& params) {
    CollisionFlags flags;
    const Obb ego{world.ego.position, world.ego.heading, params.ego_half};

    for (const auto& actor : world.actors) {
        if (!obb_overlap(ego, actor_obb(actor))) continue;
        if (actor.kind == ActorKind::Vehicle)
            flags.vehicle = true;
        else
            flags.pedestrian = true;
    }

    // collision with "others": any part of the footprint off the drivable area
    const Vec2 f = ego.forward * ego.half.x;
    const Vec2 r = ego.right() * ego.half.y;
    const Vec2 samples[9] = {
        ego.center,
        ego.center + f + r, ego.center + f - r, ego.center - f + r, ego.center - f - r,
        ego.center + f,     ego.center - f,     ego.center + r,     ego.center - r,
    };
    for (const Vec2& p : samples) {
        if (!town.is_drivable(p)) {
            flags.other = true;
            break;
        }
    }

    bool off_lane = false;
    if (town.intersection_at(world.ego.position) < 0) {
        double lateral = 0.0;
        const int lane = town.nearest_lane(world.ego.position, world.ego.heading, &lateral);
        off_lane = lane < 0 || lateral > 0.5 * town.params.lane_width;
    }
    return {flags, off_lane};
}

// ---------------------------------------------------------------------------
// Deterministic fixed-step update. Ego follows a kinematic bicycle model with
// binary throttle (v = v_const * th); positive steer turns the vehicle to the
// right. Scripted actors advance open-loop along their waypoint cycles.
// ---------------------------------------------------------------------------

inline void advance_actor(ActorState& actor, double dt) {
    if (actor.waypoints.empty() || actor.script_speed <= 0.0) return;
    double remaining = actor.script_speed * dt;
    for (int guard = 0; remaining > 1e-12 && guard < 64; ++guard) {
        const Vec2 target = actor.waypoints[actor.next_wp];
        const double d = distance(actor.pose.position, target);
        if (d <= 1e-12) {
            actor.next_wp = (actor.next_wp + 1) % actor.waypoints.size();
            continue;
        }
        actor.pose.heading = (target - actor.pose.position).normalized();
        if (d <= remaining) {
            actor.pose.position = target;
            remaining -= d;
            actor.next_wp = (actor.next_wp + 1) % actor.waypoints.size();
        } else {
            actor.pose.position += actor.pose.heading * remaining;
            remaining = 0.0;
        }
    }
    actor.pose.speed = actor.script_speed;
}

inline WorldState step(const TownMap& town, const WorldState& world, const Action& action,
                       double dt, const SimParams& params) {
    if (!std::isfinite(action.steer) || (action.throttle != 0 && action.throttle != 1))
        throw InvalidActionError("non-finite steer or non-binary throttle");
    if (dt <= 0.0) throw ConfigError("dt must be positive");

    WorldState next = world;
    next.tick = world.tick + 1;

    const double steer = clamp(action.steer, -1.0, 1.0);
    const double v = params.v_const * action.throttle;
    double theta = std::atan2(world.ego.heading.y, world.ego.heading.x);
    next.ego.position = world.ego.position + world.ego.heading * (v * dt);
    theta -= (v / params.wheelbase) * std::tan(deg_to_rad(params.max_steer_deg) * steer) * dt;
    next.ego.heading = {std::cos(theta), std::sin(theta)};
    next.ego.speed = v;

    for (auto& actor : next.actors) advance_actor(actor, dt);

    auto [flags, off] = infractions(town, next, params);
    next.collision_flags = flags;
    next.off_lane = off;
    return next;
}

// ---------------------------------------------------------------------------
// Seeded actor population: vehicles loop counterclockwise around full block
// rings on the outer lanes; pedestrians shuttle back and forth across a road.
// Scripts are open-loop and never react to the ego.
// ---------------------------------------------------------------------------

inline std::vector<ActorState> populate_actors(const TownMap& town, std::uint64_t seed,
                                               int n_vehicles, int n_pedestrians,
                                               const SimParams& params) {
    Rng rng(hash_mix(seed, 0xac7052ULL));
    std::vector<ActorState> actors;

    const int nx = town.blocks_x + 1;
    auto node_id = [nx](int i, int j) { return j * nx + i; };
    auto has_road = [&town](int a, int b) {
        if (a > b) std::swap(a, b);
        for (const auto& r : town.roads)
            if (r[0] == a && r[1] == b) return true;
        return false;
    };

    std::vector<std::array<Vec2, 4>> rings;
    for (int j = 0; j < town.blocks_y; ++j) {
        for (int i = 0; i < town.blocks_x; ++i) {
            const int a = node_id(i, j), b = node_id(i + 1, j), c = node_id(i + 1, j + 1),
                      d = node_id(i, j + 1);
            if (!(has_road(a, b) && has_road(b, c) && has_road(c, d) && has_road(d, a))) continue;
            const double off = 0.5 * town.params.lane_width;
            const Vec2 pa = town.nodes[a], pb = town.nodes[b], pc = town.nodes[c],
                       pd = town.nodes[d];
            // counterclockwise on right-hand lanes encircling the block
            rings.push_back({Vec2{pb.x + off, pb.y - off}, Vec2{pc.x + off, pc.y + off},
                             Vec2{pd.x - off, pd.y + off}, Vec2{pa.x - off, pa.y - off}});
        }
    }

    for (int v = 0; v < n_vehicles; ++v) {
        ActorState a;
        a.kind = ActorKind::Vehicle;
        a.half_extents = params.vehicle_half;
        a.script_speed = params.vehicle_speed;
        if (!rings.empty()) {
            const auto& ring = rings[rng.next_below(rings.size())];
            a.waypoints.assign(ring.begin(), ring.end());
            const std::size_t start = rng.next_below(4);
            const double frac = rng.next_double();
            const Vec2 from = ring[start], to = ring[(start + 1) % 4];
            a.pose.position = from + (to - from) * frac;
            a.pose.heading = (to - from).normalized();
            a.next_wp = (start + 1) % 4;
        } else {
            const auto& ln = town.lanes[rng.next_below(town.lanes.size())];
            a.waypoints = {ln.start, ln.end};
            a.pose.position = ln.start;
            a.pose.heading = ln.dir;
            a.next_wp = 1;
        }
        a.pose.speed = a.script_speed;
        actors.push_back(a);
    }

    for (int p = 0; p < n_pedestrians; ++p) {
        ActorState a;
        a.kind = ActorKind::Pedestrian;
        a.half_extents = params.pedestrian_half;
        a.script_speed = params.pedestrian_speed;
        const auto& road = town.roads[rng.next_below(town.roads.size())];
        const Vec2 axis_a = town.nodes[road[0]], axis_b = town.nodes[road[1]];
        const Vec2 dir = (axis_b - axis_a).normalized();
        const Vec2 across = dir.right();
        const Vec2 mid = axis_a + (axis_b - axis_a) * rng.uniform(0.3, 0.7);
        const double reach = town.params.lane_width + 0.8;
        const Vec2 p1 = mid + across * reach, p2 = mid - across * reach;
        a.waypoints = {p1, p2};
        a.pose.position = p1 + (p2 - p1) * rng.next_double();
        a.pose.heading = (p2 - p1).normalized();
        a.next_wp = 1;
        a.pose.speed = a.script_speed;
        actors.push_back(a);
    }

    return actors;
}

inline WorldState make_world(const TownMap& town, const Pose& ego_start,
                             std::vector<ActorState> actors, const SimParams& params) {
    ego_start.validate();
    WorldState world;
    world.ego = ego_start;
    world.actors = std::move(actors);
    auto [flags, off] = infractions(town, world, params);
    world.collision_flags = flags;
    world.off_lane = off;
    return world;
}

}  // namespace sgdrive
