#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "sgdrive/eval.hpp"

using namespace sgdrive;

namespace {

struct Scene {
    TownMap town;
    PathSpec path;
    Pose start;

    static Scene make(std::uint64_t town_seed, std::uint64_t route_seed, double len) {
        Scene s{generate_town(town_seed, 4, 4), {}, {}};
        const auto route = sample_route(s.town, route_seed, len);
        s.path = discretize_path(route, 2.0);
        s.start = Pose{route[0], (route[1] - route[0]).normalized(), 0.0};
        return s;
    }
};

ModelDims small_dims() {
    ModelDims d;
    d.k = 4;
    d.grid = 16;
    d.conv1 = 4;
    d.conv2 = 6;
    d.conv3 = 8;
    d.image_feature = 12;
    d.scalar_hidden = 4;
    d.fusion_hidden = 8;
    d.head_hidden = 8;
    return d;
}

EpisodeResult make_result(bool success, double dist, double nn, std::array<int, 3> coll) {
    EpisodeResult e;
    e.success = success;
    e.distance_total = dist;
    e.distance_non_normal = nn;
    e.collisions = coll;
    e.termination = success ? Termination::Goal : Termination::Stuck;
    return e;
}

}  // namespace

TEST_CASE("expert rollout on an actor-free town succeeds with zero non-normal distance") {
    const Scene s = Scene::make(2, 5, 160.0);
    SimParams sim;
    ExpertConfig cfg;
    EvalConfig eval;
    eval.max_ticks = 900;
    const EpisodeResult r =
        rollout(s.town, s.path, s.start, {}, nullptr, cfg, sim, {}, eval, 1);
    CHECK(r.success);
    CHECK(r.termination == Termination::Goal);
    CHECK(r.distance_non_normal == 0.0);
    CHECK(r.distance_total > 100.0);
    CHECK(r.collisions == std::array<int, 3>{0, 0, 0});
}

TEST_CASE("a policy that never throttles terminates as stuck") {
    const Scene s = Scene::make(2, 5, 160.0);
    SimParams sim;
    ExpertConfig cfg;
    EvalConfig eval;
    eval.stuck_timeout = 50;
    auto net = build_model(ArchTag::AngleInput, ChannelMode::AS, small_dims(), 3);
    for (auto& [name, t] : net.tensors) t.fill(0.0);  // zero net: equal logits -> throttle 0
    SensorParams sensor;
    sensor.grid = 16;
    const EpisodeResult r =
        rollout(s.town, s.path, s.start, {}, &net, cfg, sim, sensor, eval, 1);
    CHECK_FALSE(r.success);
    CHECK(r.termination == Termination::Stuck);
    CHECK(r.distance_total == 0.0);
    CHECK(r.expert_throttle_dev > 0.9);  // the shadow expert would have driven
}

TEST_CASE("a mid-route collision is counted once but does not fail the episode") {
    const TownMap town = generate_town(2, 4, 4);
    SimParams sim;
    ExpertConfig cfg;
    EvalConfig eval;
    eval.max_ticks = 200;

    // straight path along one lane, with a pedestrian standing on it;
    // the policy is a zero network biased to constant full throttle, so it
    // plows straight through and still reaches the goal
    const auto& lane = town.lanes[0];
    std::vector<Vec2> line;
    for (double d = 0.0; d <= lane.length; d += 2.0) line.push_back(lane.start + lane.dir * d);
    const PathSpec path = discretize_path(line, 2.0);
    const Pose start{lane.start, lane.dir, 0.0};

    ActorState ped;
    ped.kind = ActorKind::Pedestrian;
    ped.half_extents = sim.pedestrian_half;
    ped.pose = Pose{lane.start + lane.dir * (0.5 * lane.length), {0, 1}, 0.0};
    ped.script_speed = 0.0;

    auto net = build_model(ArchTag::AngleInput, ChannelMode::AS, small_dims(), 3);
    for (auto& [name, t] : net.tensors) t.fill(0.0);
    net.tensors.at("head_out.b").data[2] = 1.0;  // throttle logit 1 wins: always drive

    SensorParams sensor;
    sensor.grid = 16;
    const EpisodeResult r =
        rollout(town, path, start, {ped}, &net, cfg, sim, sensor, eval, 1);
    CHECK(r.success);
    CHECK(r.collisions[kCollisionPedestrian] == 1);  // debounced contiguous contact
    CHECK(r.distance_non_normal > 0.0);
    CHECK(r.distance_non_normal < r.distance_total);
    CHECK(r.expert_throttle_dev > 0.0);  // the shadow expert would have stopped
}

TEST_CASE("rollout is deterministic") {
    const Scene s = Scene::make(3, 9, 140.0);
    SimParams sim;
    ExpertConfig cfg;
    EvalConfig eval;
    eval.max_ticks = 700;
    auto run = [&]() {
        std::ostringstream trace;
        const EpisodeResult r = rollout(s.town, s.path, s.start,
                                        populate_actors(s.town, 5, 3, 3, sim), nullptr, cfg, sim,
                                        {}, eval, 2, &trace);
        return std::make_pair(r, trace.str());
    };
    const auto [ra, ta] = run();
    const auto [rb, tb] = run();
    CHECK(ra.distance_total == rb.distance_total);
    CHECK(ra.distance_non_normal == rb.distance_non_normal);
    CHECK(ra.collisions == rb.collisions);
    CHECK(ra.ticks == rb.ticks);
    CHECK(ta == tb);
    CHECK(ta.find("\"tick\"") != std::string::npos);
}

TEST_CASE("aggregate reproduces the success-rate and collisions-per-km formulas") {
    std::vector<EpisodeResult> results;
    for (int i = 0; i < 27; ++i) results.push_back(make_result(true, 1000, 0, {0, 0, 0}));
    for (int i = 0; i < 23; ++i) results.push_back(make_result(false, 400, 10, {0, 0, 0}));
    const EvalReport r = aggregate(results);
    CHECK(r.success_rate == doctest::Approx(54.0));

    // two successful 1.18 km episodes with 3 vehicle collisions in total
    std::vector<EpisodeResult> two = {make_result(true, 1180, 0, {2, 0, 0}),
                                      make_result(true, 1180, 0, {1, 0, 0}),
                                      make_result(false, 100, 0, {5, 0, 0})};
    const EvalReport r2 = aggregate(two);
    REQUIRE(r2.collisions_per_km[kCollisionVehicle].has_value());
    CHECK(*r2.collisions_per_km[kCollisionVehicle] == doctest::Approx(1.27).epsilon(1e-2));

    // fully normal driving
    REQUIRE(r.normal_driving_rate.has_value());
    CHECK(*r.normal_driving_rate == doctest::Approx(100.0));
}

TEST_CASE("aggregate is permutation invariant") {
    std::vector<EpisodeResult> results = {make_result(true, 500, 25, {1, 0, 2}),
                                          make_result(false, 200, 50, {0, 1, 0}),
                                          make_result(true, 800, 0, {0, 0, 1}),
                                          make_result(true, 300, 300, {2, 2, 2})};
    const EvalReport a = aggregate(results);
    std::reverse(results.begin(), results.end());
    const EvalReport b = aggregate(results);
    CHECK(a.success_rate == b.success_rate);
    CHECK(*a.normal_driving_rate == *b.normal_driving_rate);
    for (int c = 0; c < 3; ++c) CHECK(*a.collisions_per_km[c] == *b.collisions_per_km[c]);
}

TEST_CASE("zero successes leave dependent metrics undefined, not zero") {
    std::vector<EpisodeResult> results = {make_result(false, 100, 10, {1, 1, 1}),
                                          make_result(false, 50, 0, {0, 0, 0})};
    const EvalReport r = aggregate(results);
    CHECK(r.success_rate == 0.0);
    CHECK_FALSE(r.normal_driving_rate.has_value());
    CHECK_FALSE(r.collisions_per_km[0].has_value());
    const auto j = report_to_json(r);
    CHECK(j["normal_driving_rate"].is_null());
    CHECK(j["collisions_per_km"]["vehicle"].is_null());
}

TEST_CASE("report JSON round-trips through the parser") {
    std::vector<EpisodeResult> results = {make_result(true, 512.5, 12.25, {1, 0, 2}),
                                          make_result(false, 99.75, 3.5, {0, 1, 0})};
    results[0].expert_steer_dev = 0.125;
    results[1].expert_throttle_dev = 0.5;
    const EvalReport r = aggregate(results);
    const auto j = report_to_json(r);
    const EvalReport back = report_from_json(nlohmann::json::parse(j.dump()));
    CHECK(report_to_json(back).dump() == j.dump());

    const std::string csv = report_to_csv(r);
    CHECK(csv.find("episode,success,termination") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("normal-driving rate is exactly 100 iff no successful episode has non-normal ticks") {
    std::vector<EpisodeResult> clean = {make_result(true, 100, 0, {0, 0, 0}),
                                        make_result(false, 10, 5, {0, 0, 0})};
    CHECK(*aggregate(clean).normal_driving_rate == 100.0);
    std::vector<EpisodeResult> dirty = {make_result(true, 100, 1e-6, {0, 0, 0})};
    CHECK(*aggregate(dirty).normal_driving_rate < 100.0);
}
