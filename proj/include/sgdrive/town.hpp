#pragma once

#include <array>
#include <cstdio>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/geometry.hpp"

namespace sgdrive {

// ---------------------------------------------------------------------------
// Grid-road town. Roads run along grid lines between nodes; each road carries
// one directed lane per direction, offset to the right of travel by half a
// lane width. Intersections are free-drive boxes; lit ones alternate green
// between the two road axes so opposing directions are never green together.
// ---------------------------------------------------------------------------

struct TownParams {
    double block_m = 40.0;
    double lane_width = 4.0;        // one lane; road half-width equals lane_width
    double light_period_s = 20.0;   // full cycle; each axis green for half
    double light_prob = 0.6;        // chance a degree>=3 node gets lights
    double edge_removal = 0.15;     // fraction of removable grid edges dropped
};

struct LaneSegment {
    int from_node = 0;
    int to_node = 0;
    Vec2 start;  // trimmed to the intersection boxes
    Vec2 end;
    Vec2 dir;
    double length = 0.0;
};

struct Intersection {
    int node = 0;
    Vec2 center;
    double half_extent = 0.0;
    bool lit = false;
    double phase_offset_s = 0.0;
};

struct TrafficLightMarker {
    int intersection = 0;  // index into intersections
    int axis = 0;          // 0 = east-west roads, 1 = north-south roads
    int lane = 0;          // the approach lane this light governs
    Vec2 position;         // stop line on the lane centerline
};

struct TownMap {
    TownParams params;
    int blocks_x = 0;
    int blocks_y = 0;
    std::uint64_t rng_seed = 0;

    std::vector<Vec2> nodes;
    std::vector<std::array<int, 2>> roads;  // undirected node pairs, a < b
    std::vector<Intersection> intersections;

    // derived by finalize()
    std::vector<LaneSegment> lanes;
    std::vector<TrafficLightMarker> lights;
    std::vector<Pose> spawn_points;

    struct Aabb {
        Vec2 lo, hi;
        bool contains(const Vec2& p) const {
            return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
        }
    };
    std::vector<Aabb> drivable_rects;

    bool is_drivable(const Vec2& p) const {
        for (const auto& r : drivable_rects)
            if (r.contains(p)) return true;
        return false;
    }

    int intersection_at(const Vec2& p) const {
        for (std::size_t i = 0; i < intersections.size(); ++i) {
            const auto& box = intersections[i];
            if (std::abs(p.x - box.center.x) <= box.half_extent &&
                std::abs(p.y - box.center.y) <= box.half_extent)
                return static_cast<int>(i);
        }
        return -1;
    }

    // Which axis is green at a lit intersection at simulation time t.
    bool axis_green(const Intersection& box, int axis, double t_s) const {
        if (!box.lit) return true;  // unlit intersections behave as always-green
        const double period = params.light_period_s;
        double phase = std::fmod(t_s + box.phase_offset_s, period);
        if (phase < 0) phase += period;
        return (phase < 0.5 * period) == (axis == 0);
    }

    // Nearest lane whose direction roughly matches the heading. Returns -1 if
    // no lane matches. lateral_out gets the perpendicular distance.
    int nearest_lane(const Vec2& p, const Vec2& heading, double* lateral_out = nullptr) const {
        int best = -1;
        double best_lat = 0.0;
        for (std::size_t i = 0; i < lanes.size(); ++i) {
            const auto& ln = lanes[i];
            if (heading.dot(ln.dir) <= 0.0) continue;
            const double along = clamp((p - ln.start).dot(ln.dir), 0.0, ln.length);
            const double lat = distance(p, ln.start + ln.dir * along);
            if (best < 0 || lat < best_lat) {
                best = static_cast<int>(i);
                best_lat = lat;
            }
        }
        if (lateral_out) *lateral_out = best_lat;
        return best;
    }

    void finalize();
    std::string serialize() const;
    static TownMap parse(const std::string& text);
};

namespace detail {

inline int node_degree(int node, const std::vector<std::array<int, 2>>& roads) {
    int d = 0;
    for (const auto& r : roads)
        if (r[0] == node || r[1] == node) ++d;
    return d;
}

inline bool graph_connected(int n_nodes, const std::vector<std::array<int, 2>>& roads) {
    if (roads.empty()) return false;
    std::vector<std::vector<int>> adj(n_nodes);
    for (const auto& r : roads) {
        adj[r[0]].push_back(r[1]);
        adj[r[1]].push_back(r[0]);
    }
    std::vector<char> seen(n_nodes, 0);
    std::queue<int> q;
    q.push(roads[0][0]);
    seen[roads[0][0]] = 1;
    int reached = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++reached;
                q.push(v);
            }
    }
    return reached == n_nodes;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void TownMap::finalize() {
    lanes.clear();
    lights.clear();
    spawn_points.clear();
    drivable_rects.clear();

    const double half_road = params.lane_width;  // one lane each way
    const double lane_off = 0.5 * params.lane_width;

    for (const auto& r : roads) {
        const Vec2 a = nodes[r[0]], b = nodes[r[1]];
        Aabb rect;
        rect.lo = {std::min(a.x, b.x) - half_road, std::min(a.y, b.y) - half_road};
        rect.hi = {std::max(a.x, b.x) + half_road, std::max(a.y, b.y) + half_road};
        drivable_rects.push_back(rect);

        for (int flip = 0; flip < 2; ++flip) {
            const Vec2 from = flip ? b : a;
            const Vec2 to = flip ? a : b;
            LaneSegment ln;
            ln.from_node = flip ? r[1] : r[0];
            ln.to_node = flip ? r[0] : r[1];
            ln.dir = (to - from).normalized();
            const Vec2 off = ln.dir.right() * lane_off;
            ln.start = from + ln.dir * half_road + off;
            ln.end = to - ln.dir * half_road + off;
            ln.length = distance(ln.start, ln.end);
            lanes.push_back(ln);
        }
    }

    for (std::size_t ix = 0; ix < intersections.size(); ++ix) {
        auto& box = intersections[ix];
        box.center = nodes[box.node];
        Aabb rect;
        rect.lo = {box.center.x - box.half_extent, box.center.y - box.half_extent};
        rect.hi = {box.center.x + box.half_extent, box.center.y + box.half_extent};
        drivable_rects.push_back(rect);

        if (!box.lit) continue;
        for (std::size_t li = 0; li < lanes.size(); ++li) {
            if (lanes[li].to_node != box.node) continue;
            TrafficLightMarker m;
            m.intersection = static_cast<int>(ix);
            m.axis = (lanes[li].dir.x != 0.0) ? 0 : 1;
            m.lane = static_cast<int>(li);
            m.position = lanes[li].end;
            lights.push_back(m);
        }
    }

    for (const auto& ln : lanes) {
        Pose p;
        p.position = ln.start;
        p.heading = ln.dir;
        spawn_points.push_back(p);
    }
}

inline TownMap generate_town(std::uint64_t seed, int blocks_x, int blocks_y,
                             const TownParams& params = {}) {
    if (blocks_x < 3 || blocks_y < 3)
        throw ConfigError("town size must be at least 3x3 blocks");

    TownMap town;
    town.params = params;
    town.blocks_x = blocks_x;
    town.blocks_y = blocks_y;
    town.rng_seed = seed;

    const int nx = blocks_x + 1, ny = blocks_y + 1;
    auto node_id = [nx](int i, int j) { return j * nx + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            town.nodes.push_back({i * params.block_m, j * params.block_m});

    std::vector<std::array<int, 2>> edges;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) edges.push_back({node_id(i, j), node_id(i + 1, j)});
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i < nx; ++i) edges.push_back({node_id(i, j), node_id(i, j + 1)});

    // drop a seeded fraction of edges, keeping degree >= 2 everywhere and the
    // graph connected so every route always has a non-reversing continuation
    Rng edge_rng(hash_mix(seed, 0xed6e5ULL));
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    edge_rng.shuffle(order);

    std::vector<char> removed(edges.size(), 0);
    auto degree_with_removals = [&](int node) {
        int d = 0;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (!removed[e] && (edges[e][0] == node || edges[e][1] == node)) ++d;
        return d;
    };
    for (std::size_t idx : order) {
        if (edge_rng.next_double() >= params.edge_removal) continue;
        if (degree_with_removals(edges[idx][0]) <= 2) continue;
        if (degree_with_removals(edges[idx][1]) <= 2) continue;
        removed[idx] = 1;
        std::vector<std::array<int, 2>> kept;
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (!removed[e]) kept.push_back(edges[e]);
        if (!detail::graph_connected(static_cast<int>(town.nodes.size()), kept)) removed[idx] = 0;
    }
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (!removed[e]) town.roads.push_back(edges[e]);

    Rng light_rng(hash_mix(seed, 0x716875ULL));
    for (int n = 0; n < static_cast<int>(town.nodes.size()); ++n) {
        Intersection box;
        box.node = n;
        box.half_extent = params.lane_width;
        const int deg = detail::node_degree(n, town.roads);
        box.lit = deg >= 3 && light_rng.next_double() < params.light_prob;
        box.phase_offset_s = light_rng.uniform(0.0, params.light_period_s);
        town.intersections.push_back(box);
    }

    town.finalize();
    return town;
}

// ---------------------------------------------------------------------------
// Route sampling: seeded walk along the directed lane graph, never reversing
// onto the opposite lane of the road just driven. Returns a dense polyline
// (~1 m point spacing) along lane centerlines with straight connectors
// through intersections.
// ---------------------------------------------------------------------------

inline std::vector<Vec2> sample_route(const TownMap& town, std::uint64_t seed, double target_m) {
    if (town.lanes.empty()) throw DataError("town has no lanes");
    Rng rng(hash_mix(seed, 0x706174ULL));

    std::vector<std::vector<int>> outgoing(town.nodes.size());
    for (std::size_t i = 0; i < town.lanes.size(); ++i)
        outgoing[town.lanes[i].from_node].push_back(static_cast<int>(i));

    std::vector<Vec2> poly;
    auto append_segment = [&poly](const Vec2& from, const Vec2& to, bool include_from) {
        const double len = distance(from, to);
        const int steps = std::max(1, static_cast<int>(std::ceil(len)));
        const int first = include_from ? 0 : 1;
        for (int s = first; s <= steps; ++s)
            poly.push_back(from + (to - from) * (static_cast<double>(s) / steps));
    };

    int cur = static_cast<int>(rng.next_below(town.lanes.size()));
    double total = 0.0;
    append_segment(town.lanes[cur].start, town.lanes[cur].end, true);
    total += town.lanes[cur].length;

    while (total < target_m) {
        const auto& ln = town.lanes[cur];
        std::vector<int> options;
        for (int cand : outgoing[ln.to_node]) {
            const auto& next = town.lanes[cand];
            if (next.to_node == ln.from_node && next.from_node == ln.to_node) continue;
            options.push_back(cand);
        }
        if (options.empty()) break;  // cannot happen with min degree 2
        const int next = options[rng.next_below(options.size())];
        total += distance(ln.end, town.lanes[next].start);
        append_segment(ln.end, town.lanes[next].start, false);
        append_segment(town.lanes[next].start, town.lanes[next].end, false);
        total += town.lanes[next].length;
        cur = next;
    }
    return poly;
}

// ---------------------------------------------------------------------------
// Serialization: line-delimited text with a magic first line. Only the
// generating structure is stored; lanes, lights and spawn points are derived
// on parse. Layout documented in docs/formats.md.
// ---------------------------------------------------------------------------

inline std::string TownMap::serialize() const {
    std::ostringstream os;
    os << "SGTOWN1 1\n";
    os << "params " << detail::fmt_double(params.block_m) << ' '
       << detail::fmt_double(params.lane_width) << ' '
       << detail::fmt_double(params.light_period_s) << ' '
       << detail::fmt_double(params.light_prob) << ' ' << detail::fmt_double(params.edge_removal)
       << '\n';
    os << "size " << blocks_x << ' ' << blocks_y << '\n';
    os << "seed " << rng_seed << '\n';
    for (std::size_t i = 0; i < nodes.size(); ++i)
        os << "node " << i << ' ' << detail::fmt_double(nodes[i].x) << ' '
           << detail::fmt_double(nodes[i].y) << '\n';
    for (const auto& r : roads) os << "road " << r[0] << ' ' << r[1] << '\n';
    for (const auto& b : intersections)
        os << "inter " << b.node << ' ' << detail::fmt_double(b.half_extent) << ' '
           << (b.lit ? 1 : 0) << ' ' << detail::fmt_double(b.phase_offset_s) << '\n';
    return os.str();
}

inline TownMap TownMap::parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("SGTOWN1 ", 0) != 0)
        throw DataError("not a SGTOWN1 town file");

    TownMap town;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "params") {
            ls >> town.params.block_m >> town.params.lane_width >> town.params.light_period_s >>
                town.params.light_prob >> town.params.edge_removal;
        } else if (tag == "size") {
            ls >> town.blocks_x >> town.blocks_y;
        } else if (tag == "seed") {
            ls >> town.rng_seed;
        } else if (tag == "node") {
            std::size_t idx;
            Vec2 p;
            ls >> idx >> p.x >> p.y;
            if (town.nodes.size() != idx) throw DataError("town nodes out of order");
            town.nodes.push_back(p);
        } else if (tag == "road") {
            std::array<int, 2> r{};
            ls >> r[0] >> r[1];
            town.roads.push_back(r);
        } else if (tag == "inter") {
            Intersection b;
            int lit = 0;
            ls >> b.node >> b.half_extent >> lit >> b.phase_offset_s;
            b.lit = lit != 0;
            town.intersections.push_back(b);
        } else {
            throw DataError("unknown town record: " + tag);
        }
        if (!ls) throw DataError("malformed town record: " + line);
    }
    town.finalize();
    return town;
}

}  // namespace sgdrive
