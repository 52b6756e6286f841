#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/geometry.hpp"
#include "sgdrive/town.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

enum class ChannelMode : std::uint8_t { AS = 0, ASD = 1 };

inline int channel_count(ChannelMode m) { return m == ChannelMode::AS ? 6 : 7; }

inline const char* channel_mode_name(ChannelMode m) { return m == ChannelMode::AS ? "as" : "asd"; }

inline ChannelMode channel_mode_from_name(const std::string& s) {
    if (s == "as") return ChannelMode::AS;
    if (s == "asd") return ChannelMode::ASD;
    throw ConfigError("unknown channel mode: " + s + " (expected as|asd)");
}

// channel plane indices
enum SensorChannel : int {
    kChanAppearance = 0,
    kChanDrivable = 1,
    kChanVehicle = 2,
    kChanPedestrian = 3,
    kChanRedLight = 4,
    kChanGreenLight = 5,
    kChanDepth = 6,  // ASD only
};

struct SensorParams {
    int grid = 32;
    double window_m = 16.0;
    double noise_amp = 0.5;
    double light_radius = 0.8;
    int anchor_back_cells = 4;  // ego anchor this many rows above the bottom edge

    double cell_size() const { return window_m / grid; }
};

// Egocentric raster snapshot. Values are stored quantized (one byte per cell)
// so that episode files round-trip exactly: semantic channels hold 0/1,
// appearance and depth hold q with logical value q * 12 / 255.
struct SensorFrame {
    std::uint16_t h = 0, w = 0;
    std::uint8_t channels = 0;
    ChannelMode mode = ChannelMode::AS;
    std::vector<std::uint8_t> cells;  // channel-major [c][r][w]

    std::size_t index(int c, int r, int col) const {
        return (static_cast<std::size_t>(c) * h + r) * w + col;
    }
    std::uint8_t raw(int c, int r, int col) const { return cells[index(c, r, col)]; }

    // logical cell value: binary for semantic channels, [0, 12] otherwise
    double value(int c, int r, int col) const {
        const std::uint8_t q = raw(c, r, col);
        if (c >= kChanDrivable && c <= kChanGreenLight) return q ? 1.0 : 0.0;
        return q * (12.0 / 255.0);
    }

    bool any_set(int c) const {
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                if (raw(c, r, col)) return true;
        return false;
    }
};

inline std::uint8_t quantize12(double v) {
    v = clamp(v, 0.0, 12.0);
    return static_cast<std::uint8_t>(std::lround(v * (255.0 / 12.0)));
}

namespace detail {

inline double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                        std::uint64_t d = 0) {
    return (hash_mix(a, b, c, d) >> 11) * 0x1.0p-53;
}

// per-condition-seed appearance palette; semantic identity never depends on it
inline double palette(std::uint64_t condition_seed, int entity_class) {
    return 1.0 + 10.0 * hash_unit(condition_seed, 0x70616cULL, static_cast<std::uint64_t>(entity_class));
}

}  // namespace detail

// Render an egocentric raster from the viewpoint (not necessarily the ego
// pose; recovery views pass laterally offset poses). The grid is in the
// viewpoint frame: row 0 is farthest forward, the anchor cell always maps to
// the viewpoint position facing grid-up. Appearance depends on the condition
// seed (palette + per-tick noise); semantic channels do not.
inline SensorFrame sense(const TownMap& town, const WorldState& world, const Pose& viewpoint,
                         std::uint64_t condition_seed, ChannelMode mode,
                         const SensorParams& sp = {}, double dt = 0.2) {
    if (!std::isfinite(viewpoint.position.x) || !std::isfinite(viewpoint.position.y))
        throw DataError("non-finite sensing viewpoint");

    SensorFrame frame;
    frame.h = static_cast<std::uint16_t>(sp.grid);
    frame.w = static_cast<std::uint16_t>(sp.grid);
    frame.channels = static_cast<std::uint8_t>(channel_count(mode));
    frame.mode = mode;
    frame.cells.assign(static_cast<std::size_t>(frame.channels) * sp.grid * sp.grid, 0);

    const double cs = sp.cell_size();
    const int anchor_row = sp.grid - sp.anchor_back_cells;
    const int anchor_col = sp.grid / 2;
    const Vec2 fwd = viewpoint.heading;
    const Vec2 right = fwd.right();
    const double t_s = world.time_s(dt);

    // precompute light states once
    struct LightCell {
        Vec2 pos;
        bool green;
    };
    std::vector<LightCell> light_cells;
    light_cells.reserve(town.lights.size());
    for (const auto& lm : town.lights) {
        const auto& box = town.intersections[lm.intersection];
        light_cells.push_back({lm.position, town.axis_green(box, lm.axis, t_s)});
    }

    for (int r = 0; r < sp.grid; ++r) {
        for (int col = 0; col < sp.grid; ++col) {
            const double f = (anchor_row - r) * cs;
            const double l = (col - anchor_col) * cs;
            const Vec2 p = viewpoint.position + fwd * f + right * l;

            const bool drivable = town.is_drivable(p);
            bool vehicle = false, pedestrian = false;
            for (const auto& actor : world.actors) {
                const Obb box = actor_obb(actor);
                const Vec2 d = p - box.center;
                if (std::abs(d.dot(box.forward)) <= box.half.x &&
                    std::abs(d.dot(box.right())) <= box.half.y) {
                    if (actor.kind == ActorKind::Vehicle)
                        vehicle = true;
                    else
                        pedestrian = true;
                }
            }
            bool red = false, green = false;
            for (const auto& lc : light_cells) {
                if (distance(p, lc.pos) > sp.light_radius) continue;
                (lc.green ? green : red) = true;
            }

            if (drivable) frame.cells[frame.index(kChanDrivable, r, col)] = 1;
            if (vehicle) frame.cells[frame.index(kChanVehicle, r, col)] = 1;
            if (pedestrian) frame.cells[frame.index(kChanPedestrian, r, col)] = 1;
            if (red) frame.cells[frame.index(kChanRedLight, r, col)] = 1;
            if (green) frame.cells[frame.index(kChanGreenLight, r, col)] = 1;

            // appearance: class palette by priority, plus seeded per-tick noise
            int entity_class = drivable ? 0 : 1;
            if (green) entity_class = 2;
            if (red) entity_class = 3;
            if (vehicle) entity_class = 4;
            if (pedestrian) entity_class = 5;
            double appearance = detail::palette(condition_seed, entity_class);
            appearance += sp.noise_amp *
                          (2.0 * detail::hash_unit(condition_seed, world.tick,
                                                   static_cast<std::uint64_t>(r) << 20 | col) -
                           1.0);
            frame.cells[frame.index(kChanAppearance, r, col)] = quantize12(appearance);

            if (mode == ChannelMode::ASD) {
                const bool occupied = !drivable || vehicle || pedestrian || red || green;
                double depth = 12.0;  // background saturates at the far value
                if (occupied) {
                    const double range = distance(p, viewpoint.position);
                    depth = 12.0 * clamp(range / sp.window_m, 0.0, 1.0);
                }
                frame.cells[frame.index(kChanDepth, r, col)] = quantize12(depth);
            }
        }
    }
    return frame;
}

// k most recent frames, oldest first. The first frame of an episode is
// replicated k times.
struct ObservationStack {
    int k = 4;
    ChannelMode mode = ChannelMode::AS;
    std::deque<SensorFrame> frames;

    void push(SensorFrame f) {
        if (frames.empty()) {
            for (int i = 0; i + 1 < k; ++i) frames.push_back(f);
        } else if (static_cast<int>(frames.size()) >= k) {
            frames.pop_front();
        }
        frames.push_back(std::move(f));
    }

    bool full() const { return static_cast<int>(frames.size()) == k; }

    // flattened [k*C][H][W] input, frame-major then channel
    std::vector<double> to_input() const {
        if (!full()) throw DataError("observation stack does not hold k frames");
        const auto& f0 = frames.front();
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(k) * f0.channels * f0.h * f0.w);
        for (const auto& fr : frames)
            for (int c = 0; c < fr.channels; ++c)
                for (int r = 0; r < fr.h; ++r)
                    for (int col = 0; col < fr.w; ++col) out.push_back(fr.value(c, r, col));
        return out;
    }
};

}  // namespace sgdrive
