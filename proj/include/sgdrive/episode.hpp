#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/expert.hpp"
#include "sgdrive/geometry.hpp"
#include "sgdrive/sensor.hpp"
#include "sgdrive/town.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

// Per-tick record of a demonstration episode. Besides the center command and
// action, the two recovery-view commands and steer labels are stored so that
// training samples come straight from the log.
struct TickRecord {
    std::uint32_t tick = 0;
    Pose ego;
    double angle_deg = 0.0;
    double steer = 0.0;
    std::uint8_t throttle = 0;
    std::uint8_t flags = 0;  // bit0 vehicle, bit1 pedestrian, bit2 other, bit3 off-lane
    std::uint8_t light_visible = 0;
    double angle_left = 0.0;
    double steer_left = 0.0;
    double angle_right = 0.0;
    double steer_right = 0.0;
};

enum Viewpoint : int { kViewCenter = 0, kViewLeft = 1, kViewRight = 2 };

struct EpisodeLog {
    std::uint64_t town_seed = 0;
    std::uint64_t condition_seed = 0;
    std::uint64_t episode_id = 0;
    double dt = 0.2;
    std::uint32_t k = 4;
    std::uint16_t grid_h = 32, grid_w = 32;
    std::uint8_t channels = 6;
    ChannelMode mode = ChannelMode::AS;

    std::vector<TickRecord> ticks;
    std::vector<SensorFrame> frames;  // 3 per tick: center, left, right

    const SensorFrame& frame(std::uint32_t tick, int viewpoint) const {
        return frames[static_cast<std::size_t>(tick) * 3 + viewpoint];
    }
};

struct RecordSpec {
    std::uint64_t town_seed = 0;
    std::uint64_t condition_seed = 1;
    std::uint64_t episode_id = 0;
    std::uint64_t actor_seed = 0;
    std::uint32_t k = 4;
    int length = 500;
    int n_vehicles = 6;
    int n_pedestrians = 6;
    int stuck_timeout = 300;  // ticks without cursor progress before aborting
    ChannelMode mode = ChannelMode::AS;
};

// Closed-loop expert demonstration. Deterministic given the seeds; throws
// RecordingError (discarding the partial log) if the expert makes no path
// progress for stuck_timeout ticks.
inline EpisodeLog record_episode(const TownMap& town, const PathSpec& path, const Pose& start,
                                 const ExpertConfig& expert_cfg, const SimParams& sim,
                                 const SensorParams& sensor, const RecordSpec& spec) {
    EpisodeLog log;
    log.town_seed = spec.town_seed;
    log.condition_seed = spec.condition_seed;
    log.episode_id = spec.episode_id;
    log.dt = sim.dt;
    log.k = spec.k;
    log.grid_h = static_cast<std::uint16_t>(sensor.grid);
    log.grid_w = static_cast<std::uint16_t>(sensor.grid);
    log.channels = static_cast<std::uint8_t>(channel_count(spec.mode));
    log.mode = spec.mode;

    WorldState world = make_world(
        town, start, populate_actors(town, spec.actor_seed, spec.n_vehicles, spec.n_pedestrians, sim),
        sim);
    ProgressCursor cursor;
    std::size_t last_progress_index = 0;
    int last_progress_tick = 0;

    for (int t = 0; t < spec.length; ++t) {
        auto [action, angle] = expert_action(town, world, path, cursor, expert_cfg, sim);
        const auto sides = recovery_samples(town, world, path, cursor, expert_cfg, sim,
                                            spec.condition_seed, spec.mode, sensor, action);
        SensorFrame center = sense(town, world, world.ego, spec.condition_seed, spec.mode, sensor,
                                   sim.dt);

        TickRecord rec;
        rec.tick = static_cast<std::uint32_t>(world.tick);
        rec.ego = world.ego;
        rec.angle_deg = angle.degrees;
        rec.steer = action.steer;
        rec.throttle = static_cast<std::uint8_t>(action.throttle);
        rec.flags = static_cast<std::uint8_t>((world.collision_flags.vehicle ? 1 : 0) |
                                              (world.collision_flags.pedestrian ? 2 : 0) |
                                              (world.collision_flags.other ? 4 : 0) |
                                              (world.off_lane ? 8 : 0));
        rec.light_visible =
            (center.any_set(kChanRedLight) || center.any_set(kChanGreenLight)) ? 1 : 0;
        rec.angle_left = sides[0].angle.degrees;
        rec.steer_left = sides[0].action.steer;
        rec.angle_right = sides[1].angle.degrees;
        rec.steer_right = sides[1].action.steer;

        log.ticks.push_back(rec);
        log.frames.push_back(std::move(center));
        log.frames.push_back(sides[0].frame);
        log.frames.push_back(sides[1].frame);

        if (cursor.last_passed_index > last_progress_index) {
            last_progress_index = cursor.last_passed_index;
            last_progress_tick = t;
        } else if (t - last_progress_tick > spec.stuck_timeout) {
            throw RecordingError("expert stuck at tick " + std::to_string(t));
        }

        world = step(town, world, action, sim.dt, sim);
    }
    return log;
}

// Path reconstruction from logged positions (chronological order), as used to
// rebuild navigation commands offline.
inline PathSpec reconstruct_path(const EpisodeLog& log, double spacing_min) {
    if (log.ticks.empty()) throw DataError("empty episode log");
    std::vector<Vec2> positions;
    positions.reserve(log.ticks.size());
    for (const auto& rec : log.ticks) positions.push_back(rec.ego.position);
    return discretize_path(positions, spacing_min);
}

// ---------------------------------------------------------------------------
// Episode container file, magic "SGDRV1", version 1. Fixed-size header, then
// per tick one fixed-stride record followed by the three raster frames as raw
// channel-major byte arrays. Layout documented in docs/formats.md.
// ---------------------------------------------------------------------------

inline void save_episode(const EpisodeLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw RunError("cannot write " + path);
    os.write("SGDRV1", 6);
    io::write_le<std::uint16_t>(os, 1);
    io::write_le<std::uint64_t>(os, log.town_seed);
    io::write_le<std::uint64_t>(os, log.condition_seed);
    io::write_le<std::uint64_t>(os, log.episode_id);
    io::write_le<double>(os, log.dt);
    io::write_le<std::uint32_t>(os, log.k);
    io::write_le<std::uint16_t>(os, log.grid_h);
    io::write_le<std::uint16_t>(os, log.grid_w);
    io::write_le<std::uint8_t>(os, log.channels);
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(log.mode));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(log.ticks.size()));

    const std::size_t frame_bytes =
        static_cast<std::size_t>(log.grid_h) * log.grid_w * log.channels;
    for (std::size_t t = 0; t < log.ticks.size(); ++t) {
        const TickRecord& r = log.ticks[t];
        io::write_le<std::uint32_t>(os, r.tick);
        io::write_le<double>(os, r.ego.position.x);
        io::write_le<double>(os, r.ego.position.y);
        io::write_le<double>(os, r.ego.heading.x);
        io::write_le<double>(os, r.ego.heading.y);
        io::write_le<double>(os, r.ego.speed);
        io::write_le<double>(os, r.angle_deg);
        io::write_le<double>(os, r.steer);
        io::write_le<std::uint8_t>(os, r.throttle);
        io::write_le<std::uint8_t>(os, r.flags);
        io::write_le<std::uint8_t>(os, r.light_visible);
        io::write_le<std::uint8_t>(os, 0);  // pad, keeps the record stride at 96 bytes
        io::write_le<double>(os, r.angle_left);
        io::write_le<double>(os, r.steer_left);
        io::write_le<double>(os, r.angle_right);
        io::write_le<double>(os, r.steer_right);
        for (int v = 0; v < 3; ++v) {
            const SensorFrame& f = log.frames[t * 3 + v];
            if (f.cells.size() != frame_bytes) throw DataError("frame size mismatch");
            io::write_bytes(os, f.cells.data(), frame_bytes);
        }
    }
    if (!os) throw RunError("short write to " + path);
}

inline EpisodeLog load_episode(const std::string& path, bool load_frames = true) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char magic[6];
    is.read(magic, 6);
    if (!is || std::string(magic, 6) != "SGDRV1") throw DataError(path + " is not a SGDRV1 file");
    const auto version = io::read_le<std::uint16_t>(is);
    if (version != 1) throw DataError("unsupported episode version");

    EpisodeLog log;
    log.town_seed = io::read_le<std::uint64_t>(is);
    log.condition_seed = io::read_le<std::uint64_t>(is);
    log.episode_id = io::read_le<std::uint64_t>(is);
    log.dt = io::read_le<double>(is);
    log.k = io::read_le<std::uint32_t>(is);
    log.grid_h = io::read_le<std::uint16_t>(is);
    log.grid_w = io::read_le<std::uint16_t>(is);
    log.channels = io::read_le<std::uint8_t>(is);
    log.mode = static_cast<ChannelMode>(io::read_le<std::uint8_t>(is));
    const auto n_ticks = io::read_le<std::uint32_t>(is);

    const std::size_t frame_bytes =
        static_cast<std::size_t>(log.grid_h) * log.grid_w * log.channels;
    log.ticks.reserve(n_ticks);
    if (load_frames) log.frames.reserve(static_cast<std::size_t>(n_ticks) * 3);
    for (std::uint32_t t = 0; t < n_ticks; ++t) {
        TickRecord r;
        r.tick = io::read_le<std::uint32_t>(is);
        r.ego.position.x = io::read_le<double>(is);
        r.ego.position.y = io::read_le<double>(is);
        r.ego.heading.x = io::read_le<double>(is);
        r.ego.heading.y = io::read_le<double>(is);
        r.ego.speed = io::read_le<double>(is);
        r.angle_deg = io::read_le<double>(is);
        r.steer = io::read_le<double>(is);
        r.throttle = io::read_le<std::uint8_t>(is);
        r.flags = io::read_le<std::uint8_t>(is);
        r.light_visible = io::read_le<std::uint8_t>(is);
        io::read_le<std::uint8_t>(is);
        r.angle_left = io::read_le<double>(is);
        r.steer_left = io::read_le<double>(is);
        r.angle_right = io::read_le<double>(is);
        r.steer_right = io::read_le<double>(is);
        log.ticks.push_back(r);
        for (int v = 0; v < 3; ++v) {
            SensorFrame f;
            f.h = log.grid_h;
            f.w = log.grid_w;
            f.channels = log.channels;
            f.mode = log.mode;
            f.cells.resize(frame_bytes);
            io::read_bytes(is, f.cells.data(), frame_bytes);
            if (load_frames) log.frames.push_back(std::move(f));
        }
    }
    return log;
}

}  // namespace sgdrive
