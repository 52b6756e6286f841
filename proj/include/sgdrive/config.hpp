#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sgdrive/dataset.hpp"
#include "sgdrive/eval.hpp"
#include "sgdrive/expert.hpp"
#include "sgdrive/net.hpp"
#include "sgdrive/sensor.hpp"
#include "sgdrive/town.hpp"
#include "sgdrive/train.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

// Every tunable of the pipeline under namespaced keys. The JSON form of the
// defaults doubles as the schema: any key not present there is rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    int jobs = 1;

    struct Sim {
        std::uint64_t train_town_seed = 1;
        std::uint64_t eval_town_seed = 2;
        int blocks_x = 4;
        int blocks_y = 4;
        double block_m = 40.0;
        double lane_width = 4.0;
        double light_period_s = 20.0;
        double light_prob = 0.6;
        double edge_removal = 0.15;
        double dt = 0.2;
        double v_const = 5.0;
        double wheelbase = 2.5;
        double max_steer_deg = 35.0;
        double ego_half_length = 2.2;
        double ego_half_width = 0.9;
        double pedestrian_half = 0.3;
        double vehicle_speed = 3.5;
        double pedestrian_speed = 1.2;
        int grid = 32;
        double window_m = 16.0;
        double noise_amp = 0.5;
        double light_radius = 0.8;
        double spacing_min = 2.0;
        double lookahead_min = 3.0;
        std::vector<std::uint64_t> train_condition_seeds{1, 3, 5, 7, 9, 12, 14};
        std::vector<std::uint64_t> eval_condition_seeds{2, 4, 6, 8, 10, 11, 13};
    } sim;

    struct Expert {
        double steer_gain = 1.0 / 45.0;
        double stop_range = 6.0;
        double red_stop_range = 6.0;
        double recovery_offset = 1.0;
        double recovery_correction = 0.3;
        double corridor_margin = 0.4;
    } expert;

    struct Data {
        int episodes = 50;
        int ticks = 500;
        double route_len_m = 560.0;
        std::string channels = "as";
        int n_vehicles = 6;
        int n_pedestrians = 6;
        int n_bins = 199;
        int cap_per_bin = 200;
        std::int64_t light_injection = -1;    // -1: 10% of the post-balance size
        std::int64_t restart_injection = -1;  // -1: 5% of the post-balance size
        int record_stuck_timeout = 300;
    } data;

    struct Model {
        std::string arch = "angle-branched";
        std::string channels = "as";
        int k = 4;
        int conv1 = 16;
        int conv2 = 32;
        int conv3 = 64;
        int image_feature = 64;
        int scalar_hidden = 12;
        int fusion_hidden = 32;
        int head_hidden = 32;
    } model;

    struct Train {
        double lambda = 0.5;
        double lr0 = 0.001;
        double lr_decay = 0.9;
        int batch_size = 16;
        int epochs = 12;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_eps = 1e-8;
    } train;

    struct Eval {
        int n_paths = 50;
        int max_ticks = 1200;
        int stuck_timeout = 200;
        double goal_radius = 3.0;
        double route_len_m = 180.0;
        int n_vehicles = 6;
        int n_pedestrians = 6;
    } eval;

    // ---- converters into module configs ----

    TownParams town_params() const {
        TownParams t;
        t.block_m = sim.block_m;
        t.lane_width = sim.lane_width;
        t.light_period_s = sim.light_period_s;
        t.light_prob = sim.light_prob;
        t.edge_removal = sim.edge_removal;
        return t;
    }

    SimParams sim_params() const {
        SimParams s;
        s.dt = sim.dt;
        s.v_const = sim.v_const;
        s.wheelbase = sim.wheelbase;
        s.max_steer_deg = sim.max_steer_deg;
        s.ego_half = {sim.ego_half_length, sim.ego_half_width};
        s.vehicle_half = {sim.ego_half_length, sim.ego_half_width};
        s.pedestrian_half = {sim.pedestrian_half, sim.pedestrian_half};
        s.vehicle_speed = sim.vehicle_speed;
        s.pedestrian_speed = sim.pedestrian_speed;
        return s;
    }

    SensorParams sensor_params() const {
        SensorParams s;
        s.grid = sim.grid;
        s.window_m = sim.window_m;
        s.noise_amp = sim.noise_amp;
        s.light_radius = sim.light_radius;
        return s;
    }

    ExpertConfig expert_config() const {
        ExpertConfig e;
        e.steer_gain = expert.steer_gain;
        e.stop_range = expert.stop_range;
        e.red_stop_range = expert.red_stop_range;
        e.recovery_offset = expert.recovery_offset;
        e.recovery_correction = expert.recovery_correction;
        e.corridor_margin = expert.corridor_margin;
        e.lookahead_min = sim.lookahead_min;
        return e;
    }

    BalanceSpec balance_spec() const {
        BalanceSpec b;
        b.n_bins = data.n_bins;
        b.cap_per_bin = static_cast<std::size_t>(data.cap_per_bin);
        b.rng_seed = hash_mix(seed, 0xba1ULL);
        b.light_injection_count = data.light_injection;
        b.restart_injection_count = data.restart_injection;
        return b;
    }

    ModelDims model_dims() const {
        ModelDims d;
        d.k = model.k;
        d.grid = sim.grid;
        d.conv1 = model.conv1;
        d.conv2 = model.conv2;
        d.conv3 = model.conv3;
        d.image_feature = model.image_feature;
        d.scalar_hidden = model.scalar_hidden;
        d.fusion_hidden = model.fusion_hidden;
        d.head_hidden = model.head_hidden;
        d.speed_norm = sim.v_const;
        return d;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.lambda = train.lambda;
        t.lr0 = train.lr0;
        t.lr_decay = train.lr_decay;
        t.batch_size = train.batch_size;
        t.epochs = train.epochs;
        t.adam_beta1 = train.adam_beta1;
        t.adam_beta2 = train.adam_beta2;
        t.adam_eps = train.adam_eps;
        t.rng_seed = hash_mix(seed, 0x7241ULL);
        return t;
    }

    EvalConfig eval_config() const {
        EvalConfig e;
        e.n_paths = eval.n_paths;
        e.max_ticks = eval.max_ticks;
        e.goal_radius = eval.goal_radius;
        e.stuck_timeout = eval.stuck_timeout;
        e.route_len_m = eval.route_len_m;
        return e;
    }

    void validate() const {
        if (sim.train_town_seed == sim.eval_town_seed)
            throw ConfigError("train and eval town seeds must differ");
        for (auto t : sim.train_condition_seeds)
            for (auto e : sim.eval_condition_seeds)
                if (t == e)
                    throw ConfigError("train and eval condition seed sets must be disjoint");
        if (sim.train_condition_seeds.empty() || sim.eval_condition_seeds.empty())
            throw ConfigError("condition seed sets must be non-empty");
        arch_from_name(model.arch);
        channel_mode_from_name(model.channels);
        channel_mode_from_name(data.channels);
        train_config().validate();
        model_dims().validate();
        balance_spec().validate();
        expert_config().validate(sim.lane_width);
        if (data.episodes < 1 || data.ticks < 1 || eval.n_paths < 1)
            throw ConfigError("episode, tick and path counts must be positive");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// JSON round trip. The serialized defaults act as the schema: loading rejects
// any key that does not exist there, recursively.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    auto& s = j["sim"];
    s["train_town_seed"] = c.sim.train_town_seed;
    s["eval_town_seed"] = c.sim.eval_town_seed;
    s["blocks_x"] = c.sim.blocks_x;
    s["blocks_y"] = c.sim.blocks_y;
    s["block_m"] = c.sim.block_m;
    s["lane_width"] = c.sim.lane_width;
    s["light_period_s"] = c.sim.light_period_s;
    s["light_prob"] = c.sim.light_prob;
    s["edge_removal"] = c.sim.edge_removal;
    s["dt"] = c.sim.dt;
    s["v_const"] = c.sim.v_const;
    s["wheelbase"] = c.sim.wheelbase;
    s["max_steer_deg"] = c.sim.max_steer_deg;
    s["ego_half_length"] = c.sim.ego_half_length;
    s["ego_half_width"] = c.sim.ego_half_width;
    s["pedestrian_half"] = c.sim.pedestrian_half;
    s["vehicle_speed"] = c.sim.vehicle_speed;
    s["pedestrian_speed"] = c.sim.pedestrian_speed;
    s["grid"] = c.sim.grid;
    s["window_m"] = c.sim.window_m;
    s["noise_amp"] = c.sim.noise_amp;
    s["light_radius"] = c.sim.light_radius;
    s["spacing_min"] = c.sim.spacing_min;
    s["lookahead_min"] = c.sim.lookahead_min;
    s["train_condition_seeds"] = c.sim.train_condition_seeds;
    s["eval_condition_seeds"] = c.sim.eval_condition_seeds;
    auto& e = j["expert"];
    e["steer_gain"] = c.expert.steer_gain;
    e["stop_range"] = c.expert.stop_range;
    e["red_stop_range"] = c.expert.red_stop_range;
    e["recovery_offset"] = c.expert.recovery_offset;
    e["recovery_correction"] = c.expert.recovery_correction;
    e["corridor_margin"] = c.expert.corridor_margin;
    auto& d = j["data"];
    d["episodes"] = c.data.episodes;
    d["ticks"] = c.data.ticks;
    d["route_len_m"] = c.data.route_len_m;
    d["channels"] = c.data.channels;
    d["n_vehicles"] = c.data.n_vehicles;
    d["n_pedestrians"] = c.data.n_pedestrians;
    d["n_bins"] = c.data.n_bins;
    d["cap_per_bin"] = c.data.cap_per_bin;
    d["light_injection"] = c.data.light_injection;
    d["restart_injection"] = c.data.restart_injection;
    d["record_stuck_timeout"] = c.data.record_stuck_timeout;
    auto& m = j["model"];
    m["arch"] = c.model.arch;
    m["channels"] = c.model.channels;
    m["k"] = c.model.k;
    m["conv1"] = c.model.conv1;
    m["conv2"] = c.model.conv2;
    m["conv3"] = c.model.conv3;
    m["image_feature"] = c.model.image_feature;
    m["scalar_hidden"] = c.model.scalar_hidden;
    m["fusion_hidden"] = c.model.fusion_hidden;
    m["head_hidden"] = c.model.head_hidden;
    auto& t = j["train"];
    t["lambda"] = c.train.lambda;
    t["lr0"] = c.train.lr0;
    t["lr_decay"] = c.train.lr_decay;
    t["batch_size"] = c.train.batch_size;
    t["epochs"] = c.train.epochs;
    t["adam_beta1"] = c.train.adam_beta1;
    t["adam_beta2"] = c.train.adam_beta2;
    t["adam_eps"] = c.train.adam_eps;
    auto& v = j["eval"];
    v["n_paths"] = c.eval.n_paths;
    v["max_ticks"] = c.eval.max_ticks;
    v["stuck_timeout"] = c.eval.stuck_timeout;
    v["goal_radius"] = c.eval.goal_radius;
    v["route_len_m"] = c.eval.route_len_m;
    v["n_vehicles"] = c.eval.n_vehicles;
    v["n_pedestrians"] = c.eval.n_pedestrians;
    return j;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& schema, const nlohmann::json& doc,
                                const std::string& scope) {
    if (!doc.is_object()) return;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string path = scope.empty() ? it.key() : scope + "." + it.key();
        if (!schema.is_object() || !schema.contains(it.key()))
            throw ConfigError("unknown config key: " + path);
        reject_unknown_keys(schema[it.key()], it.value(), path);
    }
}

inline void merge_into(nlohmann::ordered_json& base, const nlohmann::json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_into(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::ordered_json& j) {
    RunConfig c;
    c.seed = j["seed"];
    c.jobs = j["jobs"];
    const auto& s = j["sim"];
    c.sim.train_town_seed = s["train_town_seed"];
    c.sim.eval_town_seed = s["eval_town_seed"];
    c.sim.blocks_x = s["blocks_x"];
    c.sim.blocks_y = s["blocks_y"];
    c.sim.block_m = s["block_m"];
    c.sim.lane_width = s["lane_width"];
    c.sim.light_period_s = s["light_period_s"];
    c.sim.light_prob = s["light_prob"];
    c.sim.edge_removal = s["edge_removal"];
    c.sim.dt = s["dt"];
    c.sim.v_const = s["v_const"];
    c.sim.wheelbase = s["wheelbase"];
    c.sim.max_steer_deg = s["max_steer_deg"];
    c.sim.ego_half_length = s["ego_half_length"];
    c.sim.ego_half_width = s["ego_half_width"];
    c.sim.pedestrian_half = s["pedestrian_half"];
    c.sim.vehicle_speed = s["vehicle_speed"];
    c.sim.pedestrian_speed = s["pedestrian_speed"];
    c.sim.grid = s["grid"];
    c.sim.window_m = s["window_m"];
    c.sim.noise_amp = s["noise_amp"];
    c.sim.light_radius = s["light_radius"];
    c.sim.spacing_min = s["spacing_min"];
    c.sim.lookahead_min = s["lookahead_min"];
    c.sim.train_condition_seeds = s["train_condition_seeds"].get<std::vector<std::uint64_t>>();
    c.sim.eval_condition_seeds = s["eval_condition_seeds"].get<std::vector<std::uint64_t>>();
    const auto& e = j["expert"];
    c.expert.steer_gain = e["steer_gain"];
    c.expert.stop_range = e["stop_range"];
    c.expert.red_stop_range = e["red_stop_range"];
    c.expert.recovery_offset = e["recovery_offset"];
    c.expert.recovery_correction = e["recovery_correction"];
    c.expert.corridor_margin = e["corridor_margin"];
    const auto& d = j["data"];
    c.data.episodes = d["episodes"];
    c.data.ticks = d["ticks"];
    c.data.route_len_m = d["route_len_m"];
    c.data.channels = d["channels"];
    c.data.n_vehicles = d["n_vehicles"];
    c.data.n_pedestrians = d["n_pedestrians"];
    c.data.n_bins = d["n_bins"];
    c.data.cap_per_bin = d["cap_per_bin"];
    c.data.light_injection = d["light_injection"];
    c.data.restart_injection = d["restart_injection"];
    c.data.record_stuck_timeout = d["record_stuck_timeout"];
    const auto& m = j["model"];
    c.model.arch = m["arch"];
    c.model.channels = m["channels"];
    c.model.k = m["k"];
    c.model.conv1 = m["conv1"];
    c.model.conv2 = m["conv2"];
    c.model.conv3 = m["conv3"];
    c.model.image_feature = m["image_feature"];
    c.model.scalar_hidden = m["scalar_hidden"];
    c.model.fusion_hidden = m["fusion_hidden"];
    c.model.head_hidden = m["head_hidden"];
    const auto& t = j["train"];
    c.train.lambda = t["lambda"];
    c.train.lr0 = t["lr0"];
    c.train.lr_decay = t["lr_decay"];
    c.train.batch_size = t["batch_size"];
    c.train.epochs = t["epochs"];
    c.train.adam_beta1 = t["adam_beta1"];
    c.train.adam_beta2 = t["adam_beta2"];
    c.train.adam_eps = t["adam_eps"];
    const auto& v = j["eval"];
    c.eval.n_paths = v["n_paths"];
    c.eval.max_ticks = v["max_ticks"];
    c.eval.stuck_timeout = v["stuck_timeout"];
    c.eval.goal_radius = v["goal_radius"];
    c.eval.route_len_m = v["route_len_m"];
    c.eval.n_vehicles = v["n_vehicles"];
    c.eval.n_pedestrians = v["n_pedestrians"];
    return c;
}

// Layered load: defaults <- config file (optional) <- "--set a.b=v" overrides.
// Flags win. Unknown keys anywhere are rejected against the default schema.
inline RunConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
    nlohmann::ordered_json merged = config_to_json(RunConfig{});
    const nlohmann::ordered_json schema = merged;

    if (!config_path.empty()) {
        nlohmann::json file_json;
        try {
            file_json = nlohmann::json::parse(io::read_file(config_path));
        } catch (const nlohmann::json::parse_error& err) {
            throw ConfigError(std::string("config parse error: ") + err.what());
        }
        detail::reject_unknown_keys(schema, file_json, "");
        detail::merge_into(merged, file_json);
    }

    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must look like key.path=value: " + kv);
        const std::string path = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);

        nlohmann::json value;
        try {
            value = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::parse_error&) {
            value = raw;  // bare strings like "asd" stay strings
        }

        nlohmann::ordered_json* node = &merged;
        const nlohmann::ordered_json* schema_node = &schema;
        std::size_t begin = 0;
        while (true) {
            const auto dot = path.find('.', begin);
            const std::string key = path.substr(begin, dot - begin);
            if (!schema_node->contains(key)) throw ConfigError("unknown config key: " + path);
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            schema_node = &(*schema_node)[key];
            begin = dot + 1;
        }
    }

    RunConfig c = config_from_json(merged);
    c.validate();
    return c;
}

}  // namespace sgdrive
