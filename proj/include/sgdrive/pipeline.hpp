#pragma once

#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

#include "sgdrive/config.hpp"
#include "sgdrive/dataset.hpp"
#include "sgdrive/episode.hpp"
#include "sgdrive/eval.hpp"
#include "sgdrive/train.hpp"

namespace sgdrive {

namespace detail {

// deterministic work splitting; outputs are keyed by index, so the schedule
// never affects results
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w]() {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < n;
                     i += static_cast<std::size_t>(jobs))
                    fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string episode_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ep_%04d.sgd", index);
    return buf;
}

inline void write_resolved_config(const RunConfig& cfg, const std::string& out_dir,
                                  const std::string& command) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config_to_json(cfg);
    io::write_file(out_dir + "/resolved_config.json", j.dump(2) + "\n");
}

constexpr std::uint64_t kTagCollectRoute = 0xc011ec7ULL;
constexpr std::uint64_t kTagCollectActors = 0xac7ULL;
constexpr std::uint64_t kTagEvalRoute = 0xe7a1ULL;
constexpr std::uint64_t kTagEvalActors = 0xe7ac7ULL;
constexpr std::uint64_t kTagInit = 0x1417ULL;

}  // namespace detail

// ---------------------------------------------------------------------------
// collect: expert demonstrations over sampled routes in the training town
// ---------------------------------------------------------------------------

struct CollectResult {
    std::string index_path;
    std::string town_path;
    std::vector<std::string> episode_files;
};

inline CollectResult cmd_collect(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const TownMap town =
        generate_town(cfg.sim.train_town_seed, cfg.sim.blocks_x, cfg.sim.blocks_y,
                      cfg.town_params());
    const std::string town_path = out_dir + "/town.sgtown";
    io::write_file(town_path, town.serialize());

    const SimParams sim = cfg.sim_params();
    const SensorParams sensor = cfg.sensor_params();
    const ExpertConfig expert = cfg.expert_config();
    const ChannelMode mode = channel_mode_from_name(cfg.data.channels);

    const int n = cfg.data.episodes;
    std::vector<std::string> files(static_cast<std::size_t>(n));
    std::vector<std::uint64_t> cond_seeds(static_cast<std::size_t>(n));
    std::vector<std::uint32_t> tick_counts(static_cast<std::size_t>(n));

    detail::parallel_for(static_cast<std::size_t>(n), cfg.jobs, [&](std::size_t i) {
        const auto route_seed = hash_mix(cfg.seed, detail::kTagCollectRoute, i);
        const auto route = sample_route(town, route_seed, cfg.data.route_len_m);
        const PathSpec path = discretize_path(route, cfg.sim.spacing_min);
        // episodes begin rolling: the constant-speed expert never demonstrates
        // a standing start, so recordings and rollouts share the same regime
        const Pose start{route[0], (route[1] - route[0]).normalized(), cfg.sim.v_const};

        RecordSpec spec;
        spec.town_seed = cfg.sim.train_town_seed;
        spec.condition_seed =
            cfg.sim.train_condition_seeds[i % cfg.sim.train_condition_seeds.size()];
        spec.episode_id = i;
        spec.actor_seed = hash_mix(cfg.seed, detail::kTagCollectActors, i);
        spec.k = static_cast<std::uint32_t>(cfg.model.k);
        spec.length = cfg.data.ticks;
        spec.n_vehicles = cfg.data.n_vehicles;
        spec.n_pedestrians = cfg.data.n_pedestrians;
        spec.stuck_timeout = cfg.data.record_stuck_timeout;
        spec.mode = mode;

        const EpisodeLog log = record_episode(town, path, start, expert, sim, sensor, spec);
        const std::string name = detail::episode_filename(static_cast<int>(i));
        save_episode(log, out_dir + "/" + name);
        files[i] = name;
        cond_seeds[i] = spec.condition_seed;
        tick_counts[i] = static_cast<std::uint32_t>(log.ticks.size());
    });

    nlohmann::ordered_json index;
    index["format"] = "sgindex-v1";
    index["town_file"] = "town.sgtown";
    index["town_seed"] = cfg.sim.train_town_seed;
    index["channel_mode"] = channel_mode_name(mode);
    index["k"] = cfg.model.k;
    index["grid"] = cfg.sim.grid;
    index["dt"] = cfg.sim.dt;
    index["episodes"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n; ++i) {
        nlohmann::ordered_json e;
        e["file"] = files[static_cast<std::size_t>(i)];
        e["condition_seed"] = cond_seeds[static_cast<std::size_t>(i)];
        e["ticks"] = tick_counts[static_cast<std::size_t>(i)];
        index["episodes"].push_back(e);
    }
    const std::string index_path = out_dir + "/index.json";
    io::write_file(index_path + ".tmp", index.dump(2) + "\n");
    std::filesystem::rename(index_path + ".tmp", index_path);

    detail::write_resolved_config(cfg, out_dir, "collect");
    return {index_path, town_path, files};
}

// ---------------------------------------------------------------------------
// balance: steering-histogram balancing + throttle class weights
// ---------------------------------------------------------------------------

struct BalanceResult {
    std::string dataset_path;
    std::string hist_before_path;
    std::string hist_after_path;
    std::size_t samples_before = 0;
    std::size_t samples_after = 0;
    double weight_stop = 1.0;
    double weight_go = 1.0;
};

inline std::string histogram_csv(const std::vector<std::size_t>& hist) {
    std::ostringstream os;
    os << "bin,lo,hi,count\n";
    const int n = static_cast<int>(hist.size());
    char buf[64];
    for (int b = 0; b < n; ++b) {
        const double lo = -1.0 + 2.0 * b / n;
        const double hi = -1.0 + 2.0 * (b + 1) / n;
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%zu\n", b, lo, hi, hist[b]);
        os << buf;
    }
    return os.str();
}

inline BalanceResult cmd_balance(const RunConfig& cfg, const std::string& dataset_dir,
                                 const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const std::string index_path = dataset_dir + "/index.json";
    if (!fs::exists(index_path)) throw DataError("no dataset index at " + index_path);
    const auto index = nlohmann::json::parse(io::read_file(index_path));
    if (!index.contains("format") || index["format"] != "sgindex-v1")
        throw DataError("not a sgindex-v1 dataset index");

    std::vector<std::string> files;
    std::vector<SampleRef> all;
    for (const auto& e : index["episodes"]) {
        const std::string name = e["file"];
        const EpisodeLog log = load_episode(dataset_dir + "/" + name, /*load_frames=*/false);
        const auto part = samples_from_log(log, static_cast<std::uint32_t>(files.size()));
        all.insert(all.end(), part.begin(), part.end());
        files.push_back(name);
    }

    const BalanceSpec spec = cfg.balance_spec();
    const auto hist_before = steer_histogram(all, spec.n_bins);
    std::vector<SampleRef> balanced = balance(all, spec);
    const auto hist_after = steer_histogram(balanced, spec.n_bins);
    auto [w0, w1] = throttle_class_weights(balanced);
    apply_class_weights(balanced, w0, w1);

    BalanceResult result;
    result.samples_before = all.size();
    result.samples_after = balanced.size();
    result.weight_stop = w0;
    result.weight_go = w1;
    result.hist_before_path = out_dir + "/steer_hist_before.csv";
    result.hist_after_path = out_dir + "/steer_hist_after.csv";
    io::write_file(result.hist_before_path, histogram_csv(hist_before));
    io::write_file(result.hist_after_path, histogram_csv(hist_after));

    nlohmann::ordered_json ds;
    ds["format"] = "sgdataset-v1";
    ds["dataset_dir"] = dataset_dir;
    ds["channel_mode"] = index["channel_mode"];
    ds["k"] = index["k"];
    ds["grid"] = index["grid"];
    ds["class_weights"] = {w0, w1};
    ds["episode_files"] = files;
    auto& rows = ds["samples"];
    rows = nlohmann::ordered_json::array();
    for (const auto& s : balanced)
        rows.push_back({s.episode, s.tick, s.viewpoint, s.steer, s.throttle, s.angle_deg, s.speed,
                        s.light_visible, s.weight});

    result.dataset_path = out_dir + "/balanced.json";
    io::write_file(result.dataset_path, ds.dump() + "\n");
    detail::write_resolved_config(cfg, out_dir, "balance");
    return result;
}

struct BalancedDataset {
    ChannelMode mode = ChannelMode::AS;
    int k = 4;
    int grid = 32;
    double weight_stop = 1.0;
    double weight_go = 1.0;
    std::string dataset_dir;
    std::vector<std::string> episode_files;
    std::vector<SampleRef> samples;
};

inline BalancedDataset load_balanced_dataset(const std::string& path) {
    const auto j = nlohmann::json::parse(io::read_file(path));
    if (!j.contains("format") || j["format"] != "sgdataset-v1")
        throw DataError("not a sgdataset-v1 file: " + path);
    BalancedDataset d;
    d.mode = channel_mode_from_name(j["channel_mode"]);
    d.k = j["k"];
    d.grid = j["grid"];
    d.weight_stop = j["class_weights"][0];
    d.weight_go = j["class_weights"][1];
    d.dataset_dir = j["dataset_dir"];
    d.episode_files = j["episode_files"].get<std::vector<std::string>>();
    for (const auto& row : j["samples"]) {
        SampleRef s;
        s.episode = row[0];
        s.tick = row[1];
        s.viewpoint = row[2];
        s.steer = row[3];
        s.throttle = row[4];
        s.angle_deg = row[5];
        s.speed = row[6];
        s.light_visible = row[7];
        s.weight = row[8];
        d.samples.push_back(s);
    }
    return d;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmdResult {
    std::string final_checkpoint;
    std::string report_csv;
    TrainReport report;
};

inline TrainCmdResult cmd_train(const RunConfig& cfg, const std::string& balanced_path,
                                const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const BalancedDataset ds = load_balanced_dataset(balanced_path);
    const ChannelMode model_mode = channel_mode_from_name(cfg.model.channels);
    if (ds.mode != model_mode)
        throw ConfigError(std::string("dataset channels (") + channel_mode_name(ds.mode) +
                          ") do not match model channels (" + cfg.model.channels + ")");
    if (ds.k != cfg.model.k || ds.grid != cfg.sim.grid)
        throw ConfigError("dataset stack shape does not match the model configuration");

    std::vector<EpisodeLog> episodes;
    episodes.reserve(ds.episode_files.size());
    for (const auto& name : ds.episode_files)
        episodes.push_back(load_episode(ds.dataset_dir + "/" + name));
    SampleStore store(std::move(episodes), ds.k, ds.mode);

    ModelParameters params =
        build_model(arch_from_name(cfg.model.arch), model_mode, cfg.model_dims(),
                    hash_mix(cfg.seed, detail::kTagInit));
    TrainResult result = train(std::move(params), store, ds.samples, cfg.train_config(), out_dir);

    TrainCmdResult out;
    out.final_checkpoint = out_dir + "/final.sgckpt";
    save_checkpoint(result.params, out.final_checkpoint);
    out.report_csv = out_dir + "/train_report.csv";
    io::write_file(out.report_csv, result.report.to_csv());
    out.report = std::move(result.report);
    detail::write_resolved_config(cfg, out_dir, "train");
    return out;
}

// ---------------------------------------------------------------------------
// eval: closed-loop rollouts over held-out routes in the eval town
// ---------------------------------------------------------------------------

struct EvalCmdResult {
    std::string report_json;
    std::string report_csv;
    std::string meta_json;
    EvalReport report;
};

inline EvalCmdResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                              const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/traces");

    const bool expert_policy = checkpoint_path.empty();
    ModelParameters net;
    if (!expert_policy) {
        if (!fs::exists(checkpoint_path)) throw DataError("missing checkpoint " + checkpoint_path);
        net = load_checkpoint(checkpoint_path);
        if (net.mode != channel_mode_from_name(cfg.model.channels))
            throw ConfigError("checkpoint channel mode does not match the sensing configuration");
        if (net.dims.grid != cfg.sim.grid || net.dims.k != cfg.model.k)
            throw ConfigError("checkpoint raster shape does not match the sensing configuration");
    }

    const TownMap town = generate_town(cfg.sim.eval_town_seed, cfg.sim.blocks_x, cfg.sim.blocks_y,
                                       cfg.town_params());
    const SimParams sim = cfg.sim_params();
    const SensorParams sensor = cfg.sensor_params();
    const ExpertConfig expert = cfg.expert_config();
    const EvalConfig eval_cfg = cfg.eval_config();

    const int n = eval_cfg.n_paths;
    std::vector<EpisodeResult> results(static_cast<std::size_t>(n));
    detail::parallel_for(static_cast<std::size_t>(n), cfg.jobs, [&](std::size_t i) {
        const auto route_seed = hash_mix(cfg.seed, detail::kTagEvalRoute, i);
        const auto route = sample_route(town, route_seed, eval_cfg.route_len_m);
        const PathSpec path = discretize_path(route, cfg.sim.spacing_min);
        const Pose start{route[0], (route[1] - route[0]).normalized(), cfg.sim.v_const};
        const auto actors = populate_actors(town, hash_mix(cfg.seed, detail::kTagEvalActors, i),
                                            cfg.eval.n_vehicles, cfg.eval.n_pedestrians, sim);
        const auto cond_seed =
            cfg.sim.eval_condition_seeds[i % cfg.sim.eval_condition_seeds.size()];

        char trace_name[48];
        std::snprintf(trace_name, sizeof(trace_name), "/traces/ep_%04d.jsonl",
                      static_cast<int>(i));
        std::ofstream trace(out_dir + trace_name, std::ios::trunc);
        results[i] = rollout(town, path, start, actors, expert_policy ? nullptr : &net, expert,
                             sim, sensor, eval_cfg, cond_seed, &trace);
    });

    EvalCmdResult out;
    out.report = aggregate(results);
    out.report_json = out_dir + "/report.json";
    out.report_csv = out_dir + "/report.csv";
    io::write_file(out.report_json, report_to_json(out.report).dump(2) + "\n");
    io::write_file(out.report_csv, report_to_csv(out.report));

    nlohmann::ordered_json meta;
    meta["format"] = "sgmeta-v1";
    meta["policy"] = expert_policy ? "expert" : "checkpoint";
    meta["arch"] = expert_policy ? "expert" : arch_name(net.arch);
    meta["channels"] = expert_policy ? "-" : channel_mode_name(net.mode);
    meta["seed"] = cfg.seed;
    meta["checkpoint"] = checkpoint_path;
    meta["checkpoint_bytes"] =
        expert_policy ? 0 : static_cast<std::int64_t>(fs::file_size(checkpoint_path));
    out.meta_json = out_dir + "/run_meta.json";
    io::write_file(out.meta_json, meta.dump(2) + "\n");

    detail::write_resolved_config(cfg, out_dir, "eval");
    return out;
}

// ---------------------------------------------------------------------------
// report: join eval reports and training curves across runs
// ---------------------------------------------------------------------------

struct RunRecord {
    std::string dir;
    std::string arch;
    std::string channels;
    std::uint64_t seed = 0;
    std::string policy;
    double size_mb = 0.0;
    EvalReport report;
    std::string train_csv;  // raw contents, possibly empty
};

struct ReportCmdResult {
    std::string comparison_csv;
    std::string summary_csv;
    std::string losses_csv;
    std::vector<RunRecord> runs;
};

namespace detail {

inline std::string find_existing(const std::string& dir, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        const std::string p = dir + "/" + n;
        if (std::filesystem::exists(p)) return p;
    }
    return "";
}

// a failed episode is attributed to the output that deviated most from the
// shadow expert; steer deviation is normalized by its range
inline bool failure_blames_steer(const EpisodeResult& e) {
    return e.expert_steer_dev / 2.0 >= e.expert_throttle_dev;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace detail

inline ReportCmdResult cmd_report(const std::vector<std::string>& run_dirs,
                                  const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (run_dirs.empty()) throw DataError("no run directories given");
    fs::create_directories(out_dir);

    std::vector<RunRecord> runs;
    for (const auto& dir : run_dirs) {
        const std::string report_path = detail::find_existing(dir, {"report.json", "eval/report.json"});
        if (report_path.empty()) throw DataError("no report.json under " + dir);
        RunRecord run;
        run.dir = dir;
        run.report = report_from_json(nlohmann::json::parse(io::read_file(report_path)));

        const std::string meta_path =
            detail::find_existing(dir, {"run_meta.json", "eval/run_meta.json"});
        if (!meta_path.empty()) {
            const auto meta = nlohmann::json::parse(io::read_file(meta_path));
            run.arch = meta["arch"];
            run.channels = meta["channels"];
            run.seed = meta["seed"];
            run.policy = meta["policy"];
            run.size_mb = static_cast<double>(meta["checkpoint_bytes"].get<std::int64_t>()) /
                          (1024.0 * 1024.0);
        }
        const std::string train_path =
            detail::find_existing(dir, {"train_report.csv", "train/train_report.csv"});
        if (!train_path.empty()) run.train_csv = io::read_file(train_path);
        runs.push_back(std::move(run));
    }

    // one row per run, mirroring the evaluation tables plus failure breakdown
    std::ostringstream cmp;
    cmp << "run,arch,channels,seed,policy,size_mb,success_rate,normal_driving_rate,"
           "coll_vehicle_per_km,coll_pedestrian_per_km,coll_other_per_km,"
           "failures,failures_timeout,failures_stuck,failures_steer,failures_throttle\n";
    char buf[64];
    for (const auto& run : runs) {
        int fail = 0, fail_timeout = 0, fail_stuck = 0, fail_steer = 0, fail_throttle = 0;
        for (const auto& e : run.report.per_episode) {
            if (e.success) continue;
            ++fail;
            if (e.termination == Termination::Timeout) ++fail_timeout;
            if (e.termination == Termination::Stuck) ++fail_stuck;
            (detail::failure_blames_steer(e) ? fail_steer : fail_throttle)++;
        }
        cmp << fs::path(run.dir).filename().string() << ',' << run.arch << ',' << run.channels
            << ',' << run.seed << ',' << run.policy << ',';
        std::snprintf(buf, sizeof(buf), "%.3f", run.size_mb);
        cmp << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.2f", run.report.success_rate);
        cmp << buf << ',' << detail::fmt_opt(run.report.normal_driving_rate) << ','
            << detail::fmt_opt(run.report.collisions_per_km[0]) << ','
            << detail::fmt_opt(run.report.collisions_per_km[1]) << ','
            << detail::fmt_opt(run.report.collisions_per_km[2]) << ',' << fail << ','
            << fail_timeout << ',' << fail_stuck << ',' << fail_steer << ',' << fail_throttle
            << '\n';
    }

    // grouped means across seeds, including the vehicle+pedestrian sum used
    // for the depth-ablation comparison
    struct Group {
        int n = 0;
        double success = 0.0;
        double normal = 0.0;
        int normal_n = 0;
        std::array<double, 3> coll{0, 0, 0};
        std::array<int, 3> coll_n{0, 0, 0};
    };
    std::map<std::string, Group> groups;
    for (const auto& run : runs) {
        Group& g = groups[run.arch + "," + run.channels];
        ++g.n;
        g.success += run.report.success_rate;
        if (run.report.normal_driving_rate) {
            g.normal += *run.report.normal_driving_rate;
            ++g.normal_n;
        }
        for (int c = 0; c < 3; ++c)
            if (run.report.collisions_per_km[c]) {
                g.coll[c] += *run.report.collisions_per_km[c];
                ++g.coll_n[c];
            }
    }
    std::ostringstream sum;
    sum << "arch,channels,runs,mean_success_rate,mean_normal_driving_rate,"
           "mean_coll_vehicle_per_km,mean_coll_pedestrian_per_km,mean_coll_other_per_km,"
           "mean_coll_vehicle_plus_pedestrian_per_km\n";
    for (const auto& [key, g] : groups) {
        sum << key << ',' << g.n << ',';
        std::snprintf(buf, sizeof(buf), "%.2f", g.success / g.n);
        sum << buf << ',';
        sum << (g.normal_n ? [&] {
            std::snprintf(buf, sizeof(buf), "%.2f", g.normal / g.normal_n);
            return std::string(buf);
        }() : std::string("NA"));
        double veh_ped = 0.0;
        bool veh_ped_defined = true;
        for (int c = 0; c < 3; ++c) {
            if (g.coll_n[c]) {
                std::snprintf(buf, sizeof(buf), "%.4f", g.coll[c] / g.coll_n[c]);
                sum << ',' << buf;
                if (c < 2) veh_ped += g.coll[c] / g.coll_n[c];
            } else {
                sum << ",NA";
                if (c < 2) veh_ped_defined = false;
            }
        }
        if (veh_ped_defined) {
            std::snprintf(buf, sizeof(buf), "%.4f", veh_ped);
            sum << ',' << buf << '\n';
        } else {
            sum << ",NA\n";
        }
    }

    // loss curves concatenated across runs
    std::ostringstream losses;
    losses << "run,epoch,steer_loss,throttle_loss,total_loss,lr\n";
    for (const auto& run : runs) {
        if (run.train_csv.empty()) continue;
        std::istringstream is(run.train_csv);
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            // epoch,steer,throttle,total,lr,wall,checkpoint -> keep first five
            std::size_t pos = 0;
            for (int field = 0; field < 5 && pos != std::string::npos; ++field)
                pos = line.find(',', pos + 1);
            losses << fs::path(run.dir).filename().string() << ','
                   << line.substr(0, pos == std::string::npos ? line.size() : pos) << '\n';
        }
    }

    ReportCmdResult out;
    out.comparison_csv = out_dir + "/comparison.csv";
    out.summary_csv = out_dir + "/summary.csv";
    out.losses_csv = out_dir + "/losses.csv";
    io::write_file(out.comparison_csv, cmp.str());
    io::write_file(out.summary_csv, sum.str());
    io::write_file(out.losses_csv, losses.str());
    out.runs = std::move(runs);
    return out;
}

}  // namespace sgdrive
