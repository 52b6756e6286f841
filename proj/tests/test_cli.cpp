#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sgdrive/pipeline.hpp"

using namespace sgdrive;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const {
        return (sub.empty() ? path : path / sub).string();
    }
};

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.sim.grid = 16;
    cfg.data.episodes = 3;
    cfg.data.ticks = 80;
    cfg.data.route_len_m = 140.0;
    cfg.data.cap_per_bin = 100;
    cfg.model.conv1 = 6;
    cfg.model.conv2 = 8;
    cfg.model.conv3 = 10;
    cfg.model.image_feature = 16;
    cfg.model.scalar_hidden = 5;
    cfg.model.fusion_hidden = 10;
    cfg.model.head_hidden = 8;
    cfg.train.epochs = 2;
    cfg.eval.n_paths = 2;
    cfg.eval.max_ticks = 300;
    cfg.eval.route_len_m = 100.0;
    return cfg;
}

}  // namespace

TEST_CASE("config defaults round-trip and validate") {
    const RunConfig def;
    const auto j = config_to_json(def);
    const RunConfig back = config_from_json(j);
    CHECK(config_to_json(back).dump() == j.dump());
    CHECK_NOTHROW(back.validate());
}

TEST_CASE("config loader rejects unknown keys, file and override alike") {
    TmpDir tmp("sgdrive_test_cfg");
    io::write_file(tmp.str("bad.json"), R"({"sim": {"dtt": 0.1}})");
    CHECK_THROWS_AS(load_config(tmp.str("bad.json"), {}), ConfigError);
    io::write_file(tmp.str("badtop.json"), R"({"simulator": {}})");
    CHECK_THROWS_AS(load_config(tmp.str("badtop.json"), {}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"sim.not_a_key=1"}), ConfigError);
    CHECK_THROWS_AS(load_config("", {"malformed"}), ConfigError);

    io::write_file(tmp.str("good.json"), R"({"sim": {"dt": 0.1}, "train": {"epochs": 3}})");
    const RunConfig cfg = load_config(tmp.str("good.json"), {"train.epochs=7"});
    CHECK(cfg.sim.dt == 0.1);
    CHECK(cfg.train.epochs == 7);  // the flag wins over the file
}

TEST_CASE("config validation enforces the held-out seed split") {
    RunConfig cfg;
    cfg.sim.eval_town_seed = cfg.sim.train_town_seed;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    RunConfig cfg2;
    cfg2.sim.eval_condition_seeds = {1};  // collides with the training set
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}

TEST_CASE("pipeline: collect, balance, train, eval, report run end to end") {
    TmpDir tmp("sgdrive_test_pipeline");
    RunConfig cfg = tiny_config();

    const auto collected = cmd_collect(cfg, tmp.str("data"));
    CHECK(collected.episode_files.size() == 3);
    CHECK(fs::exists(collected.index_path));
    CHECK(fs::exists(collected.town_path));
    CHECK(fs::exists(tmp.str("data/resolved_config.json")));

    const auto balanced = cmd_balance(cfg, tmp.str("data"), tmp.str("bal"));
    CHECK(balanced.samples_before == 3 * 80 * 3);
    CHECK(balanced.samples_after > 0);
    CHECK(fs::exists(balanced.hist_before_path));
    const std::string hist = io::read_file(balanced.hist_after_path);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == cfg.data.n_bins + 1);

    cfg.model.arch = "angle-input";
    const auto trained = cmd_train(cfg, balanced.dataset_path, tmp.str("train"));
    CHECK(fs::exists(trained.final_checkpoint));
    CHECK(trained.report.rows.size() == 2);

    const auto eval_net = cmd_eval(cfg, trained.final_checkpoint, tmp.str("run_net"));
    CHECK(eval_net.report.episodes == 2);
    CHECK(fs::exists(eval_net.report_json));
    CHECK(fs::exists(tmp.str("run_net/traces/ep_0000.jsonl")));

    RunConfig expert_cfg = cfg;
    expert_cfg.eval.n_vehicles = 0;
    expert_cfg.eval.n_pedestrians = 0;
    const auto eval_expert = cmd_eval(expert_cfg, "", tmp.str("run_expert"));
    CHECK(eval_expert.report.success_rate == 100.0);

    // train_report.csv next to the eval outputs, as cmd_report expects
    fs::copy_file(trained.report_csv, tmp.str("run_net/train_report.csv"));
    const auto rep = cmd_report({tmp.str("run_net"), tmp.str("run_expert")}, tmp.str("rep"));
    CHECK(rep.runs.size() == 2);
    const std::string cmp = io::read_file(rep.comparison_csv);
    CHECK(cmp.find("failures_steer,failures_throttle") != std::string::npos);
    CHECK(cmp.find("angle-input") != std::string::npos);
    CHECK(cmp.find("expert") != std::string::npos);
    const std::string sum = io::read_file(rep.summary_csv);
    CHECK(sum.find("mean_coll_vehicle_plus_pedestrian_per_km") != std::string::npos);
    const std::string losses = io::read_file(rep.losses_csv);
    CHECK(std::count(losses.begin(), losses.end(), '\n') == 3);  // header + 2 epochs
}

TEST_CASE("collect outputs are byte-deterministic and jobs-invariant") {
    TmpDir tmp("sgdrive_test_collect_det");
    RunConfig cfg = tiny_config();
    const auto a = cmd_collect(cfg, tmp.str("a"));
    RunConfig cfg_jobs = cfg;
    cfg_jobs.jobs = 2;
    const auto b = cmd_collect(cfg_jobs, tmp.str("b"));
    REQUIRE(a.episode_files.size() == b.episode_files.size());
    for (std::size_t i = 0; i < a.episode_files.size(); ++i)
        CHECK(io::read_file(tmp.str("a") + "/" + a.episode_files[i]) ==
              io::read_file(tmp.str("b") + "/" + b.episode_files[i]));
    CHECK(io::read_file(tmp.str("a/index.json")) == io::read_file(tmp.str("b/index.json")));
    CHECK(io::read_file(tmp.str("a/town.sgtown")) == io::read_file(tmp.str("b/town.sgtown")));
}

TEST_CASE("eval refuses checkpoints whose channel mode mismatches the sensing config") {
    TmpDir tmp("sgdrive_test_mismatch");
    RunConfig cfg = tiny_config();
    cfg.data.channels = "asd";
    cfg.model.channels = "asd";
    const auto collected = cmd_collect(cfg, tmp.str("data"));
    const auto balanced = cmd_balance(cfg, tmp.str("data"), tmp.str("bal"));
    const auto trained = cmd_train(cfg, balanced.dataset_path, tmp.str("train"));

    RunConfig as_cfg = cfg;
    as_cfg.model.channels = "as";
    CHECK_THROWS_AS(cmd_eval(as_cfg, trained.final_checkpoint, tmp.str("run")), ConfigError);
    CHECK_THROWS_AS(cmd_train(as_cfg, balanced.dataset_path, tmp.str("train2")), ConfigError);
    CHECK_THROWS_AS(cmd_eval(cfg, tmp.str("no_such.sgckpt"), tmp.str("run")), DataError);
    CHECK_THROWS_AS(cmd_balance(cfg, tmp.str("nowhere"), tmp.str("bal2")), DataError);
    CHECK_THROWS_AS(cmd_report({}, tmp.str("rep")), DataError);
    CHECK_THROWS_AS(cmd_report({tmp.str("data")}, tmp.str("rep")), DataError);
}

TEST_CASE("eval reports are deterministic across reruns") {
    TmpDir tmp("sgdrive_test_eval_det");
    RunConfig cfg = tiny_config();
    cfg.eval.n_vehicles = 2;
    cfg.eval.n_pedestrians = 2;
    const auto a = cmd_eval(cfg, "", tmp.str("a"));
    RunConfig cfg_jobs = cfg;
    cfg_jobs.jobs = 2;
    const auto b = cmd_eval(cfg_jobs, "", tmp.str("b"));
    CHECK(io::read_file(a.report_json) == io::read_file(b.report_json));
    CHECK(io::read_file(tmp.str("a/traces/ep_0001.jsonl")) ==
          io::read_file(tmp.str("b/traces/ep_0001.jsonl")));
}

TEST_CASE("resolved config reproduces the run when fed back in") {
    TmpDir tmp("sgdrive_test_resolved");
    RunConfig cfg = tiny_config();
    cmd_collect(cfg, tmp.str("a"));
    const auto resolved = nlohmann::json::parse(io::read_file(tmp.str("a/resolved_config.json")));
    CHECK(resolved["command"] == "collect");

    io::write_file(tmp.str("replay.json"), resolved["config"].dump());
    const RunConfig replay = load_config(tmp.str("replay.json"), {});
    cmd_collect(replay, tmp.str("b"));
    CHECK(io::read_file(tmp.str("a/ep_0000.sgd")) == io::read_file(tmp.str("b/ep_0000.sgd")));
    CHECK(io::read_file(tmp.str("a/index.json")) == io::read_file(tmp.str("b/index.json")));
}
