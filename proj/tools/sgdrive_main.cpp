// sgdrive: command-line front end for the demonstration-driving pipeline.
// Subcommands: collect, balance, train, eval, report. Exit codes: 0 success,
// 2 configuration errors, 3 data errors, 4 runtime errors.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgdrive/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults apply if omitted)");
    cmd->add_option("--set", args.overrides,
                    "override a config key, e.g. --set train.epochs=8 (repeatable; flags win)");
    cmd->add_option("-o,--out", args.out_dir, "output directory");
}

sgdrive::RunConfig resolve(const CommonArgs& args, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> overrides = args.overrides;
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    return sgdrive::load_config(args.config_path, overrides);
}

std::string kv(const std::string& key, const std::string& value) { return key + "=" + value; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subgoal-angle driving pipeline: collect -> balance -> train -> eval -> report"};
    app.require_subcommand(1);

    CommonArgs collect_args, balance_args, train_args, eval_args;

    auto* collect = app.add_subcommand("collect", "record expert demonstration episodes");
    add_common(collect, collect_args);
    int episodes = -1, ticks = -1, jobs = -1;
    std::uint64_t town_seed = 0;
    bool town_seed_set = false;
    std::string channels, seed_str;
    collect->add_option("--episodes", episodes, "number of episodes");
    collect->add_option("--ticks", ticks, "ticks per episode");
    collect->add_option("--town-seed", town_seed, "training town seed")
        ->each([&](const std::string&) { town_seed_set = true; });
    collect->add_option("--channels", channels, "sensor channel set: as|asd");
    collect->add_option("--seed", seed_str, "global seed");
    collect->add_option("--jobs", jobs, "parallel episode workers");

    auto* balance = app.add_subcommand("balance", "balance steering histogram, compute weights");
    add_common(balance, balance_args);
    std::string dataset_dir;
    int bins = -1, cap = -1;
    balance->add_option("--dataset", dataset_dir, "collected dataset directory (with index.json)")
        ->required();
    balance->add_option("--bins", bins, "steer histogram bins");
    balance->add_option("--cap", cap, "max samples per bin");

    auto* train_cmd = app.add_subcommand("train", "train a policy on a balanced dataset");
    add_common(train_cmd, train_args);
    std::string balanced_path, arch, train_channels, train_seed;
    int epochs = -1;
    train_cmd->add_option("--dataset", balanced_path, "balanced dataset file")->required();
    train_cmd->add_option("--arch", arch,
                          "architecture: angle-branched|angle-input|discrete-branched");
    train_cmd->add_option("--channels", train_channels, "model channel set: as|asd");
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--seed", train_seed, "global seed");

    auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation in the eval town");
    add_common(eval_cmd, eval_args);
    std::string checkpoint, policy = "checkpoint", eval_channels, eval_seed;
    int n_paths = -1, eval_jobs = -1;
    bool actor_free = false;
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint to evaluate");
    eval_cmd->add_option("--policy", policy, "checkpoint (default) or expert");
    eval_cmd->add_option("--paths", n_paths, "number of evaluation paths");
    eval_cmd->add_option("--channels", eval_channels, "sensing channel set: as|asd");
    eval_cmd->add_option("--seed", eval_seed, "global seed");
    eval_cmd->add_option("--jobs", eval_jobs, "parallel rollout workers");
    eval_cmd->add_flag("--actor-free", actor_free, "evaluate without scripted traffic");

    auto* report = app.add_subcommand("report", "merge runs into comparison tables");
    std::vector<std::string> run_dirs;
    std::string report_out = "report_out";
    report->add_option("runs", run_dirs, "run directories to merge")->required();
    report->add_option("-o,--out", report_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed()) {
            std::vector<std::string> extra;
            if (episodes >= 0) extra.push_back(kv("data.episodes", std::to_string(episodes)));
            if (ticks >= 0) extra.push_back(kv("data.ticks", std::to_string(ticks)));
            if (town_seed_set)
                extra.push_back(kv("sim.train_town_seed", std::to_string(town_seed)));
            if (!channels.empty()) extra.push_back(kv("data.channels", channels));
            if (!seed_str.empty()) extra.push_back(kv("seed", seed_str));
            if (jobs > 0) extra.push_back(kv("jobs", std::to_string(jobs)));
            const auto cfg = resolve(collect_args, extra);
            const auto r = sgdrive::cmd_collect(cfg, collect_args.out_dir);
            std::printf("collected %zu episodes -> %s\n", r.episode_files.size(),
                        r.index_path.c_str());
        } else if (balance->parsed()) {
            std::vector<std::string> extra;
            if (bins > 0) extra.push_back(kv("data.n_bins", std::to_string(bins)));
            if (cap > 0) extra.push_back(kv("data.cap_per_bin", std::to_string(cap)));
            const auto cfg = resolve(balance_args, extra);
            const auto r = sgdrive::cmd_balance(cfg, dataset_dir, balance_args.out_dir);
            std::printf("balanced %zu -> %zu samples (w_stop=%.4f, w_go=%.4f) -> %s\n",
                        r.samples_before, r.samples_after, r.weight_stop, r.weight_go,
                        r.dataset_path.c_str());
        } else if (train_cmd->parsed()) {
            std::vector<std::string> extra;
            if (!arch.empty()) extra.push_back(kv("model.arch", arch));
            if (!train_channels.empty()) extra.push_back(kv("model.channels", train_channels));
            if (epochs > 0) extra.push_back(kv("train.epochs", std::to_string(epochs)));
            if (!train_seed.empty()) extra.push_back(kv("seed", train_seed));
            const auto cfg = resolve(train_args, extra);
            const auto r = sgdrive::cmd_train(cfg, balanced_path, train_args.out_dir);
            std::printf("trained %d epochs, final loss %.6f -> %s\n",
                        static_cast<int>(r.report.rows.size()),
                        r.report.rows.back().total_loss, r.final_checkpoint.c_str());
        } else if (eval_cmd->parsed()) {
            if (policy != "expert" && policy != "checkpoint")
                throw sgdrive::ConfigError("--policy must be expert or checkpoint");
            if (policy == "checkpoint" && checkpoint.empty())
                throw sgdrive::ConfigError("--checkpoint is required unless --policy expert");
            std::vector<std::string> extra;
            if (n_paths > 0) extra.push_back(kv("eval.n_paths", std::to_string(n_paths)));
            if (!eval_channels.empty()) extra.push_back(kv("model.channels", eval_channels));
            if (!eval_seed.empty()) extra.push_back(kv("seed", eval_seed));
            if (eval_jobs > 0) extra.push_back(kv("jobs", std::to_string(eval_jobs)));
            if (actor_free) {
                extra.push_back(kv("eval.n_vehicles", "0"));
                extra.push_back(kv("eval.n_pedestrians", "0"));
            }
            const auto cfg = resolve(eval_args, extra);
            const auto r = sgdrive::cmd_eval(cfg, policy == "expert" ? "" : checkpoint,
                                             eval_args.out_dir);
            std::printf("evaluated %d paths: success %.1f%%, normal %s -> %s\n",
                        r.report.episodes, r.report.success_rate,
                        r.report.normal_driving_rate
                            ? std::to_string(*r.report.normal_driving_rate).c_str()
                            : "NA",
                        r.report_json.c_str());
        } else if (report->parsed()) {
            const auto r = sgdrive::cmd_report(run_dirs, report_out);
            std::printf("merged %zu runs -> %s\n", r.runs.size(), r.comparison_csv.c_str());
        }
    } catch (const sgdrive::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const sgdrive::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
