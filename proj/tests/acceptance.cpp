// Acceptance suite: one test case per criterion, each printing a single
// [PASS]/[FAIL] line. Run via ctest (target name "acceptance"); the pipeline
// criteria take tens of minutes in total.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "sgdrive/pipeline.hpp"

using namespace sgdrive;
namespace fs = std::filesystem;

namespace {

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

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

void verdict(int criterion, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
}

// ---- independent oracles -------------------------------------------------

Vec2 rotate_cw_oracle(const Vec2& v, double degrees) {
    const double r = degrees * M_PI / 180.0;
    return {std::cos(r) * v.x + std::sin(r) * v.y, -std::sin(r) * v.x + std::cos(r) * v.y};
}

std::vector<Vec2> greedy_oracle(const std::vector<Vec2>& traj, double min_gap) {
    std::vector<Vec2> kept;
    for (const auto& p : traj) {
        if (kept.empty() || (p - kept.back()).norm() >= min_gap) kept.push_back(p);
    }
    return kept;
}

// ---- small-network helpers for the gradient criteria ----------------------

ModelDims tiny_dims(std::uint64_t variant) {
    ModelDims d;
    d.k = 2;
    d.grid = 8;
    d.conv1 = 2 + static_cast<int>(variant % 3);
    d.conv2 = 3 + static_cast<int>(variant % 2);
    d.conv3 = 4;
    d.image_feature = 5 + static_cast<int>(variant % 3);
    d.scalar_hidden = 3;
    d.fusion_hidden = 6;
    d.head_hidden = 4 + static_cast<int>(variant % 2);
    return d;
}

struct RandomBatch {
    std::vector<std::vector<double>> inputs;
    std::vector<BatchSample> batch;
};

RandomBatch random_batch(const ModelParameters& params, std::uint64_t seed, int n) {
    RandomBatch rb;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        std::vector<double> input(params.input_size());
        for (auto& v : input) v = rng.uniform(0.0, 12.0);
        rb.inputs.push_back(std::move(input));
    }
    for (int i = 0; i < n; ++i) {
        BatchSample s;
        s.input = rb.inputs[i].data();
        s.speed = rng.uniform(0.0, 5.0);
        s.angle_deg = rng.uniform(-179.0, 179.0);
        s.steer_label = rng.uniform(-1.0, 1.0);
        s.throttle_label = rng.next_double() < 0.5 ? 1 : 0;
        s.weight = rng.uniform(0.5, 2.0);
        rb.batch.push_back(s);
    }
    return rb;
}

// one forward pass per FD side: mean batch loss plus a hash of every ReLU
// pre-activation sign, so kink crossings can be detected without re-running
struct FdProbe {
    double loss = 0.0;
    std::uint64_t sign_hash = 0;
};

FdProbe fd_probe(const ModelParameters& params, const std::vector<BatchSample>& batch,
                 double lambda, ForwardCache& cache) {
    FdProbe probe;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_signs = [&h](const std::vector<double>& pre) {
        for (double v : pre) {
            h ^= v > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& s : batch) {
        const NetworkOutput out =
            forward_cached(params, s.input, params.input_size(), s.speed, s.angle_deg, cache);
        probe.loss += loss_terms(out, s.steer_label, s.throttle_label, lambda, s.weight).total;
        mix_signs(cache.conv1_pre);
        mix_signs(cache.conv2_pre);
        mix_signs(cache.conv3_pre);
        mix_signs(cache.img1_pre);
        mix_signs(cache.img2_pre);
        mix_signs(cache.spd1_pre);
        mix_signs(cache.spd2_pre);
        mix_signs(cache.ang1_pre);
        mix_signs(cache.ang2_pre);
        mix_signs(cache.fus_pre);
        mix_signs(cache.head_pre);
    }
    probe.loss /= static_cast<double>(batch.size());
    probe.sign_hash = h;
    return probe;
}

// max relative error of analytic gradients against central differences at
// step 1e-4; parameters whose perturbation crosses a ReLU kink are skipped
double gradcheck(ModelParameters params, std::uint64_t seed, double lambda) {
    const double h = 1e-4;
    auto rb = random_batch(params, seed, 3);
    GradientMap grads = zero_gradients(params);
    batch_gradients(params, rb.batch, lambda, grads);

    double worst = 0.0;
    ForwardCache cache;
    for (auto& [name, theta] : params.tensors) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta.data[i];
            theta.data[i] = saved + h;
            const FdProbe plus = fd_probe(params, rb.batch, lambda, cache);
            theta.data[i] = saved - h;
            const FdProbe minus = fd_probe(params, rb.batch, lambda, cache);
            theta.data[i] = saved;
            if (plus.sign_hash != minus.sign_hash) continue;  // kink crossed
            const double fd = (plus.loss - minus.loss) / (2.0 * h);
            const double ga = grads.at(name).data[i];
            const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// ---- pipeline configurations ----------------------------------------------

// shared training recipe for the closed-loop criteria: denser traffic for
// stop-and-go coverage, heavier re-injection, throttle-leaning task weight
void apply_learning_recipe(RunConfig& cfg) {
    cfg.jobs = 2;
    cfg.data.n_vehicles = 12;
    cfg.data.n_pedestrians = 10;
    cfg.train.lambda = 0.65;
}

RunConfig criterion9_config() {
    RunConfig cfg;
    apply_learning_recipe(cfg);
    cfg.seed = 1;
    cfg.data.episodes = 50;
    cfg.data.light_injection = 8000;
    cfg.data.restart_injection = 3200;
    cfg.model.arch = "angle-input";
    cfg.model.channels = "as";
    cfg.data.channels = "as";
    cfg.train.epochs = 16;
    cfg.eval.n_paths = 10;
    cfg.eval.n_vehicles = 0;
    cfg.eval.n_pedestrians = 0;
    return cfg;
}

RunConfig trend_config(std::uint64_t seed, const std::string& arch, const std::string& channels) {
    RunConfig cfg;
    apply_learning_recipe(cfg);
    cfg.seed = seed;
    cfg.data.episodes = 16;
    cfg.data.ticks = 300;
    cfg.data.cap_per_bin = 150;
    cfg.data.channels = channels;
    cfg.data.light_injection = 1500;
    cfg.data.restart_injection = 600;
    cfg.model.arch = arch;
    cfg.model.channels = channels;
    cfg.train.epochs = 10;
    cfg.eval.n_paths = 8;
    return cfg;
}

std::map<std::string, std::map<std::string, std::string>> parse_csv_by_key(
    const std::string& csv, int key_fields) {
    std::map<std::string, std::map<std::string, std::string>> rows;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell, key;
        std::map<std::string, std::string> row;
        for (std::size_t f = 0; f < header.size() && std::getline(ls, cell, ','); ++f) {
            row[header[f]] = cell;
            if (static_cast<int>(f) < key_fields) key += (f ? "," : "") + cell;
        }
        rows[key] = std::move(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("criterion 1: subgoal-angle geometry oracle") {
    Stopwatch sw;
    Rng rng(1001);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double theta = rng.uniform(0.0, 360.0);
        const Vec2 h{std::cos(theta * M_PI / 180.0), std::sin(theta * M_PI / 180.0)};
        const double phi = rng.uniform(-179.999999, 179.999999);
        const Vec2 sd = rotate_cw_oracle(h, phi);
        worst = std::max(worst, std::abs(subgoal_angle(sd, h).degrees - phi));
    }
    bool partition_ok = discretize_branch(SubgoalAngle{-10.0}) == Branch::Straight &&
                        discretize_branch(SubgoalAngle{10.0}) == Branch::Straight &&
                        discretize_branch(SubgoalAngle{-10.0 - 1e-9}) == Branch::Left &&
                        discretize_branch(SubgoalAngle{10.0 + 1e-9}) == Branch::Right &&
                        discretize_branch(SubgoalAngle{180.0}) == Branch::Right &&
                        discretize_branch(SubgoalAngle{-179.9999}) == Branch::Left;
    const bool ok = worst <= 1e-9 && partition_ok && sw.seconds() < 5.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "angle matches rotation oracle on 1e5 cases (worst %.2e deg), partition exact "
                  "at +/-10 (%.1fs)",
                  worst, sw.seconds());
    verdict(1, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 2: greedy path discretization oracle") {
    Stopwatch sw;
    Rng rng(1002);
    bool all_equal = true, all_spaced = true;
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Vec2> traj{{rng.uniform(-5, 5), rng.uniform(-5, 5)}};
        const int n = 2 + static_cast<int>(rng.next_below(200));
        for (int i = 1; i < n; ++i)
            traj.push_back(traj.back() + Vec2{rng.uniform(-2.0, 3.5), rng.uniform(-2.0, 2.0)});
        const auto expect = greedy_oracle(traj, 2.0);
        if (expect.size() < 2) continue;
        const PathSpec got = discretize_path(traj, 2.0);
        ++checked;
        if (got.subgoal_points != expect) all_equal = false;
        if (!got.satisfies_spacing()) all_spaced = false;
    }
    const bool ok = all_equal && all_spaced && checked > 900 && sw.seconds() < 5.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "discretize_path equals the oracle on %d random trajectories, spacing >= 2 m "
                  "everywhere (%.1fs)",
                  checked, sw.seconds());
    verdict(2, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 3: balancing caps and inverse-frequency weights") {
    bool caps_ok = true;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        Rng rng(2000 + seed);
        std::vector<SampleRef> samples;
        const std::size_t n = 4000 + rng.next_below(4000);
        for (std::size_t i = 0; i < n; ++i) {
            SampleRef s;
            s.tick = static_cast<std::uint32_t>(i);
            // heavy-tailed steer so several bins overflow
            const double raw = rng.uniform(-1.0, 1.0);
            s.steer = clamp(raw * raw * raw * 3.0, -1.0, 1.0);
            s.throttle = rng.next_double() < 0.8 ? 1 : 0;
            s.speed = s.throttle ? 5.0 : 0.0;
            samples.push_back(s);
        }
        BalanceSpec spec;
        spec.n_bins = 199;
        spec.cap_per_bin = 20;
        spec.rng_seed = seed;
        spec.light_injection_count = 0;
        spec.restart_injection_count = 0;
        const auto balanced = balance(samples, spec);
        for (std::size_t count : steer_histogram(balanced, spec.n_bins))
            if (count > spec.cap_per_bin) caps_ok = false;
    }

    bool weights_ok = true;
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n0 = 1 + rng.next_below(500), n1 = 1 + rng.next_below(500);
        std::vector<SampleRef> samples(n0 + n1);
        for (std::size_t i = 0; i < n0 + n1; ++i) samples[i].throttle = i < n0 ? 0 : 1;
        auto [w0, w1] = throttle_class_weights(samples);
        const double n = static_cast<double>(n0 + n1);
        if (std::abs(w0 - n / (2.0 * n0)) > 1e-9 || std::abs(w1 - n / (2.0 * n1)) > 1e-9)
            weights_ok = false;
    }
    const bool ok = caps_ok && weights_ok;
    verdict(3, ok,
            "post-balance bins never exceed the cap (199 bins, 5 random datasets); class weights "
            "match N/(2*Nc) to 1e-9");
    CHECK(ok);
}

TEST_CASE("criterion 4: gradients match central finite differences") {
    Stopwatch sw;
    double worst = 0.0;
    int nets = 0;
    for (auto arch : {ArchTag::AngleBranched, ArchTag::AngleInput, ArchTag::DiscreteBranched}) {
        for (auto mode : {ChannelMode::AS, ChannelMode::ASD}) {
            for (std::uint64_t v = 0; v < 20; ++v) {
                auto params = build_model(arch, mode, tiny_dims(v), 3000 + v);
                worst = std::max(worst, gradcheck(std::move(params), 4000 + v, 0.5));
                ++nets;
            }
        }
    }
    const bool ok = worst < 1e-4 && nets == 120 && sw.seconds() < 120.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "max relative FD error %.2e over %d random small nets (3 archs x 2 modes x 20), "
                  "step 1e-4 (%.1fs)",
                  worst, nets, sw.seconds());
    verdict(4, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 5: branch routing masks and head-selection invariance") {
    bool ok = true;
    for (auto arch : {ArchTag::AngleBranched, ArchTag::DiscreteBranched}) {
        const auto p = build_model(arch, ChannelMode::AS, tiny_dims(1), 55);
        // selection constant within each partition cell
        for (double a = -179.9; a <= 180.0; a += 0.37) {
            const int expect = a < -10.0 ? 0 : (a <= 10.0 ? 1 : 2);
            if (active_head(p, a) != expect) ok = false;
        }
        // gradient mask: batches routed to one branch leave the others at zero
        const double route_angles[3] = {-60.0, 0.0, 60.0};
        for (int b = 0; b < 3; ++b) {
            auto rb = random_batch(p, 600 + b, 4);
            for (auto& s : rb.batch) s.angle_deg = route_angles[b];
            GradientMap grads = zero_gradients(p);
            batch_gradients(p, rb.batch, 0.5, grads);
            for (int other = 0; other < 3; ++other) {
                const std::string fc = "head" + std::to_string(other) + "_fc.w";
                bool touched = false;
                for (double v : grads.at(fc).data)
                    if (v != 0.0) touched = true;
                if (other == b && !touched) ok = false;
                if (other != b && touched) ok = false;
            }
        }
    }
    // the angle-input network has one head regardless of the command
    const auto single = build_model(ArchTag::AngleInput, ChannelMode::AS, tiny_dims(1), 55);
    if (active_head(single, -170.0) != 0 || active_head(single, 170.0) != 0) ok = false;
    verdict(5, ok,
            "inactive heads receive exactly zero gradient; head selection constant within each "
            "partition cell");
    CHECK(ok);
}

TEST_CASE("criterion 6: expert soundness on 20 actor-free paths") {
    Stopwatch sw;
    RunConfig cfg;
    const TownMap town = generate_town(cfg.sim.eval_town_seed, cfg.sim.blocks_x, cfg.sim.blocks_y,
                                       cfg.town_params());
    const SimParams sim = cfg.sim_params();
    const ExpertConfig expert = cfg.expert_config();
    EvalConfig eval_cfg = cfg.eval_config();
    eval_cfg.max_ticks = 900;

    std::vector<EpisodeResult> results;
    for (int i = 0; i < 20; ++i) {
        const auto route = sample_route(town, hash_mix(99, 0xe7a1ULL, i), eval_cfg.route_len_m);
        const PathSpec path = discretize_path(route, cfg.sim.spacing_min);
        const Pose start{route[0], (route[1] - route[0]).normalized(), sim.v_const};
        results.push_back(
            rollout(town, path, start, {}, nullptr, expert, sim, {}, eval_cfg, 2 + i));
    }
    const EvalReport report = aggregate(results);
    const bool ok = report.success_rate == 100.0 && report.normal_driving_rate &&
                    *report.normal_driving_rate == 100.0 && sw.seconds() < 60.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "expert: success %.0f%%, normal driving %.1f%% over 20/20 paths (%.1fs)",
                  report.success_rate,
                  report.normal_driving_rate ? *report.normal_driving_rate : -1.0, sw.seconds());
    verdict(6, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 7: end-to-end determinism of the full pipeline") {
    TmpDir tmp("sgdrive_acc_det");
    RunConfig cfg;
    cfg.seed = 12;
    cfg.jobs = 2;
    cfg.data.episodes = 10;
    cfg.data.ticks = 300;
    cfg.train.epochs = 5;
    cfg.model.arch = "angle-input";
    cfg.eval.n_paths = 5;

    auto run = [&](const std::string& sub) {
        const std::string base = tmp.str(sub);
        cmd_collect(cfg, base + "/data");
        const auto bal = cmd_balance(cfg, base + "/data", base + "/bal");
        const auto tr = cmd_train(cfg, bal.dataset_path, base + "/train");
        const auto ev = cmd_eval(cfg, tr.final_checkpoint, base + "/eval");
        return std::make_pair(tr.final_checkpoint, ev.report_json);
    };
    const auto [ckpt_a, report_a] = run("a");
    const auto [ckpt_b, report_b] = run("b");

    const bool ckpt_same = io::read_file(ckpt_a) == io::read_file(ckpt_b);
    const bool report_same = io::read_file(report_a) == io::read_file(report_b);
    const bool ok = ckpt_same && report_same;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "two pipeline runs from one seed: checkpoints byte-identical=%d, eval reports "
                  "identical=%d",
                  ckpt_same, report_same);
    verdict(7, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 8: training halves the loss on a ~5k-sample dataset") {
    TmpDir tmp("sgdrive_acc_train");
    RunConfig cfg;
    cfg.seed = 21;
    cfg.jobs = 2;
    cfg.data.episodes = 10;
    cfg.data.cap_per_bin = 45;
    cfg.train.epochs = 20;

    cmd_collect(cfg, tmp.str("data"));
    const auto bal = cmd_balance(cfg, tmp.str("data"), tmp.str("bal"));

    bool ok = bal.samples_after > 4000 && bal.samples_after < 6500;
    std::ostringstream detail;
    detail << bal.samples_after << " balanced samples;";
    for (const std::string arch : {"angle-branched", "angle-input", "discrete-branched"}) {
        RunConfig run_cfg = cfg;
        run_cfg.model.arch = arch;
        const auto tr = cmd_train(run_cfg, bal.dataset_path, tmp.str("train_" + arch));
        const double first = tr.report.rows.front().total_loss;
        const double last = tr.report.rows.back().total_loss;
        bool components_logged = true;
        for (const auto& row : tr.report.rows)
            if (!(std::isfinite(row.steer_loss) && std::isfinite(row.throttle_loss)))
                components_logged = false;
        const bool halved = last <= 0.5 * first;
        char buf[96];
        std::snprintf(buf, sizeof(buf), " %s %.4f->%.4f (%s);", arch.c_str(), first, last,
                      halved ? "halved" : "NOT halved");
        detail << buf;
        ok = ok && halved && components_logged && tr.report.rows.size() == 20;
    }
    verdict(8, ok, detail.str());
    CHECK(ok);
}

TEST_CASE("criterion 9: closed-loop learning reaches 80% success on held-out paths") {
    Stopwatch sw;
    TmpDir tmp("sgdrive_acc_closed");
    const RunConfig cfg = criterion9_config();

    cmd_collect(cfg, tmp.str("data"));
    const auto bal = cmd_balance(cfg, tmp.str("data"), tmp.str("bal"));
    const auto tr = cmd_train(cfg, bal.dataset_path, tmp.str("train"));
    const auto ev = cmd_eval(cfg, tr.final_checkpoint, tmp.str("eval"));

    const bool ok = ev.report.success_rate >= 80.0 && sw.seconds() < 1800.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "angle-input (as), 50 episodes -> success %.0f%% on 10 held-out actor-free "
                  "paths, unseen condition seeds (%.0fs CPU)",
                  ev.report.success_rate, sw.seconds());
    verdict(9, ok, buf);
    CHECK(ok);
}

TEST_CASE("criterion 10 and 11: architecture and depth trends over 3 seeds") {
    TmpDir tmp("sgdrive_acc_trend");
    const std::uint64_t seeds[3] = {31, 32, 33};
    struct Unit {
        const char* arch;
        const char* channels;
    };
    const Unit units[4] = {{"discrete-branched", "as"},
                           {"angle-input", "as"},
                           {"angle-branched", "as"},
                           {"angle-input", "asd"}};

    std::map<std::string, std::vector<double>> success_by_group;
    std::vector<std::string> run_dirs;
    for (std::uint64_t seed : seeds) {
        for (const std::string channels : {"as", "asd"}) {
            const RunConfig ccfg = trend_config(seed, "angle-input", channels);
            cmd_collect(ccfg, tmp.str("data_" + std::to_string(seed) + "_" + channels));
            cmd_balance(ccfg, tmp.str("data_" + std::to_string(seed) + "_" + channels),
                        tmp.str("bal_" + std::to_string(seed) + "_" + channels));
        }
        for (const Unit& u : units) {
            const RunConfig cfg = trend_config(seed, u.arch, u.channels);
            const std::string tag =
                std::string(u.arch) + "_" + u.channels + "_s" + std::to_string(seed);
            const std::string bal_path =
                tmp.str("bal_" + std::to_string(seed) + "_" + u.channels) + "/balanced.json";
            const auto tr = cmd_train(cfg, bal_path, tmp.str("train_" + tag));
            const auto ev = cmd_eval(cfg, tr.final_checkpoint, tmp.str("run_" + tag));
            fs::copy_file(tmp.str("train_" + tag) + "/train_report.csv",
                          tmp.str("run_" + tag) + "/train_report.csv");
            run_dirs.push_back(tmp.str("run_" + tag));
            success_by_group[std::string(u.arch) + "," + u.channels].push_back(
                ev.report.success_rate);
            std::printf("    trend unit %s: success %.0f%%\n", tag.c_str(),
                        ev.report.success_rate);
            std::fflush(stdout);
        }
    }

    const auto rep = cmd_report(run_dirs, tmp.str("report"));
    const auto summary = parse_csv_by_key(io::read_file(rep.summary_csv), 2);

    auto mean = [&](const std::string& key) {
        const auto& v = success_by_group.at(key);
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const double baseline = mean("discrete-branched,as");
    const double angle_input = mean("angle-input,as");
    const double angle_branched = mean("angle-branched,as");
    const double angle_pooled = 0.5 * (angle_input + angle_branched);
    const bool trend10 = angle_pooled > baseline;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "mean success over 3 seeds, actors on: angle-input %.1f%%, angle-branched "
                  "%.1f%% (pooled %.1f%%) vs discrete-branched baseline %.1f%%",
                  angle_input, angle_branched, angle_pooled, baseline);
    verdict(10, trend10, buf);
    CHECK(trend10);

    // criterion 11 is non-gating on direction: it must be computed and
    // reported by cmd_report (summary.csv carries the veh+ped sums)
    bool reported = summary.count("angle-input,as") && summary.count("angle-input,asd");
    double as_vp = -1.0, asd_vp = -1.0;
    if (reported) {
        const auto& as_row = summary.at("angle-input,as");
        const auto& asd_row = summary.at("angle-input,asd");
        const std::string col = "mean_coll_vehicle_plus_pedestrian_per_km";
        reported = as_row.count(col) && asd_row.count(col) && as_row.at(col) != "NA" &&
                   asd_row.at(col) != "NA";
        if (reported) {
            as_vp = std::stod(as_row.at(col));
            asd_vp = std::stod(asd_row.at(col));
        }
    }
    std::snprintf(buf, sizeof(buf),
                  "depth ablation reported by cmd_report: veh+ped collisions/km asd %.4f vs as "
                  "%.4f over 3 seeds (%s; direction is non-gating)",
                  asd_vp, as_vp,
                  reported ? (asd_vp <= as_vp ? "asd <= as, matches the expected direction"
                                              : "asd > as on this desk-scale run")
                           : "missing");
    verdict(11, reported, buf);
    CHECK(reported);
}

TEST_CASE("criterion 12: serialization round-trips are exact") {
    TmpDir tmp("sgdrive_acc_serial");
    bool ok = true;

    // town
    const TownMap town = generate_town(6, 4, 4);
    if (TownMap::parse(town.serialize()).serialize() != town.serialize()) ok = false;

    // episode container
    {
        RunConfig cfg;
        cfg.data.episodes = 1;
        cfg.data.ticks = 40;
        cfg.sim.grid = 16;
        cmd_collect(cfg, tmp.str("data"));
        const std::string p1 = tmp.str("data/ep_0000.sgd");
        const std::string p2 = tmp.str("copy.sgd");
        save_episode(load_episode(p1), p2);
        if (io::read_file(p1) != io::read_file(p2)) ok = false;
    }

    // checkpoint, cross-checked by re-running forward on a fixed batch
    {
        auto params = build_model(ArchTag::AngleBranched, ChannelMode::ASD, tiny_dims(2), 7);
        const std::string c1 = tmp.str("m.sgckpt"), c2 = tmp.str("m2.sgckpt");
        save_checkpoint(params, c1);
        const ModelParameters back = load_checkpoint(c1);
        save_checkpoint(back, c2);
        if (io::read_file(c1) != io::read_file(c2)) ok = false;
        auto rb = random_batch(params, 9, 4);
        for (const auto& s : rb.batch) {
            const NetworkOutput a = forward(params, s.input, params.input_size(), s.speed,
                                            s.angle_deg);
            const NetworkOutput b = forward(back, s.input, back.input_size(), s.speed,
                                            s.angle_deg);
            if (a.steer != b.steer || a.throttle_logits != b.throttle_logits) ok = false;
        }
    }

    // evaluation report
    {
        std::vector<EpisodeResult> results(3);
        results[0].success = true;
        results[0].distance_total = 123.456;
        results[0].collisions = {1, 0, 2};
        results[1].success = false;
        results[1].termination = Termination::Stuck;
        results[1].expert_steer_dev = 0.25;
        results[2].success = true;
        results[2].distance_total = 98.5;
        results[2].distance_non_normal = 7.25;
        const EvalReport report = aggregate(results);
        const std::string dumped = report_to_json(report).dump(2);
        const EvalReport back = report_from_json(nlohmann::json::parse(dumped));
        if (report_to_json(back).dump(2) != dumped) ok = false;
    }

    verdict(12, ok,
            "town, episode, checkpoint and report files round-trip byte-exactly; reloaded "
            "checkpoints reproduce forward outputs bit for bit");
    CHECK(ok);
}
