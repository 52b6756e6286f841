#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/dataset.hpp"
#include "sgdrive/net.hpp"
#include "sgdrive/world.hpp"

namespace sgdrive {

struct TrainConfig {
    double lambda = 0.5;  // task weight between steer regression and throttle classification
    double lr0 = 0.001;
    double lr_decay = 0.9;  // per epoch
    int batch_size = 16;
    int epochs = 12;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]");
        if (lr0 <= 0.0 || lr_decay <= 0.0 || lr_decay > 1.0)
            throw ConfigError("lr0 > 0 and 0 < lr_decay <= 1 required");
        if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be >= 1");
    }

    double learning_rate(int epoch) const { return lr0 * std::pow(lr_decay, epoch); }
};

struct LossTerms {
    double total = 0.0;
    double steer_part = 0.0;     // MSE over the steer scalar
    double throttle_part = 0.0;  // class-weighted cross entropy
};

// L = (1 - lambda) * MSE(steer) + lambda * w * CrossEntropy(throttle)
inline LossTerms loss_terms(const NetworkOutput& out, double steer_label, int throttle_label,
                            double lambda, double class_weight) {
    LossTerms t;
    const double err = out.steer - steer_label;
    t.steer_part = err * err;

    const double zmax = std::max(out.throttle_logits[0], out.throttle_logits[1]);
    const double e0 = std::exp(out.throttle_logits[0] - zmax);
    const double e1 = std::exp(out.throttle_logits[1] - zmax);
    const double log_z = std::log(e0 + e1) + zmax;
    t.throttle_part = class_weight * (log_z - out.throttle_logits[throttle_label ? 1 : 0]);

    t.total = (1.0 - lambda) * t.steer_part + lambda * t.throttle_part;
    return t;
}

struct BatchSample {
    const double* input = nullptr;  // flattened observation stack
    double speed = 0.0;
    double angle_deg = 0.0;
    double steer_label = 0.0;
    int throttle_label = 0;
    double weight = 1.0;
};

// Mean loss and mean gradients over a batch. Branch routing means inactive
// heads accumulate exactly zero gradient.
inline LossTerms batch_gradients(const ModelParameters& params,
                                 const std::vector<BatchSample>& batch, double lambda,
                                 GradientMap& grads) {
    if (batch.empty()) throw DataError("empty batch");
    LossTerms sum;
    ForwardCache cache;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const BatchSample& s = batch[i];
        const NetworkOutput out = forward_cached(params, s.input, params.input_size(), s.speed,
                                                 s.angle_deg, cache);
        const LossTerms t = loss_terms(out, s.steer_label, s.throttle_label, lambda, s.weight);
        if (!std::isfinite(t.total))
            throw RunError("non-finite loss at sample " + std::to_string(i));
        sum.total += t.total;
        sum.steer_part += t.steer_part;
        sum.throttle_part += t.throttle_part;

        std::array<double, 3> d_out{};
        d_out[0] = (1.0 - lambda) * 2.0 * (out.steer - s.steer_label) *
                   (1.0 - out.steer * out.steer);
        const double zmax = std::max(out.throttle_logits[0], out.throttle_logits[1]);
        const double e0 = std::exp(out.throttle_logits[0] - zmax);
        const double e1 = std::exp(out.throttle_logits[1] - zmax);
        const double p1 = e1 / (e0 + e1);
        d_out[1] = lambda * s.weight * ((1.0 - p1) - (s.throttle_label ? 0.0 : 1.0));
        d_out[2] = lambda * s.weight * (p1 - (s.throttle_label ? 1.0 : 0.0));
        backward_cached(params, s.input, cache, d_out, grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& [name, g] : grads)
        for (double& v : g.data) v *= inv;
    sum.total *= inv;
    sum.steer_part *= inv;
    sum.throttle_part *= inv;
    return sum;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    GradientMap m, v;
    std::uint64_t t = 0;

    static AdamState init(const ModelParameters& params) {
        return {zero_gradients(params), zero_gradients(params), 0};
    }
};

inline void adam_step(ModelParameters& params, const GradientMap& grads, AdamState& state,
                      double lr, const TrainConfig& cfg) {
    state.t += 1;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (auto& [name, theta] : params.tensors) {
        const Tensor& g = grads.at(name);
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            theta.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

// permutation depends only on (seed, epoch)
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(hash_mix(seed, 0xe70c4ULL, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainReportRow {
    int epoch = 0;
    double steer_loss = 0.0;
    double throttle_loss = 0.0;
    double total_loss = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
    std::string checkpoint;
};

struct TrainReport {
    std::vector<TrainReportRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os << "epoch,steer_loss,throttle_loss,total_loss,lr,wall_s,checkpoint\n";
        char buf[64];
        for (const auto& r : rows) {
            os << r.epoch << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.steer_loss);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.throttle_loss);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.total_loss);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.lr);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.3f", r.wall_s);
            os << buf << ',' << r.checkpoint << '\n';
        }
        return os.str();
    }
};

struct TrainDivergedError : RunError {
    TrainReport partial;
    TrainDivergedError(const std::string& what, TrainReport report)
        : RunError(what), partial(std::move(report)) {}
};

struct TrainResult {
    ModelParameters params;
    TrainReport report;
};

// Seeded-shuffle minibatch Adam over materialized samples. A checkpoint is
// written per epoch when checkpoint_dir is non-empty.
inline TrainResult train(ModelParameters params, const SampleStore& store,
                         const std::vector<SampleRef>& samples, const TrainConfig& cfg,
                         const std::string& checkpoint_dir = "") {
    cfg.validate();
    if (samples.empty()) throw DataError("training dataset is empty");
    if (store.mode() != params.mode)
        throw ConfigError("dataset channel mode does not match the model");
    if (store.k() != params.dims.k || store.grid() != params.dims.grid)
        throw ConfigError("dataset stack shape does not match the model");

    TrainReport report;
    AdamState adam = AdamState::init(params);
    const std::size_t input_len = store.input_size();
    std::vector<double> input_buf(static_cast<std::size_t>(cfg.batch_size) * input_len);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        const double lr = cfg.learning_rate(epoch);
        const auto order = epoch_permutation(samples.size(), cfg.rng_seed, epoch);

        double sum_total = 0.0, sum_steer = 0.0, sum_throttle = 0.0;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<BatchSample> batch;
            batch.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const SampleRef& ref = samples[order[i]];
                double* dst = input_buf.data() + (i - begin) * input_len;
                store.fill_input(ref, dst);
                BatchSample bs;
                bs.input = dst;
                bs.speed = ref.speed;
                bs.angle_deg = ref.angle_deg;
                bs.steer_label = ref.steer;
                bs.throttle_label = ref.throttle;
                bs.weight = ref.weight;
                batch.push_back(bs);
            }
            GradientMap grads = zero_gradients(params);
            LossTerms terms;
            try {
                terms = batch_gradients(params, batch, cfg.lambda, grads);
            } catch (const RunError& e) {
                throw TrainDivergedError(e.what(), report);
            }
            adam_step(params, grads, adam, lr, cfg);
            sum_total += terms.total * static_cast<double>(batch.size());
            sum_steer += terms.steer_part * static_cast<double>(batch.size());
            sum_throttle += terms.throttle_part * static_cast<double>(batch.size());
            seen += batch.size();
        }

        TrainReportRow row;
        row.epoch = epoch;
        row.total_loss = sum_total / static_cast<double>(seen);
        row.steer_loss = sum_steer / static_cast<double>(seen);
        row.throttle_loss = sum_throttle / static_cast<double>(seen);
        row.lr = lr;
        row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                         .count();
        if (!checkpoint_dir.empty()) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.sgckpt", epoch);
            row.checkpoint = checkpoint_dir + "/" + name;
            save_checkpoint(params, row.checkpoint);
        }
        report.rows.push_back(row);
    }
    return {std::move(params), std::move(report)};
}

}  // namespace sgdrive
