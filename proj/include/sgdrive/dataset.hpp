#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/episode.hpp"
#include "sgdrive/sensor.hpp"

namespace sgdrive {

// One labeled training tuple, stored by reference into an episode file so the
// raster payload is never duplicated. The observation stack is materialized
// on demand by SampleStore.
struct SampleRef {
    std::uint32_t episode = 0;  // index into the dataset's episode list
    std::uint32_t tick = 0;
    std::uint8_t viewpoint = kViewCenter;
    double steer = 0.0;
    std::uint8_t throttle = 0;
    double angle_deg = 0.0;
    double speed = 0.0;
    std::uint8_t light_visible = 0;
    double weight = 1.0;
};

struct BalanceSpec {
    int n_bins = 199;
    std::size_t cap_per_bin = 200;
    std::uint64_t rng_seed = 0;
    std::int64_t light_injection_count = -1;    // -1: 10% of the post-balance size
    std::int64_t restart_injection_count = -1;  // -1: 5% of the post-balance size

    void validate() const {
        if (n_bins < 3 || n_bins % 2 == 0)
            throw ConfigError("n_bins must be odd and at least 3");
        if (cap_per_bin < 1) throw ConfigError("cap_per_bin must be at least 1");
    }
};

inline int steer_bin(double steer, int n_bins) {
    const double t = (clamp(steer, -1.0, 1.0) + 1.0) * 0.5;  // [0, 1]
    int bin = static_cast<int>(t * n_bins);
    if (bin >= n_bins) bin = n_bins - 1;  // steer exactly 1 joins the last bin
    return bin;
}

inline std::vector<std::size_t> steer_histogram(const std::vector<SampleRef>& samples,
                                                int n_bins) {
    std::vector<std::size_t> hist(n_bins, 0);
    for (const auto& s : samples) ++hist[steer_bin(s.steer, n_bins)];
    return hist;
}

// All three viewpoints of every tick become samples; side views carry their
// recomputed commands and corrective steer labels.
inline std::vector<SampleRef> samples_from_log(const EpisodeLog& log, std::uint32_t episode_index) {
    std::vector<SampleRef> out;
    out.reserve(log.ticks.size() * 3);
    for (std::uint32_t t = 0; t < log.ticks.size(); ++t) {
        const TickRecord& r = log.ticks[t];
        for (int v = 0; v < 3; ++v) {
            SampleRef s;
            s.episode = episode_index;
            s.tick = t;
            s.viewpoint = static_cast<std::uint8_t>(v);
            s.throttle = r.throttle;
            s.speed = r.ego.speed;
            s.light_visible = r.light_visible;
            s.steer = v == kViewCenter ? r.steer : (v == kViewLeft ? r.steer_left : r.steer_right);
            s.angle_deg =
                v == kViewCenter ? r.angle_deg : (v == kViewLeft ? r.angle_left : r.angle_right);
            out.push_back(s);
        }
    }
    return out;
}

// Steering-histogram balancing: equal-width bins over [-1, 1]; bins above the
// cap keep a seeded uniform subset of exactly cap_per_bin samples. Samples
// with a traffic light in view are then re-injected from the original set,
// and the result is shuffled deterministically.
inline std::vector<SampleRef> balance(const std::vector<SampleRef>& samples,
                                      const BalanceSpec& spec) {
    spec.validate();
    if (samples.empty()) return {};

    std::vector<std::vector<std::size_t>> bins(spec.n_bins);
    for (std::size_t i = 0; i < samples.size(); ++i)
        bins[steer_bin(samples[i].steer, spec.n_bins)].push_back(i);

    Rng rng(hash_mix(spec.rng_seed, 0xba1a4ceULL));
    std::vector<SampleRef> kept;
    for (auto& bin : bins) {
        if (bin.size() <= spec.cap_per_bin) {
            for (std::size_t i : bin) kept.push_back(samples[i]);
        } else {
            auto pick = rng.sample_indices(bin.size(), spec.cap_per_bin);
            std::sort(pick.begin(), pick.end());
            for (std::size_t p : pick) kept.push_back(samples[bin[p]]);
        }
    }

    const std::size_t base_size = kept.size();
    std::vector<std::size_t> lit;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].light_visible) lit.push_back(i);
    std::int64_t inject = spec.light_injection_count;
    if (inject < 0) inject = static_cast<std::int64_t>(base_size / 10);
    if (!lit.empty()) {
        for (std::int64_t n = 0; n < inject; ++n)
            kept.push_back(samples[lit[rng.next_below(lit.size())]]);
    }

    // balancing caps the dense straight-driving bins, which also removes most
    // stop-and-go transitions; re-inject drive-from-standstill samples so the
    // throttle head keeps seeing them
    std::vector<std::size_t> restarts;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].throttle && samples[i].speed == 0.0) restarts.push_back(i);
    std::int64_t restart_inject = spec.restart_injection_count;
    if (restart_inject < 0) restart_inject = static_cast<std::int64_t>(base_size / 20);
    if (!restarts.empty()) {
        for (std::int64_t n = 0; n < restart_inject; ++n)
            kept.push_back(samples[restarts[rng.next_below(restarts.size())]]);
    }

    rng.shuffle(kept);
    return kept;
}

// Inverse-frequency class weights for the binary throttle, normalized so the
// two weights average 1: w_c = N / (2 * N_c).
inline std::pair<double, double> throttle_class_weights(const std::vector<SampleRef>& samples) {
    std::size_t n0 = 0, n1 = 0;
    for (const auto& s : samples) (s.throttle ? n1 : n0)++;
    if (n0 == 0 || n1 == 0)
        throw DataError("both throttle classes must be present to compute class weights");
    const double n = static_cast<double>(samples.size());
    return {n / (2.0 * static_cast<double>(n0)), n / (2.0 * static_cast<double>(n1))};
}

inline void apply_class_weights(std::vector<SampleRef>& samples, double w0, double w1) {
    for (auto& s : samples) s.weight = s.throttle ? w1 : w0;
}

// ---------------------------------------------------------------------------
// Materialization: owns the referenced episode logs and assembles the k-frame
// egocentric input for a sample. First-tick stacks replicate the first frame.
// ---------------------------------------------------------------------------

class SampleStore {
  public:
    SampleStore(std::vector<EpisodeLog> episodes, int k, ChannelMode mode)
        : episodes_(std::move(episodes)), k_(k), mode_(mode) {
        for (const auto& ep : episodes_) {
            if (ep.mode != mode_) throw ConfigError("episode channel mode mismatch");
            if (ep.ticks.empty()) throw DataError("empty episode in sample store");
        }
    }

    int k() const { return k_; }
    ChannelMode mode() const { return mode_; }
    const EpisodeLog& episode(std::size_t i) const { return episodes_.at(i); }
    std::size_t n_episodes() const { return episodes_.size(); }

    int grid() const { return episodes_.front().grid_h; }
    int channels() const { return episodes_.front().channels; }
    std::size_t input_size() const {
        return static_cast<std::size_t>(k_) * channels() * grid() * grid();
    }

    // flattened [k*C][H][W] input, oldest frame first
    void fill_input(const SampleRef& s, double* dst) const {
        const EpisodeLog& ep = episodes_.at(s.episode);
        const int h = ep.grid_h, w = ep.grid_w, c = ep.channels;
        for (int f = 0; f < k_; ++f) {
            const int offset = k_ - 1 - f;
            const std::int64_t tick = std::max<std::int64_t>(0, static_cast<std::int64_t>(s.tick) - offset);
            const SensorFrame& frame = ep.frame(static_cast<std::uint32_t>(tick), s.viewpoint);
            for (int ch = 0; ch < c; ++ch)
                for (int r = 0; r < h; ++r)
                    for (int col = 0; col < w; ++col) *dst++ = frame.value(ch, r, col);
        }
    }

  private:
    std::vector<EpisodeLog> episodes_;
    int k_;
    ChannelMode mode_;
};

}  // namespace sgdrive
