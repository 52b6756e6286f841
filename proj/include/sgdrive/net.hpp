#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sgdrive/common.hpp"
#include "sgdrive/geometry.hpp"
#include "sgdrive/sensor.hpp"
#include "sgdrive/tensor.hpp"

namespace sgdrive {

enum class ArchTag : std::uint8_t { AngleBranched = 0, AngleInput = 1, DiscreteBranched = 2 };

inline const char* arch_name(ArchTag a) {
    switch (a) {
        case ArchTag::AngleBranched: return "angle-branched";
        case ArchTag::AngleInput: return "angle-input";
        default: return "discrete-branched";
    }
}

inline ArchTag arch_from_name(const std::string& s) {
    if (s == "angle-branched") return ArchTag::AngleBranched;
    if (s == "angle-input") return ArchTag::AngleInput;
    if (s == "discrete-branched") return ArchTag::DiscreteBranched;
    throw ConfigError("unknown architecture: " + s +
                      " (expected angle-branched|angle-input|discrete-branched)");
}

// Width configuration. Desk defaults scale the reference widths (512/100)
// down by a common factor; the originals remain legal values.
struct ModelDims {
    int k = 4;
    int grid = 32;
    int conv1 = 16;
    int conv2 = 32;
    int conv3 = 64;
    int image_feature = 64;  // encoder output width, shared by all three encoders
    int scalar_hidden = 12;  // first stage of the speed/angle encoders
    int fusion_hidden = 32;
    int head_hidden = 32;
    double speed_norm = 5.0;  // speed input divided by this before encoding

    void validate() const {
        if (k < 1 || grid < 8 || grid % 8 != 0)
            throw ConfigError("model dims: k >= 1 and grid a positive multiple of 8 required");
        if (conv1 < 1 || conv2 < 1 || conv3 < 1 || image_feature < 1 || scalar_hidden < 1 ||
            fusion_hidden < 1 || head_hidden < 1 || speed_norm <= 0.0)
            throw ConfigError("model dims must be positive");
    }
};

struct NetworkOutput {
    double steer = 0.0;  // tanh output, strictly inside (-1, 1)
    std::array<double, 2> throttle_logits{0.0, 0.0};

    int throttle() const { return throttle_logits[1] > throttle_logits[0] ? 1 : 0; }
};

struct ModelParameters {
    ArchTag arch = ArchTag::AngleBranched;
    ChannelMode mode = ChannelMode::AS;
    ModelDims dims;
    std::uint64_t init_seed = 0;
    std::vector<std::string> layer_order;
    std::map<std::string, Tensor> tensors;

    Tensor& w(const std::string& layer) { return tensors.at(layer + ".w"); }
    Tensor& b(const std::string& layer) { return tensors.at(layer + ".b"); }
    const Tensor& w(const std::string& layer) const { return tensors.at(layer + ".w"); }
    const Tensor& b(const std::string& layer) const { return tensors.at(layer + ".b"); }

    int input_channels() const { return dims.k * channel_count(mode); }
    std::size_t input_size() const {
        return static_cast<std::size_t>(input_channels()) * dims.grid * dims.grid;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : tensors) n += t.size();
        return n;
    }

    bool has_angle_encoder() const { return arch != ArchTag::DiscreteBranched; }
    int n_heads() const { return arch == ArchTag::AngleInput ? 1 : 3; }
};

// Gradients use the same keyed layout as the parameters.
using GradientMap = std::map<std::string, Tensor>;

inline GradientMap zero_gradients(const ModelParameters& params) {
    GradientMap g;
    for (const auto& [name, t] : params.tensors) g.emplace(name, Tensor(t.shape));
    return g;
}

// Which action head processes a sample. The subgoal angle acts as the switch
// for both branched variants; the angle-input network has a single head.
inline int active_head(const ModelParameters& params, double command_angle_deg) {
    if (params.arch == ArchTag::AngleInput) return 0;
    return static_cast<int>(discretize_branch(SubgoalAngle{command_angle_deg}));
}

namespace nn {

// --- primitive kernels (stride-2, pad-1, 3x3 convolutions and dense layers) ---

inline void conv2d_s2_forward(const double* in, int ic, int ih, int iw, const double* w,
                              const double* b, int oc, double* out) {
    const int oh = ih / 2, ow = iw / 2;
    for (int o = 0; o < oc; ++o) {
        double* out_plane = out + static_cast<std::size_t>(o) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) out_plane[i] = b[o];
        for (int c = 0; c < ic; ++c) {
            const double* in_plane = in + static_cast<std::size_t>(c) * ih * iw;
            const double* kw = w + ((static_cast<std::size_t>(o) * ic + c) * 9);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    const int base_y = 2 * oy - 1, base_x = 2 * ox - 1;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int y = base_y + ky;
                        if (y < 0 || y >= ih) continue;
                        const double* row = in_plane + static_cast<std::size_t>(y) * iw;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int x = base_x + kx;
                            if (x < 0 || x >= iw) continue;
                            acc += kw[ky * 3 + kx] * row[x];
                        }
                    }
                    out_plane[oy * ow + ox] += acc;
                }
            }
        }
    }
}

inline void conv2d_s2_backward(const double* in, int ic, int ih, int iw, const double* w, int oc,
                               const double* dout, double* din, double* dw, double* db) {
    const int oh = ih / 2, ow = iw / 2;
    for (int o = 0; o < oc; ++o) {
        const double* dout_plane = dout + static_cast<std::size_t>(o) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) db[o] += dout_plane[i];
        for (int c = 0; c < ic; ++c) {
            const double* in_plane = in + static_cast<std::size_t>(c) * ih * iw;
            double* din_plane = din ? din + static_cast<std::size_t>(c) * ih * iw : nullptr;
            const std::size_t koff = (static_cast<std::size_t>(o) * ic + c) * 9;
            const double* kw = w + koff;
            double* kdw = dw + koff;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = dout_plane[oy * ow + ox];
                    if (g == 0.0) continue;
                    const int base_y = 2 * oy - 1, base_x = 2 * ox - 1;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int y = base_y + ky;
                        if (y < 0 || y >= ih) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int x = base_x + kx;
                            if (x < 0 || x >= iw) continue;
                            kdw[ky * 3 + kx] += g * in_plane[y * iw + x];
                            if (din_plane) din_plane[y * iw + x] += g * kw[ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

inline void fc_forward(const double* in, int n_in, const double* w, const double* b, int n_out,
                       double* out) {
    for (int o = 0; o < n_out; ++o) {
        double acc = b[o];
        const double* row = w + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
}

inline void fc_backward(const double* in, int n_in, const double* w, int n_out, const double* dout,
                        double* din, double* dw, double* db) {
    if (din)
        for (int i = 0; i < n_in; ++i) din[i] = 0.0;
    for (int o = 0; o < n_out; ++o) {
        const double g = dout[o];
        db[o] += g;
        const double* row = w + static_cast<std::size_t>(o) * n_in;
        double* drow = dw + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) {
            drow[i] += g * in[i];
            if (din) din[i] += g * row[i];
        }
    }
}

inline void relu(const double* pre, int n, double* post) {
    for (int i = 0; i < n; ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

inline void relu_backward(const double* pre, int n, double* d) {
    for (int i = 0; i < n; ++i)
        if (pre[i] <= 0.0) d[i] = 0.0;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

namespace detail {

inline void add_layer(ModelParameters& p, const std::string& name,
                      std::vector<std::int64_t> w_shape, std::int64_t n_out) {
    p.layer_order.push_back(name);
    p.tensors.emplace(name + ".w", Tensor(std::move(w_shape)));
    p.tensors.emplace(name + ".b", Tensor({n_out}));
}

inline void xavier_init(ModelParameters& p, std::uint64_t seed) {
    Rng rng(hash_mix(seed, 0x1417ULL));
    for (const auto& name : p.layer_order) {
        Tensor& w = p.w(name);
        std::int64_t fan_in, fan_out;
        if (w.shape.size() == 4) {  // conv: [oc, ic, 3, 3]
            fan_in = w.shape[1] * w.shape[2] * w.shape[3];
            fan_out = w.shape[0] * w.shape[2] * w.shape[3];
        } else {  // fc: [out, in]
            fan_in = w.shape[1];
            fan_out = w.shape[0];
        }
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : w.data) v = rng.uniform(-a, a);
        // biases stay zero
    }
}

}  // namespace detail

inline ModelParameters build_model(ArchTag arch, ChannelMode mode, const ModelDims& dims,
                                   std::uint64_t init_seed) {
    dims.validate();
    ModelParameters p;
    p.arch = arch;
    p.mode = mode;
    p.dims = dims;
    p.init_seed = init_seed;

    const std::int64_t ic = dims.k * channel_count(mode);
    const std::int64_t f = dims.image_feature;
    detail::add_layer(p, "conv1", {dims.conv1, ic, 3, 3}, dims.conv1);
    detail::add_layer(p, "conv2", {dims.conv2, dims.conv1, 3, 3}, dims.conv2);
    detail::add_layer(p, "conv3", {dims.conv3, dims.conv2, 3, 3}, dims.conv3);
    detail::add_layer(p, "img_fc1", {f, dims.conv3}, f);
    detail::add_layer(p, "img_fc2", {f, f}, f);
    detail::add_layer(p, "speed_fc1", {dims.scalar_hidden, 1}, dims.scalar_hidden);
    detail::add_layer(p, "speed_fc2", {f, dims.scalar_hidden}, f);
    if (p.has_angle_encoder()) {
        detail::add_layer(p, "angle_fc1", {dims.scalar_hidden, 1}, dims.scalar_hidden);
        detail::add_layer(p, "angle_fc2", {f, dims.scalar_hidden}, f);
    }

    const std::int64_t fused = p.has_angle_encoder() ? 3 * f : 2 * f;
    if (arch == ArchTag::DiscreteBranched) {
        // switch before fusion: one fusion+action stack per branch
        for (int h = 0; h < 3; ++h) {
            const std::string tag = std::to_string(h);
            detail::add_layer(p, "fusion" + tag, {dims.fusion_hidden, fused}, dims.fusion_hidden);
            detail::add_layer(p, "head" + tag + "_fc", {dims.head_hidden, dims.fusion_hidden},
                              dims.head_hidden);
            detail::add_layer(p, "head" + tag + "_out", {3, dims.head_hidden}, 3);
        }
    } else {
        // one shared fusion layer; heads differ
        detail::add_layer(p, "fusion", {dims.fusion_hidden, fused}, dims.fusion_hidden);
        const int heads = p.n_heads();
        for (int h = 0; h < heads; ++h) {
            const std::string tag = heads == 1 ? std::string() : std::to_string(h);
            detail::add_layer(p, "head" + tag + "_fc", {dims.head_hidden, dims.fusion_hidden},
                              dims.head_hidden);
            detail::add_layer(p, "head" + tag + "_out", {3, dims.head_hidden}, 3);
        }
    }

    detail::xavier_init(p, init_seed);
    return p;
}

inline std::string head_layer_tag(const ModelParameters& p, int head) {
    return p.n_heads() == 1 ? std::string() : std::to_string(head);
}

// ---------------------------------------------------------------------------
// Forward pass with an activation cache for reverse mode
// ---------------------------------------------------------------------------

struct ForwardCache {
    std::vector<double> conv1_pre, conv1_post, conv2_pre, conv2_post, conv3_pre, conv3_post;
    std::vector<double> gap;
    std::vector<double> img1_pre, img1_post, img2_pre, img2_post;
    std::vector<double> spd1_pre, spd1_post, spd2_pre, spd2_post;
    std::vector<double> ang1_pre, ang1_post, ang2_pre, ang2_post;
    std::vector<double> fused_in;
    std::vector<double> fus_pre, fus_post;
    std::vector<double> head_pre, head_post;
    std::array<double, 3> out{};
    double speed_in = 0.0, angle_in = 0.0;
    int head = 0;
};

inline NetworkOutput forward_cached(const ModelParameters& p, const double* input,
                                    std::size_t input_len, double speed, double command_angle_deg,
                                    ForwardCache& cache) {
    if (input_len != p.input_size()) throw DataError("observation input size mismatch");
    if (speed < 0.0) throw DataError("negative speed input");

    const ModelDims& d = p.dims;
    const int g = d.grid, g2 = g / 2, g4 = g / 4, g8 = g / 8;
    const int ic = p.input_channels();
    const int f = d.image_feature;

    cache.conv1_pre.assign(static_cast<std::size_t>(d.conv1) * g2 * g2, 0.0);
    nn::conv2d_s2_forward(input, ic, g, g, p.w("conv1").ptr(), p.b("conv1").ptr(), d.conv1,
                          cache.conv1_pre.data());
    cache.conv1_post.resize(cache.conv1_pre.size());
    nn::relu(cache.conv1_pre.data(), static_cast<int>(cache.conv1_pre.size()),
             cache.conv1_post.data());

    cache.conv2_pre.assign(static_cast<std::size_t>(d.conv2) * g4 * g4, 0.0);
    nn::conv2d_s2_forward(cache.conv1_post.data(), d.conv1, g2, g2, p.w("conv2").ptr(),
                          p.b("conv2").ptr(), d.conv2, cache.conv2_pre.data());
    cache.conv2_post.resize(cache.conv2_pre.size());
    nn::relu(cache.conv2_pre.data(), static_cast<int>(cache.conv2_pre.size()),
             cache.conv2_post.data());

    cache.conv3_pre.assign(static_cast<std::size_t>(d.conv3) * g8 * g8, 0.0);
    nn::conv2d_s2_forward(cache.conv2_post.data(), d.conv2, g4, g4, p.w("conv3").ptr(),
                          p.b("conv3").ptr(), d.conv3, cache.conv3_pre.data());
    cache.conv3_post.resize(cache.conv3_pre.size());
    nn::relu(cache.conv3_pre.data(), static_cast<int>(cache.conv3_pre.size()),
             cache.conv3_post.data());

    // global average pooling
    cache.gap.assign(d.conv3, 0.0);
    const int plane = g8 * g8;
    for (int c = 0; c < d.conv3; ++c) {
        double acc = 0.0;
        const double* pl = cache.conv3_post.data() + static_cast<std::size_t>(c) * plane;
        for (int i = 0; i < plane; ++i) acc += pl[i];
        cache.gap[c] = acc / plane;
    }

    auto dense = [](const ModelParameters& pp, const std::string& name, const double* in, int n_in,
                    std::vector<double>& pre, std::vector<double>& post) {
        const int n_out = static_cast<int>(pp.b(name).size());
        pre.assign(n_out, 0.0);
        nn::fc_forward(in, n_in, pp.w(name).ptr(), pp.b(name).ptr(), n_out, pre.data());
        post.resize(n_out);
        nn::relu(pre.data(), n_out, post.data());
    };

    dense(p, "img_fc1", cache.gap.data(), d.conv3, cache.img1_pre, cache.img1_post);
    dense(p, "img_fc2", cache.img1_post.data(), f, cache.img2_pre, cache.img2_post);

    cache.speed_in = speed / d.speed_norm;
    dense(p, "speed_fc1", &cache.speed_in, 1, cache.spd1_pre, cache.spd1_post);
    dense(p, "speed_fc2", cache.spd1_post.data(), d.scalar_hidden, cache.spd2_pre,
          cache.spd2_post);

    cache.fused_in.clear();
    cache.fused_in.insert(cache.fused_in.end(), cache.img2_post.begin(), cache.img2_post.end());
    cache.fused_in.insert(cache.fused_in.end(), cache.spd2_post.begin(), cache.spd2_post.end());
    if (p.has_angle_encoder()) {
        cache.angle_in = command_angle_deg / 180.0;
        dense(p, "angle_fc1", &cache.angle_in, 1, cache.ang1_pre, cache.ang1_post);
        dense(p, "angle_fc2", cache.ang1_post.data(), d.scalar_hidden, cache.ang2_pre,
              cache.ang2_post);
        cache.fused_in.insert(cache.fused_in.end(), cache.ang2_post.begin(),
                              cache.ang2_post.end());
    }

    cache.head = active_head(p, command_angle_deg);
    const std::string fusion_name =
        p.arch == ArchTag::DiscreteBranched ? "fusion" + std::to_string(cache.head) : "fusion";
    dense(p, fusion_name, cache.fused_in.data(), static_cast<int>(cache.fused_in.size()),
          cache.fus_pre, cache.fus_post);

    const std::string tag = head_layer_tag(p, cache.head);
    dense(p, "head" + tag + "_fc", cache.fus_post.data(), d.fusion_hidden, cache.head_pre,
          cache.head_post);
    nn::fc_forward(cache.head_post.data(), d.head_hidden, p.w("head" + tag + "_out").ptr(),
                   p.b("head" + tag + "_out").ptr(), 3, cache.out.data());

    NetworkOutput y;
    y.steer = std::tanh(cache.out[0]);
    if (y.steer >= 1.0) y.steer = std::nextafter(1.0, 0.0);
    if (y.steer <= -1.0) y.steer = std::nextafter(-1.0, 0.0);
    y.throttle_logits = {cache.out[1], cache.out[2]};
    return y;
}

inline NetworkOutput forward(const ModelParameters& p, const double* input, std::size_t input_len,
                             double speed, double command_angle_deg) {
    ForwardCache cache;
    return forward_cached(p, input, input_len, speed, command_angle_deg, cache);
}

inline NetworkOutput forward(const ModelParameters& p, const ObservationStack& stack, double speed,
                             double command_angle_deg) {
    if (stack.mode != p.mode) throw ConfigError("observation channel mode mismatch");
    const auto input = stack.to_input();
    return forward(p, input.data(), input.size(), speed, command_angle_deg);
}

// Reverse mode from output-side gradients (d_out = dLoss/d[steer_unit, z0, z1]).
// Only the active head (and fusion stack, for the discrete-branched variant)
// receives gradient.
inline void backward_cached(const ModelParameters& p, const double* input,
                            const ForwardCache& cache, const std::array<double, 3>& d_out,
                            GradientMap& grads) {
    const ModelDims& d = p.dims;
    const int g = d.grid, g2 = g / 2, g4 = g / 4, g8 = g / 8;
    const int f = d.image_feature;
    const std::string tag = head_layer_tag(p, cache.head);

    std::vector<double> d_head_post(d.head_hidden, 0.0);
    nn::fc_backward(cache.head_post.data(), d.head_hidden, p.w("head" + tag + "_out").ptr(), 3,
                    d_out.data(), d_head_post.data(), grads.at("head" + tag + "_out.w").ptr(),
                    grads.at("head" + tag + "_out.b").ptr());
    nn::relu_backward(cache.head_pre.data(), d.head_hidden, d_head_post.data());

    std::vector<double> d_fus_post(d.fusion_hidden, 0.0);
    nn::fc_backward(cache.fus_post.data(), d.fusion_hidden, p.w("head" + tag + "_fc").ptr(),
                    d.head_hidden, d_head_post.data(), d_fus_post.data(),
                    grads.at("head" + tag + "_fc.w").ptr(), grads.at("head" + tag + "_fc.b").ptr());
    nn::relu_backward(cache.fus_pre.data(), d.fusion_hidden, d_fus_post.data());

    const std::string fusion_name =
        p.arch == ArchTag::DiscreteBranched ? "fusion" + std::to_string(cache.head) : "fusion";
    std::vector<double> d_fused(cache.fused_in.size(), 0.0);
    nn::fc_backward(cache.fused_in.data(), static_cast<int>(cache.fused_in.size()),
                    p.w(fusion_name).ptr(), d.fusion_hidden, d_fus_post.data(), d_fused.data(),
                    grads.at(fusion_name + ".w").ptr(), grads.at(fusion_name + ".b").ptr());

    // split the concatenation
    const double* d_img2 = d_fused.data();
    const double* d_spd2 = d_fused.data() + f;
    const double* d_ang2 = p.has_angle_encoder() ? d_fused.data() + 2 * f : nullptr;

    auto dense_backward = [&](const std::string& name, const double* in, int n_in,
                              const std::vector<double>& pre, const double* dout_post, int n_out,
                              double* din) {
        std::vector<double> dpre(dout_post, dout_post + n_out);
        nn::relu_backward(pre.data(), n_out, dpre.data());
        nn::fc_backward(in, n_in, p.w(name).ptr(), n_out, dpre.data(), din,
                        grads.at(name + ".w").ptr(), grads.at(name + ".b").ptr());
    };

    // image encoder
    std::vector<double> d_img1(f, 0.0);
    dense_backward("img_fc2", cache.img1_post.data(), f, cache.img2_pre, d_img2, f, d_img1.data());
    nn::relu_backward(cache.img1_pre.data(), f, d_img1.data());
    std::vector<double> d_gap(d.conv3, 0.0);
    nn::fc_backward(cache.gap.data(), d.conv3, p.w("img_fc1").ptr(), f, d_img1.data(),
                    d_gap.data(), grads.at("img_fc1.w").ptr(), grads.at("img_fc1.b").ptr());

    const int plane = g8 * g8;
    std::vector<double> d_conv3(cache.conv3_post.size());
    for (int c = 0; c < d.conv3; ++c) {
        const double v = d_gap[c] / plane;
        double* pl = d_conv3.data() + static_cast<std::size_t>(c) * plane;
        for (int i = 0; i < plane; ++i) pl[i] = v;
    }
    nn::relu_backward(cache.conv3_pre.data(), static_cast<int>(d_conv3.size()), d_conv3.data());

    std::vector<double> d_conv2(cache.conv2_post.size(), 0.0);
    nn::conv2d_s2_backward(cache.conv2_post.data(), d.conv2, g4, g4, p.w("conv3").ptr(), d.conv3,
                           d_conv3.data(), d_conv2.data(), grads.at("conv3.w").ptr(),
                           grads.at("conv3.b").ptr());
    nn::relu_backward(cache.conv2_pre.data(), static_cast<int>(d_conv2.size()), d_conv2.data());

    std::vector<double> d_conv1(cache.conv1_post.size(), 0.0);
    nn::conv2d_s2_backward(cache.conv1_post.data(), d.conv1, g2, g2, p.w("conv2").ptr(), d.conv2,
                           d_conv2.data(), d_conv1.data(), grads.at("conv2.w").ptr(),
                           grads.at("conv2.b").ptr());
    nn::relu_backward(cache.conv1_pre.data(), static_cast<int>(d_conv1.size()), d_conv1.data());

    nn::conv2d_s2_backward(input, p.input_channels(), g, g, p.w("conv1").ptr(), d.conv1,
                           d_conv1.data(), nullptr, grads.at("conv1.w").ptr(),
                           grads.at("conv1.b").ptr());

    // speed encoder
    std::vector<double> d_spd1(d.scalar_hidden, 0.0);
    dense_backward("speed_fc2", cache.spd1_post.data(), d.scalar_hidden, cache.spd2_pre, d_spd2, f,
                   d_spd1.data());
    nn::relu_backward(cache.spd1_pre.data(), d.scalar_hidden, d_spd1.data());
    nn::fc_backward(&cache.speed_in, 1, p.w("speed_fc1").ptr(), d.scalar_hidden, d_spd1.data(),
                    nullptr, grads.at("speed_fc1.w").ptr(), grads.at("speed_fc1.b").ptr());

    if (p.has_angle_encoder()) {
        std::vector<double> d_ang1(d.scalar_hidden, 0.0);
        dense_backward("angle_fc2", cache.ang1_post.data(), d.scalar_hidden, cache.ang2_pre,
                       d_ang2, f, d_ang1.data());
        nn::relu_backward(cache.ang1_pre.data(), d.scalar_hidden, d_ang1.data());
        nn::fc_backward(&cache.angle_in, 1, p.w("angle_fc1").ptr(), d.scalar_hidden, d_ang1.data(),
                        nullptr, grads.at("angle_fc1.w").ptr(), grads.at("angle_fc1.b").ptr());
    }
}

// ---------------------------------------------------------------------------
// Checkpoint file, magic "SGCKPT1", version 1. Header, named layer table,
// raw little-endian double arrays. Layout documented in docs/formats.md.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const ModelParameters& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw RunError("cannot write " + path);
    os.write("SGCKPT1", 7);
    io::write_le<std::uint8_t>(os, 1);  // version
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.arch));
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.mode));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.k));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.grid));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.conv1));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.conv2));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.conv3));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.image_feature));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.scalar_hidden));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.fusion_hidden));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.dims.head_hidden));
    io::write_le<double>(os, p.dims.speed_norm);
    io::write_le<std::uint64_t>(os, p.init_seed);

    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensors.size()));
    for (const auto& [name, t] : p.tensors) {
        io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) io::write_le<std::int64_t>(os, d);
        io::write_bytes(os, t.data.data(), t.data.size() * sizeof(double));
    }
    if (!os) throw RunError("short write to " + path);
}

inline ModelParameters load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char magic[7];
    is.read(magic, 7);
    if (!is || std::string(magic, 7) != "SGCKPT1")
        throw DataError(path + " is not a SGCKPT1 checkpoint");
    if (io::read_le<std::uint8_t>(is) != 1) throw DataError("unsupported checkpoint version");

    const auto arch = static_cast<ArchTag>(io::read_le<std::uint8_t>(is));
    const auto mode = static_cast<ChannelMode>(io::read_le<std::uint8_t>(is));
    ModelDims dims;
    dims.k = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.grid = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.conv1 = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.conv2 = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.conv3 = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.image_feature = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.scalar_hidden = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.fusion_hidden = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.head_hidden = static_cast<int>(io::read_le<std::uint32_t>(is));
    dims.speed_norm = io::read_le<double>(is);
    const auto init_seed = io::read_le<std::uint64_t>(is);

    ModelParameters p = build_model(arch, mode, dims, init_seed);
    const auto n_tensors = io::read_le<std::uint32_t>(is);
    if (n_tensors != p.tensors.size()) throw DataError("checkpoint layer table mismatch");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = io::read_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        io::read_bytes(is, name.data(), name_len);
        auto it = p.tensors.find(name);
        if (it == p.tensors.end()) throw DataError("unexpected checkpoint tensor " + name);
        const auto ndim = io::read_le<std::uint8_t>(is);
        std::vector<std::int64_t> shape(ndim);
        for (auto& d : shape) d = io::read_le<std::int64_t>(is);
        if (shape != it->second.shape) throw DataError("checkpoint shape mismatch for " + name);
        io::read_bytes(is, it->second.data.data(), it->second.data.size() * sizeof(double));
    }
    return p;
}

}  // namespace sgdrive
