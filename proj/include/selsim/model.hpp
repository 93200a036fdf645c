#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/tensor.hpp"

namespace selsim {

enum class LayerKind { Dense, Relu, Conv2dSmall, Flatten, SoftmaxHead };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Conv2dSmall: return "conv2d-small";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::SoftmaxHead: return "softmax-head";
    }
    return "?";
}

inline LayerKind layer_kind_from(const std::string& s) {
    if (s == "dense") return LayerKind::Dense;
    if (s == "relu") return LayerKind::Relu;
    if (s == "conv2d-small") return LayerKind::Conv2dSmall;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "softmax-head") return LayerKind::SoftmaxHead;
    throw std::invalid_argument("unknown layer kind: " + s);
}

/// Per-layer size/compute profile. Shapes are per-sample (no batch dim).
/// Cycle costs are abstract metadata consumed by the network model only;
/// they default to param_count x cycles-per-MAC (2) and can be overridden.
struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    Shape in_shape;
    Shape out_shape;
    int64_t param_count = 0;
    double fwd_cycles_per_sample = 0.0;
    double bwd_cycles_per_sample = 0.0;
};

constexpr double kCyclesPerMac = 2.0;

inline LayerSpec make_dense(int64_t in, int64_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_shape = {in};
    s.out_shape = {out};
    s.param_count = in * out + out;
    s.fwd_cycles_per_sample = static_cast<double>(s.param_count) * kCyclesPerMac;
    s.bwd_cycles_per_sample = 2.0 * s.fwd_cycles_per_sample;
    return s;
}

inline LayerSpec make_relu(Shape shape) {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    s.in_shape = shape;
    s.out_shape = std::move(shape);
    return s;
}

/// Fixed 3x3 stride-1 valid convolution over (C, H, W) input.
inline LayerSpec make_conv2d_small(int64_t in_ch, int64_t out_ch, int64_t h, int64_t w) {
    if (h < 3 || w < 3) throw std::invalid_argument("conv2d-small: spatial dims must be >= 3");
    LayerSpec s;
    s.kind = LayerKind::Conv2dSmall;
    s.in_shape = {in_ch, h, w};
    s.out_shape = {out_ch, h - 2, w - 2};
    s.param_count = out_ch * in_ch * 9 + out_ch;
    s.fwd_cycles_per_sample = static_cast<double>(s.param_count) * kCyclesPerMac;
    s.bwd_cycles_per_sample = 2.0 * s.fwd_cycles_per_sample;
    return s;
}

inline LayerSpec make_flatten(Shape in) {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    s.in_shape = in;
    s.out_shape = {numel(in)};
    return s;
}

inline LayerSpec make_softmax_head(int64_t classes) {
    LayerSpec s;
    s.kind = LayerKind::SoftmaxHead;
    s.in_shape = {classes};
    s.out_shape = {classes};
    return s;
}

/// Ordered layer stack. Cut points are indices 0..L; a cut at l puts layers
/// [0, l) on the lower node.
struct ModelProfile {
    std::vector<LayerSpec> layers;

    ModelProfile() = default;
    explicit ModelProfile(std::vector<LayerSpec> ls) : layers(std::move(ls)) { validate(); }

    int64_t L() const { return static_cast<int64_t>(layers.size()); }

    void validate() const {
        if (layers.size() < 2) throw std::invalid_argument("ModelProfile: needs at least 2 layers");
        for (size_t i = 0; i + 1 < layers.size(); ++i) {
            if (layers[i].out_shape != layers[i + 1].in_shape)
                throw std::invalid_argument(
                    "ModelProfile: layer " + std::to_string(i) + " out_shape " +
                    shape_str(layers[i].out_shape) + " != layer " + std::to_string(i + 1) +
                    " in_shape " + shape_str(layers[i + 1].in_shape));
        }
        for (size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if ((l.kind == LayerKind::Relu || l.kind == LayerKind::Flatten) && l.param_count != 0)
                throw std::invalid_argument("ModelProfile: layer " + std::to_string(i) +
                                            " must have param_count 0");
            if (l.fwd_cycles_per_sample < 0 || l.bwd_cycles_per_sample < 0)
                throw std::invalid_argument("ModelProfile: negative cycle cost at layer " +
                                            std::to_string(i));
        }
    }

    const Shape& input_shape() const { return layers.front().in_shape; }
    const Shape& output_shape() const { return layers.back().out_shape; }

    /// Per-sample activation shape at cut index l in 0..L (l=0 is the input).
    const Shape& activation_shape(int64_t cut) const {
        if (cut < 0 || cut > L())
            throw std::invalid_argument("activation_shape: cut " + std::to_string(cut) +
                                        " out of range 0.." + std::to_string(L()));
        return cut == 0 ? layers[0].in_shape : layers[static_cast<size_t>(cut - 1)].out_shape;
    }

    int64_t param_count(int64_t from, int64_t to) const {
        int64_t n = 0;
        for (int64_t i = from; i < to; ++i) n += layers[static_cast<size_t>(i)].param_count;
        return n;
    }
    int64_t total_params() const { return param_count(0, L()); }

    double fwd_cycles(int64_t from, int64_t to) const {
        double c = 0.0;
        for (int64_t i = from; i < to; ++i) c += layers[static_cast<size_t>(i)].fwd_cycles_per_sample;
        return c;
    }
    double bwd_cycles(int64_t from, int64_t to) const {
        double c = 0.0;
        for (int64_t i = from; i < to; ++i) c += layers[static_cast<size_t>(i)].bwd_cycles_per_sample;
        return c;
    }

    bool ends_with_softmax() const { return layers.back().kind == LayerKind::SoftmaxHead; }
};

/// dense(in->hidden) relu dense(hidden->classes) softmax: the 4-layer MLP
/// used throughout the tests.
inline ModelProfile mlp4_profile(int64_t in, int64_t hidden, int64_t classes) {
    return ModelProfile({make_dense(in, hidden), make_relu({hidden}),
                         make_dense(hidden, classes), make_softmax_head(classes)});
}

/// Wider then narrowing MLP; activation size strictly shrinks with depth,
/// which is the profile shape the hierarchical planner exploits.
inline ModelProfile shrinking_profile(int64_t in, int64_t classes) {
    return ModelProfile({make_dense(in, 48), make_relu({48}), make_dense(48, 24),
                         make_relu({24}), make_dense(24, 8), make_relu({8}),
                         make_dense(8, classes), make_softmax_head(classes)});
}

/// Cost profile shaped like a small CNN: activations shrink with depth while
/// per-layer compute stays heavy (deeper stages cost more, as channel counts
/// grow). This is the regime where a deep, narrow cut toward a fast upstream
/// node pays off.
inline ModelProfile convlike_profile(int64_t in, int64_t classes) {
    auto stage = [](LayerSpec s, double fwd_cycles) {
        s.fwd_cycles_per_sample = fwd_cycles;
        s.bwd_cycles_per_sample = 2.0 * fwd_cycles;
        return s;
    };
    return ModelProfile({stage(make_dense(in, 48), 200e3), make_relu({48}),
                         stage(make_dense(48, 24), 300e3), make_relu({24}),
                         stage(make_dense(24, 8), 400e3), make_relu({8}),
                         stage(make_dense(8, 8), 500e3), make_relu({8}),
                         stage(make_dense(8, classes), 600e3), make_softmax_head(classes)});
}

/// Small conv stack over (1, h, w) inputs.
inline ModelProfile cnn_small_profile(int64_t h, int64_t w, int64_t classes) {
    auto c1 = make_conv2d_small(1, 4, h, w);
    auto r1 = make_relu(c1.out_shape);
    auto c2 = make_conv2d_small(4, 2, h - 2, w - 2);
    auto f = make_flatten(c2.out_shape);
    auto d = make_dense(numel(c2.out_shape), classes);
    return ModelProfile({c1, r1, c2, f, d, make_softmax_head(classes)});
}

}  // namespace selsim
