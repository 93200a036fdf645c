#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selsim/model.hpp"
#include "selsim/rng.hpp"
#include "selsim/tensor.hpp"

namespace selsim {

/// Weights for a contiguous layer range [first, last) of a ModelProfile.
/// Each layer owns a (possibly empty) list of parameter tensors:
/// dense -> {W (out,in), b (out)}, conv2d-small -> {K (oc,ic,3,3), b (oc)},
/// relu/flatten/softmax-head -> {}.
struct SegmentState {
    int64_t first = 0;
    int64_t last = 0;
    std::vector<std::vector<Tensor>> params;  // one entry per layer in range
    uint64_t rng_seed = 0;

    bool empty() const { return first == last; }
    int64_t layer_count() const { return last - first; }
};

using ParamGrads = std::vector<std::vector<Tensor>>;

/// Everything backward needs from the matching forward call.
struct ActivationCache {
    int64_t first = 0;
    int64_t last = 0;
    int64_t batch = 0;
    std::vector<Tensor> layer_inputs;   // input of each layer in range
    std::vector<Tensor> softmax_probs;  // output, only filled for softmax-head
    bool valid = false;

    int64_t cached_values() const {
        int64_t n = 0;
        for (const auto& t : layer_inputs) n += t.size();
        for (const auto& t : softmax_probs) n += t.size();
        return n;
    }
};

namespace detail {

inline Shape batched(int64_t batch, const Shape& per_sample) {
    Shape s;
    s.reserve(per_sample.size() + 1);
    s.push_back(batch);
    for (int64_t d : per_sample) s.push_back(d);
    return s;
}

inline void require_shape(const Tensor& t, int64_t batch, const Shape& per_sample,
                          int64_t layer_index, const char* what) {
    Shape want = batched(batch, per_sample);
    if (t.shape != want)
        throw std::invalid_argument(std::string(what) + " shape " + shape_str(t.shape) +
                                    " does not match layer " + std::to_string(layer_index) +
                                    " expectation " + shape_str(want));
}

}  // namespace detail

/// Per-layer init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn from a
/// stream named by the global layer index, so a model initialized in segments
/// carries exactly the same weights as the unsplit model.
inline SegmentState init_segment(const ModelProfile& profile, int64_t first, int64_t last,
                                 uint64_t master_seed) {
    if (first < 0 || last < first || last > profile.L())
        throw std::invalid_argument("init_segment: bad layer range [" + std::to_string(first) +
                                    ", " + std::to_string(last) + ")");
    SegmentState seg;
    seg.first = first;
    seg.last = last;
    seg.rng_seed = master_seed;
    for (int64_t li = first; li < last; ++li) {
        const LayerSpec& spec = profile.layers[static_cast<size_t>(li)];
        Rng rng(derive_seed(master_seed, "init", static_cast<uint64_t>(li)));
        std::vector<Tensor> ps;
        switch (spec.kind) {
            case LayerKind::Dense: {
                int64_t in = spec.in_shape[0], out = spec.out_shape[0];
                double bound = 1.0 / std::sqrt(static_cast<double>(in));
                Tensor w = Tensor::zeros({out, in});
                for (auto& v : w.data) v = rng.uniform(-bound, bound);
                Tensor b = Tensor::zeros({out});
                for (auto& v : b.data) v = rng.uniform(-bound, bound);
                ps.push_back(std::move(w));
                ps.push_back(std::move(b));
                break;
            }
            case LayerKind::Conv2dSmall: {
                int64_t ic = spec.in_shape[0], oc = spec.out_shape[0];
                double bound = 1.0 / std::sqrt(static_cast<double>(ic * 9));
                Tensor k = Tensor::zeros({oc, ic, 3, 3});
                for (auto& v : k.data) v = rng.uniform(-bound, bound);
                Tensor b = Tensor::zeros({oc});
                for (auto& v : b.data) v = rng.uniform(-bound, bound);
                ps.push_back(std::move(k));
                ps.push_back(std::move(b));
                break;
            }
            default:
                break;  // parameterless
        }
        seg.params.push_back(std::move(ps));
    }
    return seg;
}

namespace detail {

inline Tensor dense_forward(const LayerSpec& spec, const std::vector<Tensor>& ps, const Tensor& x) {
    const Tensor& w = ps[0];
    const Tensor& b = ps[1];
    int64_t batch = x.shape[0], in = spec.in_shape[0], out = spec.out_shape[0];
    Tensor y = Tensor::zeros({batch, out});
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < out; ++o) {
            double acc = b.at(o);
            for (int64_t i = 0; i < in; ++i) acc += w.at2(o, i) * x.at2(n, i);
            y.at2(n, o) = acc;
        }
    return y;
}

inline void dense_backward(const LayerSpec& spec, const std::vector<Tensor>& ps, const Tensor& x,
                           const Tensor& gout, Tensor& gin, std::vector<Tensor>& grads) {
    const Tensor& w = ps[0];
    int64_t batch = x.shape[0], in = spec.in_shape[0], out = spec.out_shape[0];
    Tensor gw = Tensor::zeros({out, in});
    Tensor gb = Tensor::zeros({out});
    gin = Tensor::zeros({batch, in});
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < out; ++o) {
            double g = gout.at2(n, o);
            gb.at(o) += g;
            for (int64_t i = 0; i < in; ++i) {
                gw.at2(o, i) += g * x.at2(n, i);
                gin.at2(n, i) += g * w.at2(o, i);
            }
        }
    grads.push_back(std::move(gw));
    grads.push_back(std::move(gb));
}

inline Tensor conv_forward(const LayerSpec& spec, const std::vector<Tensor>& ps, const Tensor& x) {
    const Tensor& k = ps[0];
    const Tensor& b = ps[1];
    int64_t batch = x.shape[0];
    int64_t ic = spec.in_shape[0], h = spec.in_shape[1], w = spec.in_shape[2];
    int64_t oc = spec.out_shape[0], oh = spec.out_shape[1], ow = spec.out_shape[2];
    Tensor y = Tensor::zeros({batch, oc, oh, ow});
    auto xi = [&](int64_t n, int64_t c, int64_t r, int64_t col) {
        return x.data[static_cast<size_t>(((n * ic + c) * h + r) * w + col)];
    };
    auto ki = [&](int64_t o, int64_t c, int64_t r, int64_t col) {
        return k.data[static_cast<size_t>(((o * ic + c) * 3 + r) * 3 + col)];
    };
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < oc; ++o)
            for (int64_t r = 0; r < oh; ++r)
                for (int64_t col = 0; col < ow; ++col) {
                    double acc = b.at(o);
                    for (int64_t c = 0; c < ic; ++c)
                        for (int64_t dr = 0; dr < 3; ++dr)
                            for (int64_t dc = 0; dc < 3; ++dc)
                                acc += ki(o, c, dr, dc) * xi(n, c, r + dr, col + dc);
                    y.data[static_cast<size_t>(((n * oc + o) * oh + r) * ow + col)] = acc;
                }
    return y;
}

inline void conv_backward(const LayerSpec& spec, const std::vector<Tensor>& ps, const Tensor& x,
                          const Tensor& gout, Tensor& gin, std::vector<Tensor>& grads) {
    const Tensor& k = ps[0];
    int64_t batch = x.shape[0];
    int64_t ic = spec.in_shape[0], h = spec.in_shape[1], w = spec.in_shape[2];
    int64_t oc = spec.out_shape[0], oh = spec.out_shape[1], ow = spec.out_shape[2];
    Tensor gk = Tensor::zeros({oc, ic, 3, 3});
    Tensor gb = Tensor::zeros({oc});
    gin = Tensor::zeros(x.shape);
    auto xi = [&](int64_t n, int64_t c, int64_t r, int64_t col) -> double {
        return x.data[static_cast<size_t>(((n * ic + c) * h + r) * w + col)];
    };
    auto gini = [&](int64_t n, int64_t c, int64_t r, int64_t col) -> double& {
        return gin.data[static_cast<size_t>(((n * ic + c) * h + r) * w + col)];
    };
    auto ki = [&](int64_t o, int64_t c, int64_t r, int64_t col) -> double {
        return k.data[static_cast<size_t>(((o * ic + c) * 3 + r) * 3 + col)];
    };
    auto gki = [&](int64_t o, int64_t c, int64_t r, int64_t col) -> double& {
        return gk.data[static_cast<size_t>(((o * ic + c) * 3 + r) * 3 + col)];
    };
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t o = 0; o < oc; ++o)
            for (int64_t r = 0; r < oh; ++r)
                for (int64_t col = 0; col < ow; ++col) {
                    double g = gout.data[static_cast<size_t>(((n * oc + o) * oh + r) * ow + col)];
                    gb.at(o) += g;
                    for (int64_t c = 0; c < ic; ++c)
                        for (int64_t dr = 0; dr < 3; ++dr)
                            for (int64_t dc = 0; dc < 3; ++dc) {
                                gki(o, c, dr, dc) += g * xi(n, c, r + dr, col + dc);
                                gini(n, c, r + dr, col + dc) += g * ki(o, c, dr, dc);
                            }
                }
    grads.push_back(std::move(gk));
    grads.push_back(std::move(gb));
}

inline Tensor softmax_forward(const Tensor& x) {
    int64_t batch = x.shape[0], k = x.shape[1];
    Tensor p = Tensor::zeros(x.shape);
    for (int64_t n = 0; n < batch; ++n) {
        double m = x.at2(n, 0);
        for (int64_t j = 1; j < k; ++j) m = std::max(m, x.at2(n, j));
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            double e = std::exp(x.at2(n, j) - m);
            p.at2(n, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < k; ++j) p.at2(n, j) /= sum;
    }
    return p;
}

}  // namespace detail

/// Runs layers [seg.first, seg.last) over a batched input. The returned cache
/// is consumed by backward_segment. Empty segments pass the input through.
inline std::pair<Tensor, ActivationCache> forward_segment(const ModelProfile& profile,
                                                          const SegmentState& seg,
                                                          const Tensor& input) {
    if (input.rank() < 1) throw std::invalid_argument("forward_segment: input needs a batch dim");
    int64_t batch = input.shape[0];
    ActivationCache cache;
    cache.first = seg.first;
    cache.last = seg.last;
    cache.batch = batch;
    cache.valid = true;
    Tensor x = input;
    if (!seg.empty())
        detail::require_shape(x, batch, profile.layers[static_cast<size_t>(seg.first)].in_shape,
                              seg.first, "input");
    for (int64_t li = seg.first; li < seg.last; ++li) {
        const LayerSpec& spec = profile.layers[static_cast<size_t>(li)];
        const auto& ps = seg.params[static_cast<size_t>(li - seg.first)];
        detail::require_shape(x, batch, spec.in_shape, li, "input");
        cache.layer_inputs.push_back(x);
        Tensor y;
        switch (spec.kind) {
            case LayerKind::Dense:
                y = detail::dense_forward(spec, ps, x);
                break;
            case LayerKind::Relu: {
                y = x;
                for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::Conv2dSmall:
                y = detail::conv_forward(spec, ps, x);
                break;
            case LayerKind::Flatten: {
                y = Tensor(detail::batched(batch, spec.out_shape), x.data);
                break;
            }
            case LayerKind::SoftmaxHead: {
                y = detail::softmax_forward(x);
                cache.softmax_probs.push_back(y);
                break;
            }
        }
        x = std::move(y);
    }
    return {std::move(x), std::move(cache)};
}

/// Exact softmax Jacobian: grad_in_i = p_i * (g_i - sum_j p_j g_j), rowwise.
inline Tensor softmax_head_backward(const Tensor& probs, const Tensor& grad) {
    int64_t batch = probs.shape[0], k = probs.shape[1];
    Tensor gin = Tensor::zeros(probs.shape);
    for (int64_t n = 0; n < batch; ++n) {
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += probs.at2(n, j) * grad.at2(n, j);
        for (int64_t j = 0; j < k; ++j)
            gin.at2(n, j) = probs.at2(n, j) * (grad.at2(n, j) - dot);
    }
    return gin;
}

/// Backward over the cached forward. Returns the gradient w.r.t. the segment
/// input plus per-layer parameter gradients (shapes mirror params).
inline std::pair<Tensor, ParamGrads> backward_segment(const ModelProfile& profile,
                                                      const SegmentState& seg,
                                                      const ActivationCache& cache,
                                                      const Tensor& grad_out) {
    if (!cache.valid) throw std::invalid_argument("backward_segment: stale or missing cache");
    if (cache.first != seg.first || cache.last != seg.last)
        throw std::invalid_argument("backward_segment: cache does not match segment range");
    ParamGrads grads(static_cast<size_t>(seg.layer_count()));
    Tensor g = grad_out;
    if (!seg.empty())
        detail::require_shape(g, cache.batch,
                              profile.layers[static_cast<size_t>(seg.last - 1)].out_shape,
                              seg.last - 1, "grad_out");
    size_t softmax_seen = cache.softmax_probs.size();
    for (int64_t li = seg.last - 1; li >= seg.first; --li) {
        const LayerSpec& spec = profile.layers[static_cast<size_t>(li)];
        size_t local = static_cast<size_t>(li - seg.first);
        const auto& ps = seg.params[local];
        const Tensor& x = cache.layer_inputs[local];
        Tensor gin;
        switch (spec.kind) {
            case LayerKind::Dense:
                detail::dense_backward(spec, ps, x, g, gin, grads[local]);
                break;
            case LayerKind::Relu: {
                gin = g;
                for (size_t i = 0; i < gin.data.size(); ++i)
                    if (x.data[i] <= 0.0) gin.data[i] = 0.0;
                break;
            }
            case LayerKind::Conv2dSmall:
                detail::conv_backward(spec, ps, x, g, gin, grads[local]);
                break;
            case LayerKind::Flatten:
                gin = Tensor(x.shape, g.data);
                break;
            case LayerKind::SoftmaxHead:
                gin = softmax_head_backward(cache.softmax_probs[--softmax_seen], g);
                break;
        }
        g = std::move(gin);
    }
    return {std::move(g), std::move(grads)};
}

/// Softmax cross-entropy on logits. Returns mean loss over the batch and the
/// gradient w.r.t. the logits; gradient rows sum to zero.
inline std::pair<double, Tensor> loss_grad(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw std::invalid_argument("loss_grad: logits must be (batch, classes)");
    int64_t batch = logits.shape[0], classes = logits.shape[1];
    if (batch != static_cast<int64_t>(labels.size()))
        throw std::invalid_argument("loss_grad: batch " + std::to_string(batch) +
                                    " != labels " + std::to_string(labels.size()));
    Tensor grad = Tensor::zeros(logits.shape);
    double loss = 0.0;
    for (int64_t n = 0; n < batch; ++n) {
        int y = labels[static_cast<size_t>(n)];
        if (y < 0 || y >= classes)
            throw std::invalid_argument("loss_grad: label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(classes) + ")");
        double m = logits.at2(n, 0);
        for (int64_t j = 1; j < classes; ++j) m = std::max(m, logits.at2(n, j));
        double sum = 0.0;
        for (int64_t j = 0; j < classes; ++j) sum += std::exp(logits.at2(n, j) - m);
        loss += std::log(sum) - (logits.at2(n, y) - m);
        for (int64_t j = 0; j < classes; ++j) {
            double p = std::exp(logits.at2(n, j) - m) / sum;
            grad.at2(n, j) = (p - (j == y ? 1.0 : 0.0)) / static_cast<double>(batch);
        }
    }
    return {loss / static_cast<double>(batch), std::move(grad)};
}

/// Cross-entropy against probabilities, for models whose last layer is
/// softmax-head. Backpropagating the returned gradient through that head
/// reproduces the fused softmax-CE gradient exactly.
inline std::pair<double, Tensor> loss_grad_on_probs(const Tensor& probs,
                                                    const std::vector<int>& labels) {
    if (probs.rank() != 2)
        throw std::invalid_argument("loss_grad_on_probs: probs must be (batch, classes)");
    int64_t batch = probs.shape[0], classes = probs.shape[1];
    if (batch != static_cast<int64_t>(labels.size()))
        throw std::invalid_argument("loss_grad_on_probs: batch/labels mismatch");
    Tensor grad = Tensor::zeros(probs.shape);
    double loss = 0.0;
    for (int64_t n = 0; n < batch; ++n) {
        int y = labels[static_cast<size_t>(n)];
        if (y < 0 || y >= classes)
            throw std::invalid_argument("loss_grad_on_probs: label out of range");
        double p = std::max(probs.at2(n, y), 1e-300);
        loss -= std::log(p);
        grad.at2(n, y) = -1.0 / (static_cast<double>(batch) * p);
    }
    return {loss / static_cast<double>(batch), std::move(grad)};
}

/// w' = w - lr * g, elementwise and in declaration order.
inline void sgd_step(SegmentState& seg, const ParamGrads& grads, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be > 0");
    if (grads.size() != seg.params.size())
        throw std::invalid_argument("sgd_step: gradient layer count mismatch");
    for (size_t li = 0; li < seg.params.size(); ++li) {
        if (grads[li].size() != seg.params[li].size())
            throw std::invalid_argument("sgd_step: gradient tensor count mismatch at layer " +
                                        std::to_string(li));
        for (size_t pi = 0; pi < seg.params[li].size(); ++pi) {
            Tensor& w = seg.params[li][pi];
            const Tensor& g = grads[li][pi];
            if (!w.same_shape(g))
                throw std::invalid_argument("sgd_step: shape mismatch at layer " +
                                            std::to_string(li));
            for (size_t i = 0; i < w.data.size(); ++i) w.data[i] -= lr * g.data[i];
        }
    }
}

}  // namespace selsim
