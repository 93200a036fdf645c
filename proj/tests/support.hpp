#pragma once

// Shared test helpers: finite-difference oracles and small builders.

#include <cmath>
#include <functional>
#include <vector>

#include "selsim/dataset.hpp"
#include "selsim/model.hpp"
#include "selsim/rng.hpp"
#include "selsim/segment.hpp"
#include "selsim/tensor.hpp"

namespace seltest {

using namespace selsim;

inline double rel_err(double a, double b) {
    double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
    return std::fabs(a - b) / scale;
}

// Scalar objective for gradient checks: J = sum(c .* forward(x)), so the
// analytic gradient seed is just c.
struct FdProbe {
    ModelProfile profile;
    SegmentState seg;
    Tensor input;
    Tensor c;

    double objective() const {
        auto seg_copy = seg;
        auto [out, cache] = forward_segment(profile, seg_copy, input);
        (void)cache;
        double j = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) j += c.data[i] * out.data[i];
        return j;
    }

    double objective_with(const SegmentState& s, const Tensor& x) const {
        auto [out, cache] = forward_segment(profile, s, x);
        (void)cache;
        double j = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) j += c.data[i] * out.data[i];
        return j;
    }
};

// Central finite differences over every parameter and input element.
// Returns the max relative error against the analytic gradients.
inline double fd_max_rel_err(FdProbe& probe, double h = 1e-6) {
    auto [out, cache] = forward_segment(probe.profile, probe.seg, probe.input);
    (void)out;
    auto [gin, grads] = backward_segment(probe.profile, probe.seg, cache, probe.c);
    double worst = 0.0;
    for (size_t li = 0; li < probe.seg.params.size(); ++li)
        for (size_t pi = 0; pi < probe.seg.params[li].size(); ++pi)
            for (size_t i = 0; i < probe.seg.params[li][pi].data.size(); ++i) {
                SegmentState s = probe.seg;
                s.params[li][pi].data[i] += h;
                double jp = probe.objective_with(s, probe.input);
                s.params[li][pi].data[i] -= 2 * h;
                double jm = probe.objective_with(s, probe.input);
                double fd = (jp - jm) / (2 * h);
                worst = std::max(worst, rel_err(fd, grads[li][pi].data[i]));
            }
    for (size_t i = 0; i < probe.input.data.size(); ++i) {
        Tensor x = probe.input;
        x.data[i] += h;
        double jp = probe.objective_with(probe.seg, x);
        x.data[i] -= 2 * h;
        double jm = probe.objective_with(probe.seg, x);
        double fd = (jp - jm) / (2 * h);
        worst = std::max(worst, rel_err(fd, gin.data[i]));
    }
    return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double kink_margin = 0.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) {
        do {
            v = rng.normal();
        } while (kink_margin > 0.0 && std::fabs(v) < kink_margin);
    }
    return t;
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

inline bool segments_equal(const SegmentState& a, const SegmentState& b) {
    if (a.params.size() != b.params.size()) return false;
    for (size_t li = 0; li < a.params.size(); ++li) {
        if (a.params[li].size() != b.params[li].size()) return false;
        for (size_t pi = 0; pi < a.params[li].size(); ++pi)
            if (!tensors_equal(a.params[li][pi], b.params[li][pi])) return false;
    }
    return true;
}

}  // namespace seltest
