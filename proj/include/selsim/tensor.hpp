#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace selsim {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

/// Dense n-dimensional array of doubles, row-major. The unit of activations,
/// gradients and weights everywhere in the simulator.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " +
                                        std::to_string(data.size()));
        for (int64_t d : shape)
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        for (int64_t d : s)
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in " + shape_str(s));
        size_t n = static_cast<size_t>(numel(s));
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    /// Construction from external input: rejects NaN/Inf.
    static Tensor from_external(Shape s, std::vector<double> d) {
        for (double v : d)
            if (!std::isfinite(v))
                throw std::invalid_argument("Tensor: non-finite value in external input");
        return Tensor(std::move(s), std::move(d));
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor& operator+=(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Tensor& operator*=(double k) {
        for (auto& v : data) v *= k;
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }
};

inline bool bits_allowed(int bits) {
    return bits == 32 || bits == 16 || bits == 8 || bits == 4 || bits == 2 || bits == 1;
}

/// Wire size of a dense payload: ceil(prod(shape) * bitwidth / 8).
inline int64_t bytes_of(const Shape& shape, int bits) {
    if (!bits_allowed(bits))
        throw std::invalid_argument("bytes_of: unsupported bitwidth " + std::to_string(bits));
    int64_t n = numel(shape);
    return (n * bits + 7) / 8;
}

/// Wire size of a top-k sparse payload: 4-byte index + 4-byte value per entry.
inline int64_t bytes_of_sparse(int64_t kept) { return kept * 8; }

/// Elementwise weighted mean in ascending order. weights need not be
/// normalized. A single contribution is returned unchanged so degenerate
/// aggregations stay bit-exact.
inline Tensor weighted_mean(const std::vector<const Tensor*>& xs,
                            const std::vector<double>& weights) {
    if (xs.empty()) throw std::invalid_argument("weighted_mean: empty input");
    if (xs.size() != weights.size())
        throw std::invalid_argument("weighted_mean: weight count mismatch");
    if (xs.size() == 1) return *xs[0];
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw std::invalid_argument("weighted_mean: non-positive total weight");
    Tensor acc = Tensor::zeros(xs[0]->shape);
    for (size_t m = 0; m < xs.size(); ++m) {
        if (!xs[m]->same_shape(acc))
            throw std::invalid_argument("weighted_mean: shape mismatch at element " + std::to_string(m));
        double f = weights[m] / total;
        for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += f * xs[m]->data[i];
    }
    return acc;
}

}  // namespace selsim
