#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/segment.hpp"
#include "selsim/tensor.hpp"

namespace selsim {

/// Knobs for cut-layer payload and weight compression. Defaults are exact
/// identity: protocols run bit-identically to uncompressed with them.
struct CompressionSpec {
    int activation_bits = 32;           // {32,16,8,4,2}
    double topk_ratio = 1.0;            // (0,1]
    std::map<std::string, int> weight_bits;  // node tier -> bits in {32,16,8}

    void validate() const {
        if (activation_bits != 32 && activation_bits != 16 && activation_bits != 8 &&
            activation_bits != 4 && activation_bits != 2)
            throw std::invalid_argument("compression: activation_bits must be one of 32,16,8,4,2");
        if (!(topk_ratio > 0.0 && topk_ratio <= 1.0))
            throw std::invalid_argument("compression: topk_ratio must be in (0,1]");
        for (const auto& [tier, bits] : weight_bits)
            if (bits != 32 && bits != 16 && bits != 8)
                throw std::invalid_argument("compression: weight_bits for '" + tier +
                                            "' must be one of 32,16,8");
    }

    bool identity_activations() const { return activation_bits == 32 && topk_ratio >= 1.0; }
    int weight_bits_for(const std::string& tier) const {
        auto it = weight_bits.find(tier);
        return it == weight_bits.end() ? 32 : it->second;
    }
};

struct QuantResult {
    Tensor tensor;
    int64_t wire_bytes = 0;
};

/// Uniform symmetric quantization over [-maxabs, +maxabs] with 2^bits - 1
/// levels (endpoints are levels), so per-element error <= step/2. bits=32 and
/// all-zero tensors pass through untouched. Wire bytes include the 8-byte
/// scale.
inline QuantResult quantize_dequantize(const Tensor& t, int bits) {
    if (bits != 32 && bits != 16 && bits != 8 && bits != 4 && bits != 2)
        throw std::invalid_argument("quantize_dequantize: bad bitwidth " + std::to_string(bits));
    if (bits == 32) return {t, bytes_of(t.shape, 32)};
    double maxabs = t.max_abs();
    if (maxabs == 0.0) return {t, bytes_of(t.shape, bits) + 8};
    int64_t half = (1LL << (bits - 1)) - 1;  // levels = 2*half + 1 = 2^bits - 1
    double step = maxabs / static_cast<double>(half);
    Tensor out = t;
    for (auto& v : out.data) {
        double q = std::nearbyint(v / step);
        q = std::clamp(q, -static_cast<double>(half), static_cast<double>(half));
        v = q * step;
    }
    return {std::move(out), bytes_of(t.shape, bits) + 8};
}

struct SparsePayload {
    std::vector<int64_t> indices;
    std::vector<double> values;
    Shape shape;
    int64_t wire_bytes = 0;

    Tensor reconstruct() const {
        Tensor out = Tensor::zeros(shape);
        for (size_t i = 0; i < indices.size(); ++i)
            out.data[static_cast<size_t>(indices[i])] = values[i];
        return out;
    }
};

/// Keeps the ceil(k*n) largest-magnitude entries, ties resolved toward the
/// lower index. Wire cost is 8 bytes per kept entry (4 index + 4 value).
inline SparsePayload topk_sparsify(const Tensor& t, double k) {
    if (!(k > 0.0 && k <= 1.0))
        throw std::invalid_argument("topk_sparsify: ratio must be in (0,1]");
    int64_t n = t.size();
    int64_t kept = static_cast<int64_t>(std::ceil(k * static_cast<double>(n)));
    kept = std::min(kept, n);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        double ma = std::fabs(t.data[static_cast<size_t>(a)]);
        double mb = std::fabs(t.data[static_cast<size_t>(b)]);
        if (ma != mb) return ma > mb;
        return a < b;
    });
    SparsePayload p;
    p.shape = t.shape;
    p.indices.assign(idx.begin(), idx.begin() + kept);
    std::sort(p.indices.begin(), p.indices.end());
    p.values.reserve(static_cast<size_t>(kept));
    for (int64_t i : p.indices) p.values.push_back(t.data[static_cast<size_t>(i)]);
    p.wire_bytes = bytes_of_sparse(kept);
    return p;
}

/// Snaps weights to the uniform grid step = maxabs / 2^(bits-1); training
/// continues on the snapped values (straight-through). bits >= 32 is a no-op.
inline void quantize_weights_step(SegmentState& seg, int bits) {
    if (bits >= 32) return;
    if (bits < 2) throw std::invalid_argument("quantize_weights_step: bad bitwidth");
    for (auto& layer : seg.params)
        for (auto& w : layer) {
            double maxabs = w.max_abs();
            if (maxabs == 0.0) continue;
            double step = maxabs / static_cast<double>(1LL << (bits - 1));
            for (auto& v : w.data) v = std::nearbyint(v / step) * step;
        }
}

/// Cut-payload transform used by every protocol on both directions of the
/// split: quantize, then sparsify. Returns the tensor the receiving side
/// actually sees plus the bytes that cross the wire.
inline QuantResult compress_payload(const Tensor& t, const CompressionSpec& spec) {
    if (spec.identity_activations()) return {t, bytes_of(t.shape, 32)};
    QuantResult q = quantize_dequantize(t, spec.activation_bits);
    if (spec.topk_ratio < 1.0) {
        SparsePayload sp = topk_sparsify(q.tensor, spec.topk_ratio);
        return {sp.reconstruct(), sp.wire_bytes};
    }
    return q;
}

/// Bytes a cut payload occupies on the wire under a compression spec; the
/// MessageTrace invariant (bytes == bytes_of(shape, declared bitwidth), or the
/// sparse rule when top-k is active).
inline int64_t payload_bytes(const Shape& shape, const CompressionSpec& spec) {
    if (spec.topk_ratio < 1.0) {
        int64_t n = numel(shape);
        int64_t kept = std::min<int64_t>(
            n, static_cast<int64_t>(std::ceil(spec.topk_ratio * static_cast<double>(n))));
        return bytes_of_sparse(kept);
    }
    return bytes_of(shape, spec.activation_bits);
}

}  // namespace selsim
