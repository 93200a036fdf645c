#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/rng.hpp"
#include "selsim/tensor.hpp"

namespace selsim {

/// A labeled sample set. xs is (n, ...feature shape), labels in [0, classes).
struct Dataset {
    Tensor xs;
    std::vector<int> labels;
    int classes = 0;

    int64_t size() const { return xs.shape.empty() ? 0 : xs.shape[0]; }

    Dataset subset(const std::vector<size_t>& idx) const {
        Shape per_sample(xs.shape.begin() + 1, xs.shape.end());
        int64_t row = numel(per_sample);
        Shape s = per_sample;
        s.insert(s.begin(), static_cast<int64_t>(idx.size()));
        Tensor out = Tensor::zeros(s);
        std::vector<int> lab(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(xs.data.begin() + static_cast<int64_t>(idx[i]) * row, row,
                        out.data.begin() + static_cast<int64_t>(i) * row);
            lab[i] = labels[idx[i]];
        }
        return {std::move(out), std::move(lab), classes};
    }
};

/// Isotropic Gaussian blobs: `classes` seeded centers in [-3,3]^dim, points
/// at center + noise * N(0, I). Center placement depends only on
/// (seed, "centers") so train and eval sets share geometry.
inline Dataset make_blobs(int64_t n, int classes, int64_t dim, double noise, uint64_t seed,
                          std::string_view split = "train") {
    if (n <= 0 || classes < 2 || dim <= 0) throw std::invalid_argument("make_blobs: bad sizes");
    Rng center_rng(derive_seed(seed, "centers"));
    std::vector<std::vector<double>> centers(static_cast<size_t>(classes));
    for (auto& c : centers) {
        c.resize(static_cast<size_t>(dim));
        for (auto& v : c) v = center_rng.uniform(-3.0, 3.0);
    }
    Rng rng(derive_seed(seed, split));
    Dataset d;
    d.classes = classes;
    d.xs = Tensor::zeros({n, dim});
    d.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int y = static_cast<int>(i % classes);
        d.labels[static_cast<size_t>(i)] = y;
        for (int64_t j = 0; j < dim; ++j)
            d.xs.at2(i, j) = centers[static_cast<size_t>(y)][static_cast<size_t>(j)] +
                             noise * rng.normal();
    }
    return d;
}

/// Two interleaving half circles, the classic 2-class toy set.
inline Dataset make_two_moons(int64_t n, double noise, uint64_t seed,
                              std::string_view split = "train") {
    if (n < 2) throw std::invalid_argument("make_two_moons: n must be >= 2");
    Rng rng(derive_seed(seed, split));
    Dataset d;
    d.classes = 2;
    d.xs = Tensor::zeros({n, 2});
    d.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int y = static_cast<int>(i % 2);
        double t = M_PI * rng.uniform();
        double x0, x1;
        if (y == 0) {
            x0 = std::cos(t);
            x1 = std::sin(t);
        } else {
            x0 = 1.0 - std::cos(t);
            x1 = 0.5 - std::sin(t);
        }
        d.xs.at2(i, 0) = x0 + noise * rng.normal();
        d.xs.at2(i, 1) = x1 + noise * rng.normal();
        d.labels[static_cast<size_t>(i)] = y;
    }
    return d;
}

/// IID split: seeded shuffle, round-robin deal so shard sizes differ by at
/// most one.
inline std::vector<std::vector<size_t>> partition_iid(int64_t n, int clients, uint64_t seed) {
    if (clients <= 0) throw std::invalid_argument("partition_iid: clients must be > 0");
    Rng rng(derive_seed(seed, "partition"));
    auto perm = rng.permutation(static_cast<size_t>(n));
    std::vector<std::vector<size_t>> shards(static_cast<size_t>(clients));
    for (size_t i = 0; i < perm.size(); ++i) shards[i % static_cast<size_t>(clients)].push_back(perm[i]);
    for (auto& s : shards) std::sort(s.begin(), s.end());
    return shards;
}

/// Dirichlet(beta) label-skew split. Per class, client proportions are drawn
/// from Dirichlet(beta); small beta gives one-hot-ish shards, large beta
/// approaches IID. Empty shards are topped up from the largest one so the
/// shard-non-empty invariant always holds.
inline std::vector<std::vector<size_t>> partition_dirichlet(const std::vector<int>& labels,
                                                            int classes, int clients,
                                                            double beta, uint64_t seed) {
    if (clients <= 0 || beta <= 0.0)
        throw std::invalid_argument("partition_dirichlet: bad clients/beta");
    Rng rng(derive_seed(seed, "partition"));
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(classes));
    for (size_t i = 0; i < labels.size(); ++i)
        by_class[static_cast<size_t>(labels[i])].push_back(i);
    std::vector<std::vector<size_t>> shards(static_cast<size_t>(clients));
    for (auto& members : by_class) {
        rng.shuffle(members);
        auto props = rng.dirichlet(beta, static_cast<size_t>(clients));
        // cumulative split points over this class's samples
        size_t start = 0;
        double acc = 0.0;
        for (int c = 0; c < clients; ++c) {
            acc += props[static_cast<size_t>(c)];
            size_t end = (c == clients - 1)
                             ? members.size()
                             : static_cast<size_t>(std::llround(acc * static_cast<double>(members.size())));
            end = std::min(std::max(end, start), members.size());
            for (size_t i = start; i < end; ++i) shards[static_cast<size_t>(c)].push_back(members[i]);
            start = end;
        }
    }
    for (size_t c = 0; c < shards.size(); ++c) {
        if (!shards[c].empty()) continue;
        size_t donor = 0;
        for (size_t d = 1; d < shards.size(); ++d)
            if (shards[d].size() > shards[donor].size()) donor = d;
        if (shards[donor].size() <= 1)
            throw std::invalid_argument("partition_dirichlet: not enough samples for " +
                                        std::to_string(clients) + " clients");
        shards[c].push_back(shards[donor].back());
        shards[donor].pop_back();
    }
    for (auto& s : shards) std::sort(s.begin(), s.end());
    return shards;
}

/// Normalized label histogram of a shard, the diversity signal for client
/// selection.
inline std::vector<double> label_histogram(const Dataset& d) {
    std::vector<double> h(static_cast<size_t>(d.classes), 0.0);
    for (int y : d.labels) h[static_cast<size_t>(y)] += 1.0;
    double n = static_cast<double>(d.labels.size());
    if (n > 0)
        for (auto& v : h) v /= n;
    return h;
}

}  // namespace selsim
