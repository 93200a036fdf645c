#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "selsim/rng.hpp"

namespace selsim {

inline int64_t batches_per_epoch(int64_t samples, int64_t batch_size) {
    return (samples + batch_size - 1) / batch_size;
}

/// Minibatch schedule for one client and one epoch: a seeded permutation of
/// the shard cut into batches (the last one may be short). The stream depends
/// only on (seed, client, epoch), never on the protocol, so every engine sees
/// the same batch order.
inline std::vector<std::vector<size_t>> batch_schedule(uint64_t seed, size_t client,
                                                       int64_t epoch, int64_t samples,
                                                       int64_t batch_size) {
    Rng rng(derive_seed(seed, "batch", client, static_cast<uint64_t>(epoch)));
    auto perm = rng.permutation(static_cast<size_t>(samples));
    std::vector<std::vector<size_t>> batches;
    for (int64_t start = 0; start < samples; start += batch_size) {
        int64_t end = std::min(samples, start + batch_size);
        batches.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return batches;
}

/// EPSL aggregated group for one round: ceil(phi*M) clients picked by seeded
/// shuffle, returned in ascending order (the canonical processing order).
inline std::vector<size_t> epsl_group(uint64_t seed, int64_t round, size_t clients, double phi) {
    size_t g = static_cast<size_t>(std::ceil(phi * static_cast<double>(clients)));
    g = std::min(g, clients);
    if (g == 0) return {};
    Rng rng(derive_seed(seed, "epsl", static_cast<uint64_t>(round)));
    auto perm = rng.permutation(clients);
    std::vector<size_t> group(perm.begin(), perm.begin() + g);
    std::sort(group.begin(), group.end());
    return group;
}

/// Vanilla SL visit order. The base order is fixed by the seed; each round is
/// rotated so the previous round's last client opens the next one, keeping
/// the handoff count at exactly M-1 relays per round.
inline std::vector<size_t> vanilla_visit_order(uint64_t seed, int64_t round, size_t clients) {
    Rng rng(derive_seed(seed, "visit"));
    auto base = rng.permutation(clients);
    size_t offset = (static_cast<size_t>(round) * (clients - 1)) % clients;
    std::vector<size_t> order(clients);
    for (size_t i = 0; i < clients; ++i) order[i] = base[(offset + i) % clients];
    return order;
}

}  // namespace selsim
