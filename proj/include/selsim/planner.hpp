#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/compression.hpp"
#include "selsim/latency.hpp"
#include "selsim/model.hpp"
#include "selsim/plan.hpp"
#include "selsim/topology.hpp"

namespace selsim {

/// Lock-step per-round latency of the user-edge-cloud chain running parallel
/// split training with cuts (l1, l2): clients hold [0,l1), the edge [l1,l2),
/// the cloud [l2,L). Client links draw on the shared pool (equal split); the
/// edge-cloud backhaul serializes the M client payloads. Labels travel to
/// whichever node computes the loss. Degenerate cuts fold naturally: l2 = L
/// is user-edge, l1 = l2 is user-cloud with the edge acting as relay.
inline double hierarchical_round_latency(const ModelProfile& profile, int64_t l1, int64_t l2,
                                         const Topology& topo, const NodeNames& names,
                                         const std::string& edge_id, const std::string& cloud_id,
                                         const std::vector<ClientLoad>& loads,
                                         const CompressionSpec& comp = {}) {
    const size_t M = loads.size();
    const int64_t L = profile.L();
    if (!(0 <= l1 && l1 <= l2 && l2 <= L))
        throw std::invalid_argument("hierarchical: need 0 <= l1 <= l2 <= L");
    const double F_edge = topo.node(edge_id).compute_rate;
    const double F_cloud = topo.node(cloud_id).compute_rate;
    const bool cloud_used = l2 < L;
    const bool edge_computes = l1 < l2;
    // loss lives on the deepest node with layers
    const bool loss_on_client = l1 == L;

    double pool_each = topo.total_bandwidth_hz > 0
                           ? topo.total_bandwidth_hz / static_cast<double>(M) *
                                 topo.spectral_efficiency
                           : 0.0;
    auto client_rate = [&](size_t m, bool uplink) {
        if (pool_each > 0) return pool_each;
        return uplink ? topo.link_rate(names.clients[m], edge_id)
                      : topo.link_rate(edge_id, names.clients[m]);
    };

    int64_t steps = 0;
    for (const auto& ld : loads) steps = std::max(steps, ld.steps());
    double total = 0.0;
    for (int64_t s = 0; s < steps; ++s) {
        double p_up = 0, p_edge_fwd = 0, p_cloud = 0, p_edge_bwd = 0, p_down = 0;
        double backhaul_up = 0, backhaul_down = 0;
        for (size_t m = 0; m < M; ++m) {
            int64_t b = loads[m].batch_at(s);
            if (b == 0) continue;
            double f = topo.node(names.clients[m]).compute_rate;
            double fwd_c = phase_latency_compute(profile.fwd_cycles(0, l1) * b, f);
            double bwd_c = l1 > 0 ? phase_latency_compute(profile.bwd_cycles(0, l1) * b, f) : 0.0;
            if (l1 < L) {
                int64_t up_bytes = cut_payload_bytes(profile, l1, b, comp) +
                                   (loss_on_client ? 0 : bytes_of({b}, 32));
                fwd_c += phase_latency_transfer(up_bytes, client_rate(m, true));
                int64_t down_bytes = l1 > 0 ? cut_payload_bytes(profile, l1, b, comp) : 0;
                bwd_c += phase_latency_transfer(down_bytes, client_rate(m, false));
            }
            p_up = std::max(p_up, fwd_c);
            p_down = std::max(p_down, bwd_c);
            if (edge_computes) {
                // equal compute shares across the M clients
                p_edge_fwd = std::max(p_edge_fwd, phase_latency_compute(
                                                      profile.fwd_cycles(l1, l2) * b * double(M),
                                                      F_edge));
                p_edge_bwd = std::max(p_edge_bwd, phase_latency_compute(
                                                      profile.bwd_cycles(l1, l2) * b * double(M),
                                                      F_edge));
            }
            if (cloud_used) {
                int64_t up2 = cut_payload_bytes(profile, l2, b, comp) + bytes_of({b}, 32);
                backhaul_up += phase_latency_transfer(up2, topo.link_rate(edge_id, cloud_id));
                int64_t down2 = cut_payload_bytes(profile, l2, b, comp);
                backhaul_down += phase_latency_transfer(down2, topo.link_rate(cloud_id, edge_id));
                p_cloud = std::max(
                    p_cloud, phase_latency_compute((profile.fwd_cycles(l2, L) +
                                                    profile.bwd_cycles(l2, L)) *
                                                       b * double(M),
                                                   F_cloud));
            }
        }
        total += p_up + p_edge_fwd + backhaul_up + p_cloud + backhaul_down + p_edge_bwd + p_down;
    }
    return total;
}

struct HierarchicalPlan {
    int64_t cut1 = 0;
    int64_t cut2 = 0;
    double round_seconds = 0.0;
    int64_t user_edge_cut = 0;
    double user_edge_seconds = 0.0;
    int64_t user_cloud_cut = 0;
    double user_cloud_seconds = 0.0;
    SplitPlan plan;
};

/// Enumerates every (l1, l2) pair, returns the argmin plus the best
/// degenerate two-tier plans for comparison. Ties prefer smaller (l1, l2).
inline HierarchicalPlan plan_hierarchical(const ModelProfile& profile, const Topology& topo,
                                          const NodeNames& names, const std::string& edge_id,
                                          const std::string& cloud_id,
                                          const std::vector<ClientLoad>& loads,
                                          const CompressionSpec& comp = {}) {
    const int64_t L = profile.L();
    HierarchicalPlan best;
    double best_cost = std::numeric_limits<double>::infinity();
    double best_edge = std::numeric_limits<double>::infinity();
    double best_cloud = std::numeric_limits<double>::infinity();
    for (int64_t l1 = 0; l1 <= L; ++l1)
        for (int64_t l2 = l1; l2 <= L; ++l2) {
            double t = hierarchical_round_latency(profile, l1, l2, topo, names, edge_id, cloud_id,
                                                  loads, comp);
            if (t < best_cost) {
                best_cost = t;
                best.cut1 = l1;
                best.cut2 = l2;
                best.round_seconds = t;
            }
            if (l2 == L && t < best_edge) {
                best_edge = t;
                best.user_edge_cut = l1;
                best.user_edge_seconds = t;
            }
            if (l1 == l2 && t < best_cloud) {
                best_cloud = t;
                best.user_cloud_cut = l1;
                best.user_cloud_seconds = t;
            }
        }
    best.plan.segments.clear();
    if (best.cut1 > 0) best.plan.segments.push_back({names.clients.front(), 0, best.cut1});
    if (best.cut2 > best.cut1) best.plan.segments.push_back({edge_id, best.cut1, best.cut2});
    if (best.cut2 < L) best.plan.segments.push_back({cloud_id, best.cut2, L});
    return best;
}

struct MultihopPlan {
    SplitPlan plan;
    std::vector<std::string> path;
    double cost_seconds = 0.0;
};

/// Joint model splitting and data routing over a mesh. Dynamic program over
/// states (node, layers completed): every visited node computes at least one
/// layer (the source may ship its raw data), transfers pay for the forward
/// activation and the mirrored backward gradient, and each hosted segment
/// must fit the node's memory. Ties break toward the lexicographically
/// smallest node path.
inline MultihopPlan route_multihop(const ModelProfile& profile, const Topology& topo,
                                   const std::string& source,
                                   const std::vector<std::string>& destinations, int64_t batch,
                                   const CompressionSpec& comp = {}) {
    const int64_t L = profile.L();
    if (batch < 1) throw std::invalid_argument("route_multihop: batch must be >= 1");
    topo.node(source);
    for (const auto& d : destinations) topo.node(d);

    std::vector<std::string> node_ids;
    for (const auto& n : topo.nodes) node_ids.push_back(n.id);
    std::sort(node_ids.begin(), node_ids.end());

    struct State {
        double cost = std::numeric_limits<double>::infinity();
        std::vector<std::string> path;
        std::vector<SplitPlan::Segment> segments;
    };
    auto state_index = [&](const std::string& id) {
        return static_cast<size_t>(std::lower_bound(node_ids.begin(), node_ids.end(), id) -
                                   node_ids.begin());
    };
    std::vector<std::vector<State>> dp(node_ids.size(), std::vector<State>(size_t(L + 1)));

    auto segment_fits = [&](const std::string& id, int64_t a, int64_t b, std::string* why) {
        const NodeSpec& n = topo.node(id);
        int64_t demand = node_memory_demand(profile, a, b, batch);
        if (demand <= n.memory_bytes) return true;
        if (why)
            *why = "segment [" + std::to_string(a) + "," + std::to_string(b) + ") on '" + id +
                   "' needs " + std::to_string(demand) + " bytes, memory is " +
                   std::to_string(n.memory_bytes);
        return false;
    };
    auto compute_cost = [&](const std::string& id, int64_t a, int64_t b) {
        return phase_latency_compute(
            (profile.fwd_cycles(a, b) + profile.bwd_cycles(a, b)) * double(batch),
            topo.node(id).compute_rate);
    };
    auto transfer_cost = [&](const std::string& u, const std::string& v, int64_t cut) {
        const LinkSpec* fwd = topo.find_link(u, v);
        const LinkSpec* bwd = topo.find_link(v, u);
        if (!fwd || !bwd) return std::numeric_limits<double>::infinity();
        // forward hop carries the activation plus the label sidecar (labels
        // end up wherever the loss is computed); the gradient mirrors the
        // activation size on the reverse link, except at cut 0 where the
        // sender holds no layers and nothing flows back
        int64_t act = cut_payload_bytes(profile, cut, batch, comp);
        int64_t fwd_bytes = act + bytes_of({batch}, 32);
        double t = phase_latency_transfer(fwd_bytes, fwd->rate);
        if (cut > 0) t += phase_latency_transfer(act, bwd->rate);
        return t;
    };

    std::string tightest;
    // source base states: the source computes [0, l), possibly nothing
    for (int64_t l = 0; l <= L; ++l) {
        std::string why;
        if (l > 0 && !segment_fits(source, 0, l, &why)) {
            if (tightest.empty()) tightest = why;
            continue;
        }
        State& s = dp[state_index(source)][size_t(l)];
        s.cost = l > 0 ? compute_cost(source, 0, l) : 0.0;
        s.path = {source};
        if (l > 0) s.segments = {{source, 0, l}};
    }

    for (int64_t l = 1; l <= L; ++l) {
        for (const auto& v : node_ids) {
            State& target = dp[state_index(v)][size_t(l)];
            for (int64_t lp = 0; lp < l; ++lp) {
                for (const auto& u : node_ids) {
                    if (u == v) continue;
                    const State& from = dp[state_index(u)][size_t(lp)];
                    if (!std::isfinite(from.cost)) continue;
                    std::string why;
                    if (!segment_fits(v, lp, l, &why)) {
                        tightest = why;
                        continue;
                    }
                    double t = transfer_cost(u, v, lp);
                    if (!std::isfinite(t)) continue;
                    double cost = from.cost + t + compute_cost(v, lp, l);
                    std::vector<std::string> path = from.path;
                    path.push_back(v);
                    if (cost < target.cost - 1e-15 ||
                        (std::fabs(cost - target.cost) <= 1e-15 && path < target.path)) {
                        target.cost = cost;
                        target.path = std::move(path);
                        target.segments = from.segments;
                        target.segments.push_back({v, lp, l});
                    }
                }
            }
        }
    }

    const State* best = nullptr;
    for (const auto& d : destinations) {
        const State& s = dp[state_index(d)][size_t(L)];
        if (!std::isfinite(s.cost)) continue;
        if (!best || s.cost < best->cost - 1e-15 ||
            (std::fabs(s.cost - best->cost) <= 1e-15 && s.path < best->path))
            best = &s;
    }
    if (!best)
        throw std::invalid_argument(
            "route_multihop: no feasible assignment" +
            (tightest.empty() ? std::string(" (graph connectivity)") : "; tightest: " + tightest));
    MultihopPlan out;
    out.plan.segments = best->segments;
    out.path = best->path;
    out.cost_seconds = best->cost;
    return out;
}

}  // namespace selsim
