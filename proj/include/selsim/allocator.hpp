#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/latency.hpp"
#include "selsim/model.hpp"
#include "selsim/topology.hpp"

namespace selsim {

/// Per-client per-round workload at a given cut: fixed local compute (split
/// into its forward and backward phases) plus the three allocatable demands
/// (uplink bits, server cycles, downlink bits).
struct ClientWorkload {
    double fwd_seconds = 0.0;  // client-side forward at its own compute rate
    double bwd_seconds = 0.0;  // client-side backward
    double uplink_bits = 0.0;
    double server_cycles = 0.0;
    double downlink_bits = 0.0;
};

inline std::vector<ClientWorkload> split_workloads(const ModelProfile& profile, int64_t cut,
                                                   const Topology& topo, const NodeNames& names,
                                                   const std::vector<ClientLoad>& loads,
                                                   const CompressionSpec& comp = {}) {
    std::vector<ClientWorkload> ws;
    const int64_t L = profile.L();
    for (size_t m = 0; m < loads.size(); ++m) {
        ClientWorkload w;
        double f = topo.node(names.clients[m]).compute_rate;
        double steps = static_cast<double>(loads[m].steps());
        double b = static_cast<double>(loads[m].batch_size);
        w.fwd_seconds = steps * profile.fwd_cycles(0, cut) * b / f;
        w.bwd_seconds = steps * profile.bwd_cycles(0, cut) * b / f;
        int64_t up = cut_payload_bytes(profile, cut, loads[m].batch_size, comp) +
                     bytes_of({loads[m].batch_size}, 32);
        int64_t down = cut > 0 ? cut_payload_bytes(profile, cut, loads[m].batch_size, comp) : 0;
        w.uplink_bits = steps * 8.0 * static_cast<double>(up);
        w.downlink_bits = steps * 8.0 * static_cast<double>(down);
        w.server_cycles = steps * (profile.fwd_cycles(cut, L) + profile.bwd_cycles(cut, L)) * b;
        ws.push_back(w);
    }
    return ws;
}

struct MinmaxResult {
    Allocation allocation;
    double round_seconds = 0.0;
};

namespace allocdetail {

/// Minimize max_m(fixed_m + demand_m / (x_m * unit)) subject to sum x <= pool
/// by bisection on the phase target; the minimal per-client share at target t
/// is closed-form demand / ((t - fixed) * unit).
struct PhaseSolve {
    std::vector<double> shares;
    double target = 0.0;
};

inline PhaseSolve minmax_phase(const std::vector<double>& fixed, const std::vector<double>& demand,
                               double pool, double unit, const char* what) {
    const size_t M = fixed.size();
    PhaseSolve out;
    out.shares.assign(M, 0.0);
    bool any_demand = false;
    for (double d : demand) any_demand |= d > 0.0;
    if (!any_demand) {
        out.target = *std::max_element(fixed.begin(), fixed.end());
        return out;
    }
    if (pool <= 0.0 || unit <= 0.0) {
        size_t worst = 0;
        for (size_t m = 1; m < M; ++m)
            if (demand[m] > demand[worst]) worst = m;
        throw std::invalid_argument(std::string("allocate_minmax: no ") + what +
                                    " pool but client " + std::to_string(worst) +
                                    " needs it (bottleneck)");
    }
    auto required = [&](double t, size_t m) {
        if (demand[m] <= 0.0) return 0.0;
        double slack = t - fixed[m];
        return demand[m] / (slack * unit);
    };
    auto feasible = [&](double t) {
        double total = 0.0;
        for (size_t m = 0; m < M; ++m) {
            if (t <= fixed[m] && demand[m] > 0.0) return false;
            total += required(t, m);
        }
        return total <= pool;
    };
    double lo = 0.0;
    for (size_t m = 0; m < M; ++m) lo = std::max(lo, fixed[m]);
    // upper bound: serve everyone sequentially with the full pool
    double hi = lo;
    for (size_t m = 0; m < M; ++m) hi += demand[m] / (pool * unit) + 1e-12;
    hi = std::max(hi, lo * (1 + 1e-6) + 1e-12);
    while (!feasible(hi)) hi *= 2;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (feasible(mid))
            hi = mid;
        else
            lo = mid;
        if (hi - lo <= 1e-9 * hi) break;
    }
    out.target = hi;
    for (size_t m = 0; m < M; ++m) out.shares[m] = required(hi, m);
    return out;
}

}  // namespace allocdetail

/// Min-max allocation for the parallel-split round. The three allocatable
/// resources serve disjoint lock-step phases, so each phase's straggler time
/// is minimized independently: bandwidth phases by bisection on the phase
/// target (per-client minimal Hz is closed-form), the server phase by shares
/// proportional to per-client server work. Returns the allocation and the
/// minimized round time.
inline MinmaxResult allocate_minmax(const std::vector<ClientWorkload>& work, const Topology& topo,
                                    double server_rate) {
    const size_t M = work.size();
    if (M == 0) throw std::invalid_argument("allocate_minmax: no clients");
    double pool = topo.total_bandwidth_hz;
    double se = topo.spectral_efficiency;

    std::vector<double> fwd_fixed(M), bwd_fixed(M), up_bits(M), down_bits(M);
    for (size_t m = 0; m < M; ++m) {
        fwd_fixed[m] = work[m].fwd_seconds;
        bwd_fixed[m] = work[m].bwd_seconds;
        up_bits[m] = work[m].uplink_bits;
        down_bits[m] = work[m].downlink_bits;
    }
    auto up = allocdetail::minmax_phase(fwd_fixed, up_bits, pool, se, "uplink");
    auto down = allocdetail::minmax_phase(bwd_fixed, down_bits, pool, se, "downlink");

    // server phase: time = cycles_m / (share_m * F); max is minimized by
    // shares proportional to cycles, giving sum(cycles)/F for every client
    double total_cycles = 0.0;
    for (const auto& w : work) total_cycles += w.server_cycles;
    std::vector<double> shares(M, 0.0);
    double server_time = 0.0;
    if (total_cycles > 0.0) {
        if (server_rate <= 0.0)
            throw std::invalid_argument("allocate_minmax: no server compute pool (bottleneck)");
        for (size_t m = 0; m < M; ++m) shares[m] = work[m].server_cycles / total_cycles;
        server_time = total_cycles / server_rate;
    }

    MinmaxResult res;
    res.allocation.uplink_hz = up.shares;
    res.allocation.downlink_hz = down.shares;
    res.allocation.server_share = shares;
    res.round_seconds = up.target + server_time + down.target;
    return res;
}

/// Enumerates every cut, allocates per cut, returns the argmin round latency
/// (ties to the smaller cut).
inline std::pair<int64_t, MinmaxResult> select_split_layer(const ModelProfile& profile,
                                                           const Topology& topo,
                                                           const NodeNames& names,
                                                           const std::vector<ClientLoad>& loads,
                                                           double server_rate,
                                                           const CompressionSpec& comp = {}) {
    int64_t best_cut = -1;
    MinmaxResult best;
    std::string last_error;
    for (int64_t cut = 0; cut <= profile.L(); ++cut) {
        try {
            auto work = split_workloads(profile, cut, topo, names, loads, comp);
            MinmaxResult r = allocate_minmax(work, topo, server_rate);
            if (best_cut < 0 || r.round_seconds < best.round_seconds) {
                best_cut = cut;
                best = r;
            }
        } catch (const std::invalid_argument& e) {
            last_error = e.what();
        }
    }
    if (best_cut < 0)
        throw std::invalid_argument("select_split_layer: no feasible cut (" + last_error + ")");
    return {best_cut, best};
}

}  // namespace selsim
