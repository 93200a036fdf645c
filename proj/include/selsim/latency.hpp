#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/compression.hpp"
#include "selsim/model.hpp"
#include "selsim/plan.hpp"
#include "selsim/protocol_config.hpp"
#include "selsim/scheduling.hpp"
#include "selsim/topology.hpp"
#include "selsim/trace.hpp"

namespace selsim {

/// seconds = cycles / compute_rate
inline double phase_latency_compute(double cycles, double compute_rate) {
    if (compute_rate <= 0.0) throw std::invalid_argument("phase_latency: zero compute rate");
    return cycles / compute_rate;
}

/// seconds = bytes * 8 / link rate
inline double phase_latency_transfer(int64_t bytes, double rate_bits_per_s) {
    if (rate_bits_per_s <= 0.0) throw std::invalid_argument("phase_latency: zero link rate");
    return static_cast<double>(bytes) * 8.0 / rate_bits_per_s;
}

/// Canonical node naming shared by the engines and the closed-form volume
/// accounting. clients[m] is the node of client m.
struct NodeNames {
    std::vector<std::string> clients;
    std::string server = "server";
    std::string fed = "fed";

    static NodeNames standard(size_t m) {
        NodeNames n;
        for (size_t i = 0; i < m; ++i) n.clients.push_back("client-" + std::to_string(i));
        return n;
    }
};

/// Per-client work: batch size and shard size (one epoch per round).
struct ClientLoad {
    int64_t batch_size = 1;
    int64_t samples = 1;

    int64_t steps() const { return batches_per_epoch(samples, batch_size); }
    int64_t batch_at(int64_t step) const {
        if (step >= steps()) return 0;
        return std::min(batch_size, samples - step * batch_size);
    }
};

struct LatencyBreakdown {
    PhaseLatencies phases;
    std::vector<std::pair<std::string, double>> detail;  // named sub-phases
    std::vector<double> client_path_time;  // per-client end-to-end time across the round
    double total = 0.0;
};

namespace netdetail {

inline double client_rate(const Topology& topo, double hz, const std::string& client,
                          const std::string& peer, bool uplink) {
    if (topo.total_bandwidth_hz > 0) {
        double r = hz * topo.spectral_efficiency;
        if (r <= 0.0)
            throw std::invalid_argument("allocation: client '" + client + "' has no " +
                                        (uplink ? std::string("uplink") : std::string("downlink")) +
                                        " bandwidth");
        return r;
    }
    return uplink ? topo.link_rate(client, peer) : topo.link_rate(peer, client);
}

inline int64_t label_bytes(int64_t batch) { return bytes_of({batch}, 32); }

}  // namespace netdetail

/// Bytes of one cut payload (activation or gradient) for a given batch.
inline int64_t cut_payload_bytes(const ModelProfile& profile, int64_t cut, int64_t batch,
                                 const CompressionSpec& comp) {
    Shape s = profile.activation_shape(cut);
    s.insert(s.begin(), batch);
    return payload_bytes(s, comp);
}

/// Lock-step round latency. Every client finishes a phase before the next
/// phase starts; the round is the sum of per-phase stragglers. The slowest
/// client therefore sets the pace, which is exactly the effect the min-max
/// allocator attacks.
inline LatencyBreakdown round_latency(const ProtocolConfig& cfg, const SplitPlan& plan,
                                      const Topology& topo, const Allocation& alloc,
                                      const ModelProfile& profile,
                                      const std::vector<ClientLoad>& loads,
                                      const NodeNames& names, const CompressionSpec& comp = {},
                                      int64_t round_index = 0) {
    const size_t M = loads.size();
    if (names.clients.size() != M)
        throw std::invalid_argument("round_latency: names/loads size mismatch");
    plan.validate(profile);
    alloc.validate(topo, M);
    if (cfg.kind == ProtocolKind::AsyncPsl)
        throw std::invalid_argument(
            "round_latency: async_psl timing is event-driven; it comes from the engine");

    const double F = topo.node(names.server).compute_rate;
    auto f_of = [&](size_t m) { return topo.node(names.clients[m]).compute_rate; };
    auto up_rate = [&](size_t m) {
        return netdetail::client_rate(topo, alloc.uplink_hz[m], names.clients[m], names.server, true);
    };
    auto down_rate = [&](size_t m) {
        return netdetail::client_rate(topo, alloc.downlink_hz[m], names.clients[m], names.server,
                                      false);
    };
    auto srv_rate = [&](size_t m) {
        double share = alloc.server_share[m];
        if (share <= 0.0)
            throw std::invalid_argument("allocation: client " + std::to_string(m) +
                                        " has no server compute share");
        return share * F;
    };

    LatencyBreakdown out;
    out.client_path_time.assign(M, 0.0);

    const int64_t L = profile.L();
    const int64_t wb_client = comp.weight_bits_for("client");

    switch (cfg.kind) {
        case ProtocolKind::FedAvg: {
            int64_t model_bytes = bytes_of({profile.total_params()}, static_cast<int>(wb_client));
            double down = 0, compute = 0, up = 0;
            for (size_t m = 0; m < M; ++m) {
                double d = phase_latency_transfer(model_bytes, down_rate(m));
                double c = phase_latency_compute(
                    (profile.fwd_cycles(0, L) + profile.bwd_cycles(0, L)) *
                        static_cast<double>(loads[m].samples),
                    f_of(m));
                double u = phase_latency_transfer(model_bytes, up_rate(m));
                down = std::max(down, d);
                compute = std::max(compute, c);
                up = std::max(up, u);
                out.client_path_time[m] = d + c + u;
            }
            out.phases.down_bwd = down;  // model distribution rides the downlink bucket
            out.phases.fwd_up = compute + up;
            out.detail = {{"model_down", down}, {"local_epoch", compute}, {"model_up", up}};
            break;
        }
        case ProtocolKind::VanillaSl: {
            // Sequential: the active client gets the whole pool and the whole
            // server. Relays move the client-side blob up and back down.
            const int64_t cut = cfg.cut;
            double full_up = topo.total_bandwidth_hz > 0
                                 ? topo.total_bandwidth_hz * topo.spectral_efficiency
                                 : 0.0;
            double t = 0.0;
            for (size_t m = 0; m < M; ++m) {
                double up_r = full_up > 0 ? full_up : topo.link_rate(names.clients[m], names.server);
                double down_r = full_up > 0 ? full_up : topo.link_rate(names.server, names.clients[m]);
                double tm = 0.0;
                for (int64_t s = 0; s < loads[m].steps(); ++s) {
                    int64_t b = loads[m].batch_at(s);
                    tm += phase_latency_compute(profile.fwd_cycles(0, cut) * b, f_of(m));
                    tm += phase_latency_transfer(
                        cut_payload_bytes(profile, cut, b, comp) + netdetail::label_bytes(b), up_r);
                    tm += phase_latency_compute(
                        (profile.fwd_cycles(cut, L) + profile.bwd_cycles(cut, L)) * b, F);
                    if (cut > 0) {
                        tm += phase_latency_transfer(cut_payload_bytes(profile, cut, b, comp), down_r);
                        tm += phase_latency_compute(profile.bwd_cycles(0, cut) * b, f_of(m));
                    }
                }
                out.client_path_time[m] = tm;
                t += tm;
            }
            int64_t blob = bytes_of({profile.param_count(0, cut)}, static_cast<int>(wb_client));
            double relay = 0.0;
            if (cut > 0 && M > 1) {
                auto order = vanilla_visit_order(cfg.seed, round_index, M);
                for (size_t k = 0; k + 1 < M; ++k) {
                    size_t a = order[k], b = order[k + 1];
                    double up_r = full_up > 0 ? full_up : topo.link_rate(names.clients[a], names.server);
                    double down_r =
                        full_up > 0 ? full_up : topo.link_rate(names.server, names.clients[b]);
                    relay += phase_latency_transfer(blob, up_r) + phase_latency_transfer(blob, down_r);
                }
            }
            out.phases.fwd_up = t;
            out.phases.averaging = relay;
            out.detail = {{"sequential_training", t}, {"model_relay", relay}};
            break;
        }
        case ProtocolKind::Ushaped: {
            const int64_t l1 = cfg.cut, l2 = cfg.cut2;
            int64_t steps = 0;
            for (const auto& ld : loads) steps = std::max(steps, ld.steps());
            double p1t = 0, p2t = 0, p3t = 0, p4t = 0, p5t = 0;
            for (int64_t s = 0; s < steps; ++s) {
                double p1 = 0, p2 = 0, p3 = 0, p4 = 0, p5 = 0;
                for (size_t m = 0; m < M; ++m) {
                    int64_t b = loads[m].batch_at(s);
                    if (b == 0) continue;
                    double c1 = phase_latency_compute(profile.fwd_cycles(0, l1) * b, f_of(m)) +
                                phase_latency_transfer(cut_payload_bytes(profile, l1, b, comp),
                                                       up_rate(m));
                    double mid_fwd = profile.fwd_cycles(l1, l2) * b;
                    double c2 = mid_fwd > 0 ? phase_latency_compute(mid_fwd, srv_rate(m)) : 0.0;
                    double c3 =
                        phase_latency_transfer(cut_payload_bytes(profile, l2, b, comp), down_rate(m)) +
                        phase_latency_compute(
                            (profile.fwd_cycles(l2, L) + profile.bwd_cycles(l2, L)) * b, f_of(m)) +
                        phase_latency_transfer(cut_payload_bytes(profile, l2, b, comp), up_rate(m));
                    double mid_bwd = profile.bwd_cycles(l1, l2) * b;
                    double c4 = mid_bwd > 0 ? phase_latency_compute(mid_bwd, srv_rate(m)) : 0.0;
                    double c5 =
                        phase_latency_transfer(cut_payload_bytes(profile, l1, b, comp), down_rate(m)) +
                        phase_latency_compute(profile.bwd_cycles(0, l1) * b, f_of(m));
                    p1 = std::max(p1, c1);
                    p2 = std::max(p2, c2);
                    p3 = std::max(p3, c3);
                    p4 = std::max(p4, c4);
                    p5 = std::max(p5, c5);
                    out.client_path_time[m] += c1 + c2 + c3 + c4 + c5;
                }
                p1t += p1;
                p2t += p2;
                p3t += p3;
                p4t += p4;
                p5t += p5;
            }
            out.phases.fwd_up = p1t;
            out.phases.server = p2t + p4t;
            out.phases.down_bwd = p3t + p5t;
            out.detail = {{"head_fwd_up", p1t},  {"server_fwd", p2t}, {"tail_roundtrip", p3t},
                          {"server_bwd", p4t},   {"head_down_bwd", p5t}};
            break;
        }
        default: {  // psl, epsl, sfl share the parallel-split shape
            const int64_t cut = cfg.cut;
            const bool is_epsl = cfg.kind == ProtocolKind::Epsl;
            std::vector<size_t> group =
                is_epsl ? epsl_group(cfg.seed, round_index, M, cfg.epsl_phi) : std::vector<size_t>{};
            std::vector<bool> in_group(M, false);
            for (size_t g : group) in_group[g] = true;

            int64_t steps = 0;
            for (const auto& ld : loads) steps = std::max(steps, ld.steps());
            double p1t = 0, p2t = 0, p3t = 0;
            for (int64_t s = 0; s < steps; ++s) {
                size_t group_active = 0;
                for (size_t g : group)
                    if (loads[g].batch_at(s) > 0) ++group_active;
                double p1 = 0, p2 = 0, p3 = 0;
                for (size_t m = 0; m < M; ++m) {
                    int64_t b = loads[m].batch_at(s);
                    if (b == 0) continue;
                    double c1 = phase_latency_compute(profile.fwd_cycles(0, cut) * b, f_of(m)) +
                                phase_latency_transfer(cut_payload_bytes(profile, cut, b, comp) +
                                                           netdetail::label_bytes(b),
                                                       up_rate(m));
                    double bwd_cycles = profile.bwd_cycles(cut, L) * b;
                    if (in_group[m] && group_active > 0)
                        bwd_cycles /= static_cast<double>(group_active);
                    double srv_cycles = profile.fwd_cycles(cut, L) * b + bwd_cycles;
                    double c2 = srv_cycles > 0 ? phase_latency_compute(srv_cycles, srv_rate(m)) : 0.0;
                    double c3 = 0.0;
                    if (cut > 0)
                        c3 = phase_latency_transfer(cut_payload_bytes(profile, cut, b, comp),
                                                    down_rate(m)) +
                             phase_latency_compute(profile.bwd_cycles(0, cut) * b, f_of(m));
                    p1 = std::max(p1, c1);
                    p2 = std::max(p2, c2);
                    p3 = std::max(p3, c3);
                    out.client_path_time[m] += c1 + c2 + c3;
                }
                p1t += p1;
                p2t += p2;
                p3t += p3;
            }
            out.phases.fwd_up = p1t;
            out.phases.server = p2t;
            out.phases.down_bwd = p3t;
            out.detail = {{"fwd_up", p1t}, {"server", p2t}, {"down_bwd", p3t}};

            if (cfg.kind == ProtocolKind::Sfl && (round_index + 1) % cfg.sfl_avg_period == 0) {
                int64_t blob = bytes_of({profile.param_count(0, cut)}, static_cast<int>(wb_client));
                double up = 0, down = 0;
                if (cut > 0)
                    for (size_t m = 0; m < M; ++m) {
                        up = std::max(up, phase_latency_transfer(blob, up_rate(m)));
                        down = std::max(down, phase_latency_transfer(blob, down_rate(m)));
                    }
                out.phases.averaging = up + down;
                out.detail.push_back({"fed_averaging", up + down});
            }
            break;
        }
    }

    out.phases.finalize();
    out.total = out.phases.round_total;
    return out;
}

/// Closed-form bytes per (src, dst) link for one round. This is written
/// against the protocol definitions, not the engines, so traces and volumes
/// check each other.
inline std::map<std::pair<std::string, std::string>, int64_t> comm_volume(
    const ProtocolConfig& cfg, const SplitPlan& plan, const ModelProfile& profile,
    const std::vector<ClientLoad>& loads, const NodeNames& names,
    const CompressionSpec& comp = {}, int64_t round_index = 0) {
    plan.validate(profile);
    const size_t M = loads.size();
    std::map<std::pair<std::string, std::string>, int64_t> vol;
    auto add = [&](const std::string& a, const std::string& b, int64_t bytes) {
        vol[{a, b}] += bytes;
    };
    const int64_t L = profile.L();
    const int64_t wb_client = comp.weight_bits_for("client");

    switch (cfg.kind) {
        case ProtocolKind::FedAvg: {
            int64_t model_bytes = bytes_of({profile.total_params()}, static_cast<int>(wb_client));
            for (size_t m = 0; m < M; ++m) {
                add(names.server, names.clients[m], model_bytes);
                add(names.clients[m], names.server, model_bytes);
            }
            break;
        }
        case ProtocolKind::VanillaSl: {
            const int64_t cut = cfg.cut;
            for (size_t m = 0; m < M; ++m)
                for (int64_t s = 0; s < loads[m].steps(); ++s) {
                    int64_t b = loads[m].batch_at(s);
                    add(names.clients[m], names.server,
                        cut_payload_bytes(profile, cut, b, comp) + netdetail::label_bytes(b));
                    if (cut > 0)
                        add(names.server, names.clients[m], cut_payload_bytes(profile, cut, b, comp));
                }
            if (cfg.cut > 0 && M > 1) {
                int64_t blob = bytes_of({profile.param_count(0, cfg.cut)}, static_cast<int>(wb_client));
                auto order = vanilla_visit_order(cfg.seed, round_index, M);
                for (size_t k = 0; k + 1 < M; ++k) {
                    add(names.clients[order[k]], names.server, blob);
                    add(names.server, names.clients[order[k + 1]], blob);
                }
            }
            break;
        }
        case ProtocolKind::Ushaped: {
            for (size_t m = 0; m < M; ++m)
                for (int64_t s = 0; s < loads[m].steps(); ++s) {
                    int64_t b = loads[m].batch_at(s);
                    add(names.clients[m], names.server, cut_payload_bytes(profile, cfg.cut, b, comp));
                    add(names.server, names.clients[m], cut_payload_bytes(profile, cfg.cut2, b, comp));
                    add(names.clients[m], names.server, cut_payload_bytes(profile, cfg.cut2, b, comp));
                    add(names.server, names.clients[m], cut_payload_bytes(profile, cfg.cut, b, comp));
                }
            break;
        }
        case ProtocolKind::AsyncPsl:
            throw std::invalid_argument(
                "comm_volume: async_psl volumes are event-driven; read the MessageTrace");
        default: {  // psl, epsl, sfl
            const int64_t cut = cfg.cut;
            const bool is_epsl = cfg.kind == ProtocolKind::Epsl;
            std::vector<size_t> group =
                is_epsl ? epsl_group(cfg.seed, round_index, M, cfg.epsl_phi) : std::vector<size_t>{};
            std::vector<bool> in_group(M, false);
            for (size_t g : group) in_group[g] = true;
            int64_t steps = 0;
            for (const auto& ld : loads) steps = std::max(steps, ld.steps());
            for (int64_t s = 0; s < steps; ++s) {
                std::vector<size_t> group_active;
                for (size_t g : group)
                    if (loads[g].batch_at(s) > 0) group_active.push_back(g);
                for (size_t m = 0; m < M; ++m) {
                    int64_t b = loads[m].batch_at(s);
                    if (b == 0) continue;
                    add(names.clients[m], names.server,
                        cut_payload_bytes(profile, cut, b, comp) + netdetail::label_bytes(b));
                    if (cut > 0 && !in_group[m])
                        add(names.server, names.clients[m], cut_payload_bytes(profile, cut, b, comp));
                }
                if (cut > 0 && !group_active.empty()) {
                    int64_t b = loads[group_active.front()].batch_at(s);
                    add(names.server, names.clients[group_active.front()],
                        cut_payload_bytes(profile, cut, b, comp));
                }
            }
            if (cfg.kind == ProtocolKind::Sfl && (round_index + 1) % cfg.sfl_avg_period == 0 &&
                cut > 0) {
                int64_t blob = bytes_of({profile.param_count(0, cut)}, static_cast<int>(wb_client));
                for (size_t m = 0; m < M; ++m) {
                    add(names.clients[m], names.fed, blob);
                    add(names.fed, names.clients[m], blob);
                }
            }
            break;
        }
    }
    return vol;
}

/// Parameter residency plus the activation cache a node holds for one batch
/// of its segment. Params are counted at the node's weight bitwidth (a
/// quantized sub-model really is smaller); cached activations at 32 bits.
inline int64_t node_memory_demand(const ModelProfile& profile, int64_t first, int64_t last,
                                  int64_t batch, int weight_bits = 32) {
    int64_t pc = profile.param_count(first, last);
    int64_t params = pc > 0 ? bytes_of({pc}, weight_bits) : 0;
    int64_t cache = 0;
    for (int64_t li = first; li < last; ++li) {
        Shape s = profile.layers[static_cast<size_t>(li)].in_shape;
        s.insert(s.begin(), batch);
        cache += bytes_of(s, 32);
    }
    if (last > first) {
        Shape s = profile.activation_shape(last);
        s.insert(s.begin(), batch);
        cache += bytes_of(s, 32);
    }
    return params + cache;
}

}  // namespace selsim
