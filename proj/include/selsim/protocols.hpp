#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selsim/compression.hpp"
#include "selsim/dataset.hpp"
#include "selsim/latency.hpp"
#include "selsim/model.hpp"
#include "selsim/protocol_config.hpp"
#include "selsim/scheduling.hpp"
#include "selsim/segment.hpp"
#include "selsim/tensor.hpp"
#include "selsim/topology.hpp"
#include "selsim/trace.hpp"

namespace selsim {

/// One participant: its shard, its side of the model (one segment, or head
/// and tail for the U-shaped protocol) and its batch size.
struct ClientState {
    size_t id = 0;
    Dataset shard;
    std::vector<SegmentState> segments;
    int64_t batch_size = 1;
    uint64_t sched_seed = 0;  // batch-stream key, normally the client id

    void validate() const {
        if (shard.size() == 0)
            throw std::invalid_argument("client " + std::to_string(id) + ": empty shard");
        if (batch_size < 1 || batch_size > shard.size())
            throw std::invalid_argument("client " + std::to_string(id) +
                                        ": batch_size must be in [1, shard size]");
    }
};

namespace protodetail {

inline std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& d,
                                                        const std::vector<size_t>& idx) {
    Dataset sub = d.subset(idx);
    return {std::move(sub.xs), std::move(sub.labels)};
}

inline std::pair<double, Tensor> loss_seed(const ModelProfile& profile, const Tensor& output,
                                           const std::vector<int>& labels) {
    return profile.ends_with_softmax() ? loss_grad_on_probs(output, labels)
                                       : loss_grad(output, labels);
}

/// Elementwise weighted mean of parameter gradients, accumulated in the order
/// given (callers pass ascending client order).
inline ParamGrads mean_param_grads(const std::vector<const ParamGrads*>& gs,
                                   const std::vector<double>& weights) {
    ParamGrads out;
    const ParamGrads& head = *gs.front();
    out.resize(head.size());
    for (size_t li = 0; li < head.size(); ++li) {
        out[li].reserve(head[li].size());
        for (size_t pi = 0; pi < head[li].size(); ++pi) {
            std::vector<const Tensor*> ts;
            ts.reserve(gs.size());
            for (const ParamGrads* g : gs) ts.push_back(&(*g)[li][pi]);
            out[li].push_back(weighted_mean(ts, weights));
        }
    }
    return out;
}

inline SegmentState mean_segments(const std::vector<const SegmentState*>& segs,
                                  const std::vector<double>& weights) {
    SegmentState out = *segs.front();
    for (size_t li = 0; li < out.params.size(); ++li)
        for (size_t pi = 0; pi < out.params[li].size(); ++pi) {
            std::vector<const Tensor*> ts;
            ts.reserve(segs.size());
            for (const SegmentState* s : segs) ts.push_back(&s->params[li][pi]);
            out.params[li][pi] = weighted_mean(ts, weights);
        }
    return out;
}

inline ActivationCache mean_caches(const std::vector<const ActivationCache*>& caches) {
    ActivationCache out = *caches.front();
    if (caches.size() == 1) return out;
    std::vector<double> w(caches.size(), 1.0);
    for (size_t i = 0; i < out.layer_inputs.size(); ++i) {
        std::vector<const Tensor*> ts;
        for (const ActivationCache* c : caches) ts.push_back(&c->layer_inputs[i]);
        out.layer_inputs[i] = weighted_mean(ts, w);
    }
    for (size_t i = 0; i < out.softmax_probs.size(); ++i) {
        std::vector<const Tensor*> ts;
        for (const ActivationCache* c : caches) ts.push_back(&c->softmax_probs[i]);
        out.softmax_probs[i] = weighted_mean(ts, w);
    }
    return out;
}

inline Tensor mean_tensors(const std::vector<const Tensor*>& ts) {
    std::vector<double> w(ts.size(), 1.0);
    return weighted_mean(ts, w);
}

struct SentPayload {
    Tensor received;
    int64_t bytes = 0;
};

/// What the far side of a cut sees, plus the bytes that crossed the wire.
inline SentPayload send_cut_payload(const Tensor& t, const CompressionSpec& comp) {
    QuantResult q = compress_payload(t, comp);
    return {std::move(q.tensor), payload_bytes(t.shape, comp)};
}

}  // namespace protodetail

/// Full-model SGD over an explicit batch list; the reference trajectory every
/// single-client protocol run must reproduce bit for bit.
inline double centralized_epoch(const ModelProfile& profile, SegmentState& model,
                                const Dataset& data,
                                const std::vector<std::vector<size_t>>& batches, double lr) {
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (const auto& idx : batches) {
        auto [x, labels] = protodetail::gather_batch(data, idx);
        auto [out, cache] = forward_segment(profile, model, x);
        auto [loss, seed] = protodetail::loss_seed(profile, out, labels);
        auto [gin, grads] = backward_segment(profile, model, cache, seed);
        (void)gin;
        sgd_step(model, grads, lr);
        loss_sum += loss * static_cast<double>(idx.size());
        samples += static_cast<int64_t>(idx.size());
    }
    return samples > 0 ? loss_sum / static_cast<double>(samples) : 0.0;
}

/// FedAvg: distribute, one local epoch per client, average. The averaged
/// model lands in global_model and in every client segment.
inline RoundTrace run_round_fedavg(const ModelProfile& profile, std::vector<ClientState>& clients,
                                   SegmentState& global_model, const ProtocolConfig& cfg,
                                   const NodeNames& names, int64_t round,
                                   const CompressionSpec& comp = {}) {
    RoundTrace rt;
    rt.round = round;
    const int64_t model_bytes =
        bytes_of({profile.total_params()}, comp.weight_bits_for("client"));
    const int wb = comp.weight_bits_for("client");
    if (global_model.first != 0 || global_model.last != profile.L())
        throw std::invalid_argument("fedavg: global model must span all layers");
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (auto& c : clients) {
        if (c.segments.size() != 1 || c.segments[0].layer_count() != profile.L())
            throw std::invalid_argument("fedavg: client " + std::to_string(c.id) +
                                        " does not hold the full model");
        c.segments[0] = global_model;
        rt.trace.add(names.server, names.clients[c.id], PayloadKind::ServerModel, model_bytes,
                     round, Phase::Downlink);
        auto batches = batch_schedule(cfg.seed, c.sched_seed, round, c.shard.size(), c.batch_size);
        double loss = centralized_epoch(profile, c.segments[0], c.shard, batches, cfg.lr);
        quantize_weights_step(c.segments[0], wb);
        rt.trace.add(names.clients[c.id], names.server, PayloadKind::ClientModel, model_bytes,
                     round, Phase::Uplink);
        loss_sum += loss * static_cast<double>(c.shard.size());
        samples += c.shard.size();
    }
    std::vector<const SegmentState*> segs;
    std::vector<double> ones;
    for (const auto& c : clients) {
        segs.push_back(&c.segments[0]);
        ones.push_back(1.0);
    }
    global_model = protodetail::mean_segments(segs, ones);
    for (auto& c : clients) c.segments[0] = global_model;
    rt.train_loss = samples > 0 ? loss_sum / static_cast<double>(samples) : 0.0;
    return rt;
}

/// Vanilla SL: strictly sequential. One shared client-side model is relayed
/// through the server as an opaque blob between consecutive clients; the
/// server-side model updates per batch.
inline RoundTrace run_round_vanilla_sl(const ModelProfile& profile,
                                       std::vector<ClientState>& clients,
                                       SegmentState& server_seg, SegmentState& client_seg,
                                       const ProtocolConfig& cfg, const NodeNames& names,
                                       int64_t round, const CompressionSpec& comp = {}) {
    RoundTrace rt;
    rt.round = round;
    const int64_t cut = cfg.cut;
    const int64_t L = profile.L();
    const int64_t blob_bytes =
        bytes_of({profile.param_count(0, cut)}, comp.weight_bits_for("client"));
    auto order = vanilla_visit_order(cfg.seed, round, clients.size());
    double loss_sum = 0.0;
    int64_t samples = 0;
    for (size_t k = 0; k < order.size(); ++k) {
        ClientState& c = clients[order[k]];
        const std::string& cnode = names.clients[c.id];
        auto batches = batch_schedule(cfg.seed, c.sched_seed, round, c.shard.size(), c.batch_size);
        for (const auto& idx : batches) {
            auto [x, labels] = protodetail::gather_batch(c.shard, idx);
            auto [act, ccache] = forward_segment(profile, client_seg, x);
            auto payload = protodetail::send_cut_payload(act, comp);
            rt.trace.add(cnode, names.server, PayloadKind::Activation, payload.bytes, round,
                         Phase::Uplink);
            rt.trace.add(cnode, names.server, PayloadKind::Label,
                         bytes_of({static_cast<int64_t>(idx.size())}, 32), round, Phase::Uplink);
            auto [out, scache] = forward_segment(profile, server_seg, payload.received);
            auto [loss, seed] = protodetail::loss_seed(profile, out, labels);
            auto [cut_grad, sgrads] = backward_segment(profile, server_seg, scache, seed);
            rt.server_fwd_cycles += profile.fwd_cycles(cut, L) * static_cast<double>(idx.size());
            rt.server_bwd_cycles += profile.bwd_cycles(cut, L) * static_cast<double>(idx.size());
            sgd_step(server_seg, sgrads, cfg.lr);
            quantize_weights_step(server_seg, comp.weight_bits_for("server"));
            if (cut > 0) {
                auto down = protodetail::send_cut_payload(cut_grad, comp);
                rt.trace.add(names.server, cnode, PayloadKind::Grad, down.bytes, round,
                             Phase::Downlink);
                auto [gin, cgrads] = backward_segment(profile, client_seg, ccache, down.received);
                (void)gin;
                sgd_step(client_seg, cgrads, cfg.lr);
                quantize_weights_step(client_seg, comp.weight_bits_for("client"));
            }
            loss_sum += loss * static_cast<double>(idx.size());
            samples += static_cast<int64_t>(idx.size());
        }
        if (k + 1 < order.size() && cut > 0) {
            rt.trace.add(cnode, names.server, PayloadKind::ClientModel, blob_bytes, round,
                         Phase::Relay);
            rt.trace.add(names.server, names.clients[clients[order[k + 1]].id],
                         PayloadKind::ClientModel, blob_bytes, round, Phase::Relay);
        }
    }
    rt.train_loss = samples > 0 ? loss_sum / static_cast<double>(samples) : 0.0;
    return rt;
}

namespace protodetail {

/// The parallel split family. phi = 0 is PSL; phi > 0 aggregates the chosen
/// group's last-layer gradients and server caches into one backward pass
/// whose cut gradient is broadcast to the whole group.
inline RoundTrace run_parallel_round(const ModelProfile& profile,
                                     std::vector<ClientState>& clients, SegmentState& server_seg,
                                     const ProtocolConfig& cfg, double phi, const NodeNames& names,
                                     int64_t round, const CompressionSpec& comp) {
    RoundTrace rt;
    rt.round = round;
    const size_t M = clients.size();
    const int64_t cut = cfg.cut;
    const int64_t L = profile.L();
    auto group = epsl_group(cfg.seed, round, M, phi);
    std::vector<bool> in_group(M, false);
    for (size_t g : group) in_group[g] = true;

    std::vector<std::vector<std::vector<size_t>>> schedules(M);
    int64_t steps = 0;
    for (size_t m = 0; m < M; ++m) {
        schedules[m] = batch_schedule(cfg.seed, clients[m].sched_seed, round, clients[m].shard.size(),
                                      clients[m].batch_size);
        steps = std::max<int64_t>(steps, static_cast<int64_t>(schedules[m].size()));
    }

    double loss_sum = 0.0;
    int64_t samples = 0;
    for (int64_t s = 0; s < steps; ++s) {
        struct Contribution {
            size_t m;
            int64_t batch;
            std::vector<int> labels;
            ActivationCache client_cache;
            ActivationCache server_cache;
            Tensor seed_grad;
            Tensor cut_grad;       // individual route only
            ParamGrads server_grads;  // individual route only
        };
        std::vector<Contribution> live;
        for (size_t m = 0; m < M; ++m) {
            if (s >= static_cast<int64_t>(schedules[m].size())) continue;
            const auto& idx = schedules[m][static_cast<size_t>(s)];
            ClientState& c = clients[m];
            auto [x, labels] = gather_batch(c.shard, idx);
            auto [act, ccache] = forward_segment(profile, c.segments[0], x);
            auto payload = send_cut_payload(act, comp);
            rt.trace.add(names.clients[c.id], names.server, PayloadKind::Activation, payload.bytes,
                         round, Phase::Uplink);
            rt.trace.add(names.clients[c.id], names.server, PayloadKind::Label,
                         bytes_of({static_cast<int64_t>(idx.size())}, 32), round, Phase::Uplink);
            auto [out, scache] = forward_segment(profile, server_seg, payload.received);
            auto [loss, seed] = loss_seed(profile, out, labels);
            rt.server_fwd_cycles += profile.fwd_cycles(cut, L) * static_cast<double>(idx.size());
            Contribution contrib;
            contrib.m = m;
            contrib.batch = static_cast<int64_t>(idx.size());
            contrib.labels = std::move(labels);
            contrib.client_cache = std::move(ccache);
            contrib.server_cache = std::move(scache);
            contrib.seed_grad = std::move(seed);
            live.push_back(std::move(contrib));
            loss_sum += loss * static_cast<double>(idx.size());
            samples += static_cast<int64_t>(idx.size());
        }
        if (live.empty()) continue;

        // aggregated group backward (one pass), individual backwards for the rest
        std::vector<size_t> agg;   // indices into live
        std::vector<size_t> solo;
        for (size_t i = 0; i < live.size(); ++i)
            (in_group[live[i].m] ? agg : solo).push_back(i);

        Tensor broadcast_grad;
        ParamGrads agg_grads;
        if (!agg.empty()) {
            int64_t b0 = live[agg[0]].batch;
            for (size_t i : agg)
                if (live[i].batch != b0)
                    throw std::invalid_argument(
                        "epsl: unequal batch sizes within the aggregated group");
            const bool fused_tail =
                !server_seg.empty() &&
                profile.layers[static_cast<size_t>(server_seg.last - 1)].kind ==
                    LayerKind::SoftmaxHead;
            if (fused_tail) {
                // Aggregate at the logits boundary: each client's own softmax
                // backward is exact and parameter-free, and the mean of the
                // resulting bounded gradients keeps the single shared backward
                // pass stable. Aggregating the raw loss seeds instead would
                // pair unbounded -1/(B*p) entries with mismatched mean probs.
                SegmentState prefix;
                prefix.first = server_seg.first;
                prefix.last = server_seg.last - 1;
                prefix.params.assign(server_seg.params.begin(), server_seg.params.end() - 1);
                std::vector<Tensor> logit_grads;
                std::vector<ActivationCache> prefix_caches;
                for (size_t i : agg) {
                    const ActivationCache& c = live[i].server_cache;
                    logit_grads.push_back(
                        softmax_head_backward(c.softmax_probs.back(), live[i].seed_grad));
                    ActivationCache pc = c;
                    pc.last -= 1;
                    pc.layer_inputs.pop_back();
                    pc.softmax_probs.pop_back();
                    prefix_caches.push_back(std::move(pc));
                }
                std::vector<const ActivationCache*> cptr;
                std::vector<const Tensor*> gptr;
                for (size_t i = 0; i < agg.size(); ++i) {
                    cptr.push_back(&prefix_caches[i]);
                    gptr.push_back(&logit_grads[i]);
                }
                ActivationCache mean_cache = mean_caches(cptr);
                Tensor mean_grad = mean_tensors(gptr);
                auto [cut_grad, sgrads] =
                    backward_segment(profile, prefix, mean_cache, mean_grad);
                sgrads.push_back({});  // parameterless softmax slot
                broadcast_grad = std::move(cut_grad);
                agg_grads = std::move(sgrads);
            } else {
                std::vector<const ActivationCache*> caches;
                std::vector<const Tensor*> seeds;
                for (size_t i : agg) {
                    caches.push_back(&live[i].server_cache);
                    seeds.push_back(&live[i].seed_grad);
                }
                ActivationCache mean_cache = protodetail::mean_caches(caches);
                Tensor mean_seed = protodetail::mean_tensors(seeds);
                auto [cut_grad, sgrads] =
                    backward_segment(profile, server_seg, mean_cache, mean_seed);
                broadcast_grad = std::move(cut_grad);
                agg_grads = std::move(sgrads);
            }
            rt.server_bwd_cycles += profile.bwd_cycles(cut, L) * static_cast<double>(b0);
        }
        for (size_t i : solo) {
            auto [cut_grad, sgrads] =
                backward_segment(profile, server_seg, live[i].server_cache, live[i].seed_grad);
            live[i].cut_grad = std::move(cut_grad);
            live[i].server_grads = std::move(sgrads);
            rt.server_bwd_cycles += profile.bwd_cycles(cut, L) * static_cast<double>(live[i].batch);
        }

        // server update: sample-weighted mean, aggregated contribution first
        if (!server_seg.empty()) {
            std::vector<const ParamGrads*> gs;
            std::vector<double> ws;
            if (!agg.empty()) {
                gs.push_back(&agg_grads);
                ws.push_back(static_cast<double>(agg.size()) *
                             static_cast<double>(live[agg[0]].batch));
            }
            for (size_t i : solo) {
                gs.push_back(&live[i].server_grads);
                ws.push_back(static_cast<double>(live[i].batch));
            }
            ParamGrads mean = mean_param_grads(gs, ws);
            sgd_step(server_seg, mean, cfg.lr);
            quantize_weights_step(server_seg, comp.weight_bits_for("server"));
        }

        // downlinks and client-side updates; the aggregated gradient is one
        // broadcast payload, logged once toward its lowest-id recipient
        if (cut > 0) {
            if (!agg.empty()) {
                auto down = send_cut_payload(broadcast_grad, comp);
                rt.trace.add(names.server, names.clients[clients[live[agg[0]].m].id],
                             PayloadKind::Grad, down.bytes, round, Phase::Downlink);
                for (size_t i : agg) {
                    ClientState& c = clients[live[i].m];
                    auto [gin, cgrads] =
                        backward_segment(profile, c.segments[0], live[i].client_cache, down.received);
                    (void)gin;
                    sgd_step(c.segments[0], cgrads, cfg.lr);
                    quantize_weights_step(c.segments[0], comp.weight_bits_for("client"));
                }
            }
            for (size_t i : solo) {
                ClientState& c = clients[live[i].m];
                auto down = send_cut_payload(live[i].cut_grad, comp);
                rt.trace.add(names.server, names.clients[c.id], PayloadKind::Grad, down.bytes,
                             round, Phase::Downlink);
                auto [gin, cgrads] =
                    backward_segment(profile, c.segments[0], live[i].client_cache, down.received);
                (void)gin;
                sgd_step(c.segments[0], cgrads, cfg.lr);
                quantize_weights_step(c.segments[0], comp.weight_bits_for("client"));
            }
        }
    }
    rt.train_loss = samples > 0 ? loss_sum / static_cast<double>(samples) : 0.0;
    return rt;
}

}  // namespace protodetail

/// PSL: parallel clients, shared server model updated with the sample-weighted
/// mean of per-client gradients, no client-side synchronization ever.
inline RoundTrace run_round_psl(const ModelProfile& profile, std::vector<ClientState>& clients,
                                SegmentState& server_seg, const ProtocolConfig& cfg,
                                const NodeNames& names, int64_t round,
                                const CompressionSpec& comp = {}) {
    return protodetail::run_parallel_round(profile, clients, server_seg, cfg, 0.0, names, round,
                                           comp);
}

/// EPSL: PSL forward; the phi-group's backward is served by a single pass on
/// averaged caches and last-layer gradients. phi = 0 reduces to PSL exactly.
inline RoundTrace run_round_epsl(const ModelProfile& profile, std::vector<ClientState>& clients,
                                 SegmentState& server_seg, const ProtocolConfig& cfg,
                                 const NodeNames& names, int64_t round,
                                 const CompressionSpec& comp = {}) {
    return protodetail::run_parallel_round(profile, clients, server_seg, cfg, cfg.epsl_phi, names,
                                           round, comp);
}

/// SFL: PSL within the round, plus sample-weighted client-model averaging on
/// the fed server every sfl_avg_period rounds.
inline RoundTrace run_round_sfl(const ModelProfile& profile, std::vector<ClientState>& clients,
                                SegmentState& server_seg, const ProtocolConfig& cfg,
                                const NodeNames& names, int64_t round,
                                const CompressionSpec& comp = {}) {
    RoundTrace rt =
        protodetail::run_parallel_round(profile, clients, server_seg, cfg, 0.0, names, round, comp);
    if ((round + 1) % cfg.sfl_avg_period != 0) return rt;
    const int64_t blob_bytes =
        bytes_of({profile.param_count(0, cfg.cut)}, comp.weight_bits_for("client"));
    if (cfg.cut == 0) return rt;  // no client-side model to average
    std::vector<const SegmentState*> segs;
    std::vector<double> weights;
    for (auto& c : clients) {
        rt.trace.add(names.clients[c.id], names.fed, PayloadKind::ClientModel, blob_bytes, round,
                     Phase::Averaging);
        segs.push_back(&c.segments[0]);
        weights.push_back(static_cast<double>(c.shard.size()));
    }
    SegmentState averaged = protodetail::mean_segments(segs, weights);
    for (auto& c : clients) {
        c.segments[0] = averaged;
        quantize_weights_step(c.segments[0], comp.weight_bits_for("client"));
        rt.trace.add(names.fed, names.clients[c.id], PayloadKind::ClientModel, blob_bytes, round,
                     Phase::Averaging);
    }
    return rt;
}

/// U-shaped SL: client head and tail around a server middle. Labels never
/// leave the clients; the loss is computed where the tail lives.
inline RoundTrace run_round_ushaped(const ModelProfile& profile, std::vector<ClientState>& clients,
                                    SegmentState& server_seg, const ProtocolConfig& cfg,
                                    const NodeNames& names, int64_t round,
                                    const CompressionSpec& comp = {}) {
    RoundTrace rt;
    rt.round = round;
    const size_t M = clients.size();
    const int64_t l1 = cfg.cut, l2 = cfg.cut2;
    const int64_t L = profile.L();
    if (!(l1 > 0 && l1 < l2 && l2 < L))
        throw std::invalid_argument("ushaped: cut ordering violated (need 0 < cut < cut2 < L)");

    std::vector<std::vector<std::vector<size_t>>> schedules(M);
    int64_t steps = 0;
    for (size_t m = 0; m < M; ++m) {
        schedules[m] = batch_schedule(cfg.seed, clients[m].sched_seed, round, clients[m].shard.size(),
                                      clients[m].batch_size);
        steps = std::max<int64_t>(steps, static_cast<int64_t>(schedules[m].size()));
    }

    double loss_sum = 0.0;
    int64_t samples = 0;
    for (int64_t s = 0; s < steps; ++s) {
        struct Pending {
            size_t m;
            int64_t batch;
            ActivationCache head_cache;
            ActivationCache mid_cache;
            Tensor grad_to_mid;  // dL/d(mid output), from the tail backward
            ParamGrads server_grads;
        };
        std::vector<Pending> live;
        for (size_t m = 0; m < M; ++m) {
            if (s >= static_cast<int64_t>(schedules[m].size())) continue;
            const auto& idx = schedules[m][static_cast<size_t>(s)];
            ClientState& c = clients[m];
            const std::string& cnode = names.clients[c.id];
            auto [x, labels] = protodetail::gather_batch(c.shard, idx);
            auto [act1, head_cache] = forward_segment(profile, c.segments[0], x);
            auto up1 = protodetail::send_cut_payload(act1, comp);
            rt.trace.add(cnode, names.server, PayloadKind::Activation, up1.bytes, round,
                         Phase::Uplink);
            auto [act2, mid_cache] = forward_segment(profile, server_seg, up1.received);
            rt.server_fwd_cycles += profile.fwd_cycles(l1, l2) * static_cast<double>(idx.size());
            auto down1 = protodetail::send_cut_payload(act2, comp);
            rt.trace.add(names.server, cnode, PayloadKind::Activation, down1.bytes, round,
                         Phase::Downlink);
            auto [out, tail_cache] = forward_segment(profile, c.segments[1], down1.received);
            auto [loss, seed] = protodetail::loss_seed(profile, out, labels);
            auto [grad_mid_out, tail_grads] =
                backward_segment(profile, c.segments[1], tail_cache, seed);
            sgd_step(c.segments[1], tail_grads, cfg.lr);
            quantize_weights_step(c.segments[1], comp.weight_bits_for("client"));
            auto up2 = protodetail::send_cut_payload(grad_mid_out, comp);
            rt.trace.add(cnode, names.server, PayloadKind::Grad, up2.bytes, round, Phase::Uplink);
            Pending p;
            p.m = m;
            p.batch = static_cast<int64_t>(idx.size());
            p.head_cache = std::move(head_cache);
            p.mid_cache = std::move(mid_cache);
            p.grad_to_mid = std::move(up2.received);
            live.push_back(std::move(p));
            loss_sum += loss * static_cast<double>(idx.size());
            samples += static_cast<int64_t>(idx.size());
        }
        if (live.empty()) continue;

        std::vector<Tensor> cut_grads(live.size());
        for (size_t i = 0; i < live.size(); ++i) {
            auto [g1, sgrads] =
                backward_segment(profile, server_seg, live[i].mid_cache, live[i].grad_to_mid);
            cut_grads[i] = std::move(g1);
            live[i].server_grads = std::move(sgrads);
            rt.server_bwd_cycles += profile.bwd_cycles(l1, l2) * static_cast<double>(live[i].batch);
        }
        std::vector<const ParamGrads*> gs;
        std::vector<double> ws;
        for (const auto& p : live) {
            gs.push_back(&p.server_grads);
            ws.push_back(static_cast<double>(p.batch));
        }
        sgd_step(server_seg, protodetail::mean_param_grads(gs, ws), cfg.lr);
        quantize_weights_step(server_seg, comp.weight_bits_for("server"));

        for (size_t i = 0; i < live.size(); ++i) {
            ClientState& c = clients[live[i].m];
            auto down2 = protodetail::send_cut_payload(cut_grads[i], comp);
            rt.trace.add(names.server, names.clients[c.id], PayloadKind::Grad, down2.bytes, round,
                         Phase::Downlink);
            auto [gin, head_grads] =
                backward_segment(profile, c.segments[0], live[i].head_cache, down2.received);
            (void)gin;
            sgd_step(c.segments[0], head_grads, cfg.lr);
            quantize_weights_step(c.segments[0], comp.weight_bits_for("client"));
        }
    }
    rt.train_loss = samples > 0 ? loss_sum / static_cast<double>(samples) : 0.0;
    return rt;
}

/// Asynchronous PSL. Simulated-time event loop ordered by (arrival, client
/// id): the server runs forward/backward at each arrival against its current
/// weights, and applies a sample-weighted update once `async_quorum`
/// gradients are pending. All arrivals sharing a timestamp are served before
/// any update applies, and each applied contribution is stamped with
/// staleness = version-at-apply minus the server version the client's cycle
/// started from (the version its last cut gradient came from). Server compute is
/// instantaneous in simulated time; client compute and both link directions
/// come from the phase latency model. Returns one RoundTrace per server
/// update (cfg.rounds updates total).
inline std::vector<RoundTrace> run_async_psl(const ModelProfile& profile,
                                             std::vector<ClientState>& clients,
                                             SegmentState& server_seg, const ProtocolConfig& cfg,
                                             const Topology& topo, const Allocation& alloc,
                                             const NodeNames& names,
                                             const CompressionSpec& comp = {}) {
    const size_t M = clients.size();
    if (cfg.async_quorum < 1 || cfg.async_quorum > static_cast<int64_t>(M))
        throw std::invalid_argument("async_psl: quorum K must be in [1, M]");
    alloc.validate(topo, M);
    const int64_t cut = cfg.cut;
    const int64_t L = profile.L();
    const size_t K = static_cast<size_t>(cfg.async_quorum);

    auto up_rate = [&](size_t m) {
        return netdetail::client_rate(topo, alloc.uplink_hz[m], names.clients[m], names.server,
                                      true);
    };
    auto down_rate = [&](size_t m) {
        return netdetail::client_rate(topo, alloc.downlink_hz[m], names.clients[m], names.server,
                                      false);
    };

    struct Pending {
        size_t m;
        int64_t batch;
        int64_t stamped_version;
        Tensor cut_grad;
        ParamGrads server_grads;
        ActivationCache client_cache;
        std::vector<Message> uplink_msgs;
    };
    struct Arrival {
        double time;
        size_t m;
        bool operator<(const Arrival& o) const {
            return time != o.time ? time < o.time : m < o.m;
        }
    };

    std::vector<int64_t> next_batch_index(M, 0);
    auto client_batch = [&](size_t m) {
        const ClientState& c = clients[m];
        int64_t per_epoch = batches_per_epoch(c.shard.size(), c.batch_size);
        int64_t t = next_batch_index[m]++;
        auto sched = batch_schedule(cfg.seed, c.sched_seed, t / per_epoch, c.shard.size(), c.batch_size);
        return sched[static_cast<size_t>(t % per_epoch)];
    };
    auto fwd_uplink_time = [&](size_t m, int64_t b) {
        double t = phase_latency_compute(profile.fwd_cycles(0, cut) * static_cast<double>(b),
                                         topo.node(names.clients[m]).compute_rate);
        int64_t bytes = cut_payload_bytes(profile, cut, b, comp) + bytes_of({b}, 32);
        return t + phase_latency_transfer(bytes, up_rate(m));
    };
    auto down_bwd_time = [&](size_t m, int64_t b) {
        if (cut == 0) return 0.0;
        double t = phase_latency_transfer(cut_payload_bytes(profile, cut, b, comp), down_rate(m));
        return t + phase_latency_compute(profile.bwd_cycles(0, cut) * static_cast<double>(b),
                                         topo.node(names.clients[m]).compute_rate);
    };

    std::vector<Arrival> queue;
    std::vector<std::vector<size_t>> inflight_batch(M);
    std::vector<int64_t> cycle_start_version(M, 0);
    for (size_t m = 0; m < M; ++m) {
        inflight_batch[m] = client_batch(m);
        queue.push_back({fwd_uplink_time(m, static_cast<int64_t>(inflight_batch[m].size())), m});
    }

    std::vector<RoundTrace> rounds;
    std::deque<Pending> pending;
    int64_t version = 0;
    double now = 0.0, last_update_time = 0.0;
    double loss_acc = 0.0;
    int64_t loss_samples = 0;
    double srv_fwd = 0, srv_bwd = 0;  // cycles since the last applied update

    while (rounds.size() < static_cast<size_t>(cfg.rounds)) {
        if (queue.empty()) throw std::runtime_error("async_psl: event queue drained unexpectedly");
        std::sort(queue.begin(), queue.end());
        double t0 = queue.front().time;
        now = t0;
        // serve every arrival at this timestamp before applying updates
        size_t n_now = 0;
        while (n_now < queue.size() && queue[n_now].time == t0) ++n_now;
        std::vector<Arrival> batch_events(queue.begin(), queue.begin() + n_now);
        queue.erase(queue.begin(), queue.begin() + n_now);
        for (const Arrival& ev : batch_events) {
            size_t m = ev.m;
            ClientState& c = clients[m];
            const auto& idx = inflight_batch[m];
            auto [x, labels] = protodetail::gather_batch(c.shard, idx);
            auto [act, ccache] = forward_segment(profile, c.segments[0], x);
            auto payload = protodetail::send_cut_payload(act, comp);
            Pending p;
            p.uplink_msgs.push_back({names.clients[c.id], names.server, PayloadKind::Activation,
                                     payload.bytes, static_cast<int64_t>(rounds.size()),
                                     Phase::Uplink});
            p.uplink_msgs.push_back({names.clients[c.id], names.server, PayloadKind::Label,
                                     bytes_of({static_cast<int64_t>(idx.size())}, 32),
                                     static_cast<int64_t>(rounds.size()), Phase::Uplink});
            auto [out, scache] = forward_segment(profile, server_seg, payload.received);
            auto [loss, seed] = protodetail::loss_seed(profile, out, labels);
            auto [cut_grad, sgrads] = backward_segment(profile, server_seg, scache, seed);
            srv_fwd += profile.fwd_cycles(cut, L) * static_cast<double>(idx.size());
            srv_bwd += profile.bwd_cycles(cut, L) * static_cast<double>(idx.size());
            loss_acc += loss * static_cast<double>(idx.size());
            loss_samples += static_cast<int64_t>(idx.size());
            p.m = m;
            p.batch = static_cast<int64_t>(idx.size());
            p.stamped_version = cycle_start_version[m];
            p.cut_grad = std::move(cut_grad);
            p.server_grads = std::move(sgrads);
            p.client_cache = std::move(ccache);
            pending.push_back(std::move(p));
        }
        std::vector<std::pair<size_t, int64_t>> restarts;  // (client, finished batch size)
        while (pending.size() >= K && rounds.size() < static_cast<size_t>(cfg.rounds)) {
            std::vector<Pending> take(std::make_move_iterator(pending.begin()),
                                      std::make_move_iterator(pending.begin() + K));
            pending.erase(pending.begin(), pending.begin() + K);
            std::sort(take.begin(), take.end(),
                      [](const Pending& a, const Pending& b) { return a.m < b.m; });
            RoundTrace rt;
            rt.round = static_cast<int64_t>(rounds.size());
            rt.server_fwd_cycles = srv_fwd;
            rt.server_bwd_cycles = srv_bwd;
            srv_fwd = srv_bwd = 0;
            if (!server_seg.empty()) {
                std::vector<const ParamGrads*> gs;
                std::vector<double> ws;
                for (const auto& p : take) {
                    gs.push_back(&p.server_grads);
                    ws.push_back(static_cast<double>(p.batch));
                }
                sgd_step(server_seg, protodetail::mean_param_grads(gs, ws), cfg.lr);
                quantize_weights_step(server_seg, comp.weight_bits_for("server"));
            }
            for (const auto& p : take) rt.staleness.push_back(version - p.stamped_version);
            ++version;
            for (auto& p : take) {
                for (auto& msg : p.uplink_msgs) {
                    msg.round = rt.round;
                    rt.trace.messages.push_back(std::move(msg));
                }
                ClientState& c = clients[p.m];
                if (cut > 0) {
                    auto down = protodetail::send_cut_payload(p.cut_grad, comp);
                    rt.trace.add(names.server, names.clients[c.id], PayloadKind::Grad, down.bytes,
                                 rt.round, Phase::Downlink);
                    auto [gin, cgrads] =
                        backward_segment(profile, c.segments[0], p.client_cache, down.received);
                    (void)gin;
                    sgd_step(c.segments[0], cgrads, cfg.lr);
                    quantize_weights_step(c.segments[0], comp.weight_bits_for("client"));
                }
                restarts.push_back({p.m, p.batch});
            }
            rt.train_loss =
                loss_samples > 0 ? loss_acc / static_cast<double>(loss_samples) : 0.0;
            loss_acc = 0.0;
            loss_samples = 0;
            rt.phases.round_total = now - last_update_time;
            last_update_time = now;
            rounds.push_back(std::move(rt));
        }
        // clients whose gradients were applied restart once the server's
        // burst at this timestamp is over; their new cycle syncs to the
        // post-burst version, which is what staleness is measured against
        for (auto [m, b] : restarts) {
            cycle_start_version[m] = version;
            double restart = now + down_bwd_time(m, b);
            inflight_batch[m] = client_batch(m);
            queue.push_back(
                {restart + fwd_uplink_time(m, static_cast<int64_t>(inflight_batch[m].size())), m});
        }
    }
    return rounds;
}

/// Stitched evaluation: run the test set through an ordered chain of
/// segments, report top-1 accuracy.
inline double evaluate_chain(const ModelProfile& profile,
                             const std::vector<const SegmentState*>& chain, const Dataset& test) {
    Tensor x = test.xs;
    for (const SegmentState* seg : chain) x = forward_segment(profile, *seg, x).first;
    int64_t correct = 0;
    int64_t n = x.shape[0];
    int64_t k = x.shape[1];
    for (int64_t i = 0; i < n; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j)
            if (x.at2(i, j) > x.at2(i, best)) best = j;
        if (static_cast<int>(best) == test.labels[static_cast<size_t>(i)]) ++correct;
    }
    return n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

}  // namespace selsim
