#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace selsim {

enum class PayloadKind { Activation, Grad, ClientModel, ServerModel, Label };

inline const char* payload_kind_name(PayloadKind k) {
    switch (k) {
        case PayloadKind::Activation: return "activation";
        case PayloadKind::Grad: return "grad";
        case PayloadKind::ClientModel: return "client_model";
        case PayloadKind::ServerModel: return "server_model";
        case PayloadKind::Label: return "label";
    }
    return "?";
}

enum class Phase { Uplink, Downlink, Relay, Averaging };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Uplink: return "uplink";
        case Phase::Downlink: return "downlink";
        case Phase::Relay: return "relay";
        case Phase::Averaging: return "averaging";
    }
    return "?";
}

struct Message {
    std::string src;
    std::string dst;
    PayloadKind kind = PayloadKind::Activation;
    int64_t bytes = 0;
    int64_t round = 0;
    Phase phase = Phase::Uplink;
};

/// Ordered log of everything that crossed a link.
struct MessageTrace {
    std::vector<Message> messages;

    void add(std::string src, std::string dst, PayloadKind kind, int64_t bytes, int64_t round,
             Phase phase) {
        messages.push_back({std::move(src), std::move(dst), kind, bytes, round, phase});
    }

    int64_t total_bytes() const {
        int64_t n = 0;
        for (const auto& m : messages) n += m.bytes;
        return n;
    }

    int64_t bytes_of_kind(PayloadKind k) const {
        int64_t n = 0;
        for (const auto& m : messages)
            if (m.kind == k) n += m.bytes;
        return n;
    }

    std::map<std::pair<std::string, std::string>, int64_t> bytes_by_link() const {
        std::map<std::pair<std::string, std::string>, int64_t> out;
        for (const auto& m : messages) out[{m.src, m.dst}] += m.bytes;
        return out;
    }
};

/// Wall-clock phase latencies of one round, in seconds. For lock-step
/// protocols round_total is the phase sum; the async engine sets it to the
/// simulated time the update cycle actually took.
struct PhaseLatencies {
    double fwd_up = 0.0;    // client forward + uplink
    double server = 0.0;    // server-side compute
    double down_bwd = 0.0;  // downlink + client backward (and tail work)
    double averaging = 0.0; // model averaging transfers
    double round_total = 0.0;

    void finalize() { round_total = fwd_up + server + down_bwd + averaging; }
};

/// One round of one protocol run: what moved, what it cost and what the model
/// looked like afterwards.
struct RoundTrace {
    int64_t round = 0;
    MessageTrace trace;
    PhaseLatencies phases;
    double train_loss = 0.0;
    double eval_accuracy = -1.0;  // filled by the harness when it evaluates
    double server_fwd_cycles = 0.0;
    double server_bwd_cycles = 0.0;
    std::vector<int64_t> staleness;  // async only, one entry per applied contribution

    int64_t max_staleness() const {
        int64_t m = 0;
        for (int64_t s : staleness) m = std::max(m, s);
        return m;
    }
    double mean_staleness() const {
        if (staleness.empty()) return 0.0;
        double s = 0.0;
        for (int64_t v : staleness) s += static_cast<double>(v);
        return s / static_cast<double>(staleness.size());
    }
};

}  // namespace selsim
