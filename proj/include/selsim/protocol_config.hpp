#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace selsim {

enum class ProtocolKind { FedAvg, VanillaSl, Sfl, Psl, Epsl, Ushaped, AsyncPsl };

inline const char* protocol_kind_name(ProtocolKind k) {
    switch (k) {
        case ProtocolKind::FedAvg: return "fedavg";
        case ProtocolKind::VanillaSl: return "vanilla_sl";
        case ProtocolKind::Sfl: return "sfl";
        case ProtocolKind::Psl: return "psl";
        case ProtocolKind::Epsl: return "epsl";
        case ProtocolKind::Ushaped: return "ushaped";
        case ProtocolKind::AsyncPsl: return "async_psl";
    }
    return "?";
}

inline ProtocolKind protocol_kind_from(const std::string& s) {
    if (s == "fedavg") return ProtocolKind::FedAvg;
    if (s == "vanilla_sl") return ProtocolKind::VanillaSl;
    if (s == "sfl") return ProtocolKind::Sfl;
    if (s == "psl") return ProtocolKind::Psl;
    if (s == "epsl") return ProtocolKind::Epsl;
    if (s == "ushaped") return ProtocolKind::Ushaped;
    if (s == "async_psl") return ProtocolKind::AsyncPsl;
    throw std::invalid_argument("unknown protocol kind: " + s);
}

struct ProtocolConfig {
    ProtocolKind kind = ProtocolKind::Psl;
    int64_t cut = 1;        // split layer index, 0..L
    int64_t cut2 = -1;      // second cut for ushaped, cut < cut2 < L
    double epsl_phi = 0.0;  // aggregation ratio, [0,1]
    int64_t sfl_avg_period = 1;  // tau, rounds between fed averaging
    int64_t async_quorum = 1;    // K, gradients per server update
    double lr = 0.05;
    int64_t rounds = 1;
    int64_t batch_size = 16;
    uint64_t seed = 1;

    void validate(int64_t model_layers, int64_t clients) const {
        if (cut < 0 || cut > model_layers)
            throw std::invalid_argument("protocol: cut " + std::to_string(cut) +
                                        " out of range 0.." + std::to_string(model_layers));
        if (kind == ProtocolKind::Ushaped &&
            !(cut > 0 && cut2 > cut && cut2 < model_layers))
            throw std::invalid_argument("protocol: ushaped needs 0 < cut < cut2 < L, got cut=" +
                                        std::to_string(cut) + " cut2=" + std::to_string(cut2));
        if (epsl_phi < 0.0 || epsl_phi > 1.0)
            throw std::invalid_argument("protocol: epsl_phi must be in [0,1]");
        if (sfl_avg_period < 1)
            throw std::invalid_argument("protocol: sfl_avg_period must be >= 1");
        if (kind == ProtocolKind::AsyncPsl &&
            (async_quorum < 1 || async_quorum > clients))
            throw std::invalid_argument("protocol: async_quorum must be in [1, " +
                                        std::to_string(clients) + "]");
        if (lr <= 0.0) throw std::invalid_argument("protocol: lr must be > 0");
        if (rounds < 1) throw std::invalid_argument("protocol: rounds must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("protocol: batch_size must be >= 1");
    }
};

}  // namespace selsim
