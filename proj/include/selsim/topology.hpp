#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace selsim {

enum class Tier { Client, Edge, Fed, Cloud };

inline const char* tier_name(Tier t) {
    switch (t) {
        case Tier::Client: return "client";
        case Tier::Edge: return "edge";
        case Tier::Fed: return "fed";
        case Tier::Cloud: return "cloud";
    }
    return "?";
}

inline Tier tier_from(const std::string& s) {
    if (s == "client") return Tier::Client;
    if (s == "edge") return Tier::Edge;
    if (s == "fed") return Tier::Fed;
    if (s == "cloud") return Tier::Cloud;
    throw std::invalid_argument("unknown tier: " + s);
}

struct NodeSpec {
    std::string id;
    Tier tier = Tier::Client;
    double compute_rate = 1e9;              // cycles/s
    int64_t memory_bytes = int64_t(1) << 62;  // effectively unbounded by default
};

struct LinkSpec {
    std::string src;
    std::string dst;
    double rate = 1e6;  // bits/s
};

/// Nodes plus directed links, with an optional shared spectrum pool that
/// client uplinks/downlinks draw from (rate = allocated Hz x spectral
/// efficiency). Non-client links always use their LinkSpec rate.
struct Topology {
    std::vector<NodeSpec> nodes;
    std::vector<LinkSpec> links;
    double total_bandwidth_hz = 0.0;      // 0 = no shared pool
    double spectral_efficiency = 1.0;     // bits/s/Hz

    const NodeSpec* find_node(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    const NodeSpec& node(const std::string& id) const {
        const NodeSpec* n = find_node(id);
        if (!n) throw std::invalid_argument("topology: unknown node '" + id + "'");
        return *n;
    }

    const LinkSpec* find_link(const std::string& src, const std::string& dst) const {
        for (const auto& l : links)
            if (l.src == src && l.dst == dst) return &l;
        return nullptr;
    }

    double link_rate(const std::string& src, const std::string& dst) const {
        const LinkSpec* l = find_link(src, dst);
        if (!l) throw std::invalid_argument("topology: no link " + src + " -> " + dst);
        return l->rate;
    }

    std::vector<std::string> client_ids() const {
        std::vector<std::string> out;
        for (const auto& n : nodes)
            if (n.tier == Tier::Client) out.push_back(n.id);
        return out;
    }

    void validate() const {
        for (const auto& n : nodes) {
            if (n.compute_rate <= 0)
                throw std::invalid_argument("topology: node '" + n.id + "' compute_rate must be > 0");
            if (n.memory_bytes <= 0)
                throw std::invalid_argument("topology: node '" + n.id + "' memory_bytes must be > 0");
        }
        for (const auto& l : links) {
            if (l.rate <= 0)
                throw std::invalid_argument("topology: link " + l.src + " -> " + l.dst +
                                            " rate must be > 0");
            if (!find_node(l.src) || !find_node(l.dst))
                throw std::invalid_argument("topology: link " + l.src + " -> " + l.dst +
                                            " references unknown node");
        }
        if (total_bandwidth_hz < 0 || spectral_efficiency <= 0)
            throw std::invalid_argument("topology: bad spectrum pool parameters");
    }
};

/// Per-client spectrum and server compute shares. Sums must fit the pools:
/// uplink and downlink Hz each within total_bandwidth_hz, compute shares
/// within 1.
struct Allocation {
    std::vector<double> uplink_hz;
    std::vector<double> downlink_hz;
    std::vector<double> server_share;

    void validate(const Topology& topo, size_t clients) const {
        if (uplink_hz.size() != clients || downlink_hz.size() != clients ||
            server_share.size() != clients)
            throw std::invalid_argument("allocation: per-client vectors must have length " +
                                        std::to_string(clients));
        double up = 0, down = 0, share = 0;
        for (size_t i = 0; i < clients; ++i) {
            if (uplink_hz[i] < 0 || downlink_hz[i] < 0 || server_share[i] < 0)
                throw std::invalid_argument("allocation: negative share for client " +
                                            std::to_string(i));
            up += uplink_hz[i];
            down += downlink_hz[i];
            share += server_share[i];
        }
        const double tol = 1e-9;
        if (topo.total_bandwidth_hz > 0 &&
            (up > topo.total_bandwidth_hz * (1 + tol) || down > topo.total_bandwidth_hz * (1 + tol)))
            throw std::invalid_argument("allocation: spectrum shares exceed the pool");
        if (share > 1.0 + tol)
            throw std::invalid_argument("allocation: server compute shares exceed 1");
    }

    static Allocation equal(const Topology& topo, size_t clients) {
        Allocation a;
        double hz = topo.total_bandwidth_hz > 0 ? topo.total_bandwidth_hz / static_cast<double>(clients)
                                                : 0.0;
        a.uplink_hz.assign(clients, hz);
        a.downlink_hz.assign(clients, hz);
        a.server_share.assign(clients, 1.0 / static_cast<double>(clients));
        return a;
    }
};

}  // namespace selsim
