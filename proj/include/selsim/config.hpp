#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "selsim/compression.hpp"
#include "selsim/model.hpp"
#include "selsim/protocol_config.hpp"
#include "selsim/topology.hpp"

namespace selsim {

/// Configuration problems exit with code 2; everything else is a runtime
/// error (exit 1).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

using Json = nlohmann::json;

namespace cfgdetail {

inline std::string line_of_offset(const std::string& text, size_t byte) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void require_keys(const Json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const Json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("bad value type for '" + key + "'");
    }
}

template <typename T>
T need(const Json& obj, const std::string& where, const std::string& key) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + ": bad value type for '" + key + "'");
    }
}

}  // namespace cfgdetail

struct DatasetConfig {
    std::string kind = "blobs";  // blobs | two_moons
    int64_t n = 1000;
    int classes = 4;
    int64_t dim = 8;
    double noise = 0.5;
    int clients = 2;
    std::string partition = "iid";  // iid | dirichlet
    double dirichlet_beta = 0.5;
    double eval_fraction = 0.2;
};

struct AllocationConfig {
    std::string mode = "static-equal";  // static-equal | minmax | explicit
    std::vector<double> uplink_hz;
    std::vector<double> downlink_hz;
    std::vector<double> server_share;
};

struct LatencySweepConfig {
    std::vector<int64_t> dataset_sizes;
    int64_t rounds_to_target = 50;
    std::string edge = "edge";
    std::string cloud = "cloud";
};

struct PlannerConfig {
    std::string kind = "split_layer";  // split_layer | hierarchical | multihop
    std::string source;
    std::vector<std::string> destinations;
    int64_t batch = 16;
    std::string edge = "edge";
    std::string cloud = "cloud";
};

struct SweepConfig {
    std::string parameter;  // dotted path, e.g. protocol.kind or dataset.clients
    std::vector<Json> values;
    std::vector<uint64_t> seeds;
};

struct ClientComputeConfig {
    double min_rate = 1e9;
    double max_rate = 1e9;
};

struct RunConfig {
    uint64_t seed = 1;
    std::string output_dir = "out";
    ProtocolConfig protocol;
    std::string model_preset = "mlp4";
    int64_t model_hidden = 16;
    std::vector<LayerSpec> model_layers;  // non-empty overrides the preset
    DatasetConfig dataset;
    Topology topology;
    ClientComputeConfig client_compute;
    AllocationConfig allocation;
    CompressionSpec compression;
    std::optional<LatencySweepConfig> latency_sweep;
    std::optional<PlannerConfig> planner;
    std::optional<SweepConfig> sweep;
    std::string plan_file;

    ModelProfile build_profile() const {
        if (!model_layers.empty()) return ModelProfile(model_layers);
        if (model_preset == "mlp4")
            return mlp4_profile(dataset.kind == "two_moons" ? 2 : dataset.dim, model_hidden,
                                dataset.kind == "two_moons" ? 2 : dataset.classes);
        if (model_preset == "shrinking")
            return shrinking_profile(dataset.dim, dataset.classes);
        if (model_preset == "convlike")
            return convlike_profile(dataset.dim, dataset.classes);
        throw ConfigError("model: unknown preset '" + model_preset + "'");
    }
};

namespace cfgdetail {

inline LayerSpec layer_from_json(const Json& j, size_t index) {
    std::string where = "model.layers[" + std::to_string(index) + "]";
    require_keys(j, where,
                 {"kind", "in", "out", "shape", "in_ch", "out_ch", "h", "w", "fwd_cycles",
                  "bwd_cycles"});
    std::string kind = need<std::string>(j, where, "kind");
    LayerSpec s;
    if (kind == "dense") {
        s = make_dense(need<int64_t>(j, where, "in"), need<int64_t>(j, where, "out"));
    } else if (kind == "relu") {
        s = make_relu(need<std::vector<int64_t>>(j, where, "shape"));
    } else if (kind == "flatten") {
        s = make_flatten(need<std::vector<int64_t>>(j, where, "shape"));
    } else if (kind == "softmax-head") {
        auto shape = need<std::vector<int64_t>>(j, where, "shape");
        if (shape.size() != 1) throw ConfigError(where + ": softmax-head shape must be 1-d");
        s = make_softmax_head(shape[0]);
    } else if (kind == "conv2d-small") {
        s = make_conv2d_small(need<int64_t>(j, where, "in_ch"), need<int64_t>(j, where, "out_ch"),
                              need<int64_t>(j, where, "h"), need<int64_t>(j, where, "w"));
    } else {
        throw ConfigError(where + ": unknown layer kind '" + kind + "'");
    }
    if (j.contains("fwd_cycles")) s.fwd_cycles_per_sample = need<double>(j, where, "fwd_cycles");
    if (j.contains("bwd_cycles")) s.bwd_cycles_per_sample = need<double>(j, where, "bwd_cycles");
    return s;
}

}  // namespace cfgdetail

inline RunConfig parse_run_config_impl(const Json& root) {
    using namespace cfgdetail;
    require_keys(root, "config",
                 {"seed", "output_dir", "protocol", "model", "dataset", "topology", "allocation",
                  "compression", "latency_sweep", "planner", "sweep", "plan_file"});
    RunConfig cfg;
    cfg.seed = get_or<uint64_t>(root, "seed", 1);
    cfg.output_dir = get_or<std::string>(root, "output_dir", "out");
    cfg.plan_file = get_or<std::string>(root, "plan_file", "");

    if (root.contains("protocol")) {
        const Json& p = root.at("protocol");
        require_keys(p, "protocol",
                     {"kind", "cut", "cut2", "epsl_phi", "sfl_avg_period", "async_quorum", "lr",
                      "rounds", "batch_size"});
        cfg.protocol.kind = protocol_kind_from(get_or<std::string>(p, "kind", "psl"));
        cfg.protocol.cut = get_or<int64_t>(p, "cut", 1);
        cfg.protocol.cut2 = get_or<int64_t>(p, "cut2", -1);
        cfg.protocol.epsl_phi = get_or<double>(p, "epsl_phi", 0.0);
        cfg.protocol.sfl_avg_period = get_or<int64_t>(p, "sfl_avg_period", 1);
        cfg.protocol.async_quorum = get_or<int64_t>(p, "async_quorum", 1);
        cfg.protocol.lr = get_or<double>(p, "lr", 0.05);
        cfg.protocol.rounds = get_or<int64_t>(p, "rounds", 1);
        cfg.protocol.batch_size = get_or<int64_t>(p, "batch_size", 16);
    }
    cfg.protocol.seed = cfg.seed;

    if (root.contains("model")) {
        const Json& m = root.at("model");
        require_keys(m, "model", {"preset", "hidden", "layers"});
        cfg.model_preset = get_or<std::string>(m, "preset", "mlp4");
        cfg.model_hidden = get_or<int64_t>(m, "hidden", 16);
        if (m.contains("layers")) {
            if (!m.at("layers").is_array()) throw ConfigError("model.layers: expected an array");
            size_t i = 0;
            for (const auto& lj : m.at("layers")) cfg.model_layers.push_back(layer_from_json(lj, i++));
        }
    }

    if (root.contains("dataset")) {
        const Json& d = root.at("dataset");
        require_keys(d, "dataset",
                     {"kind", "n", "classes", "dim", "noise", "clients", "partition",
                      "dirichlet_beta", "eval_fraction"});
        cfg.dataset.kind = get_or<std::string>(d, "kind", "blobs");
        if (cfg.dataset.kind != "blobs" && cfg.dataset.kind != "two_moons")
            throw ConfigError("dataset.kind: must be 'blobs' or 'two_moons'");
        cfg.dataset.n = get_or<int64_t>(d, "n", 1000);
        cfg.dataset.classes = get_or<int>(d, "classes", 4);
        cfg.dataset.dim = get_or<int64_t>(d, "dim", 8);
        cfg.dataset.noise = get_or<double>(d, "noise", 0.5);
        cfg.dataset.clients = get_or<int>(d, "clients", 2);
        cfg.dataset.partition = get_or<std::string>(d, "partition", "iid");
        if (cfg.dataset.partition != "iid" && cfg.dataset.partition != "dirichlet")
            throw ConfigError("dataset.partition: must be 'iid' or 'dirichlet'");
        cfg.dataset.dirichlet_beta = get_or<double>(d, "dirichlet_beta", 0.5);
        cfg.dataset.eval_fraction = get_or<double>(d, "eval_fraction", 0.2);
        if (cfg.dataset.clients < 1) throw ConfigError("dataset.clients: must be >= 1");
        if (cfg.dataset.n < cfg.dataset.clients)
            throw ConfigError("dataset.n: need at least one sample per client");
        if (cfg.dataset.eval_fraction <= 0 || cfg.dataset.eval_fraction > 1)
            throw ConfigError("dataset.eval_fraction: must be in (0, 1]");
    }

    if (root.contains("topology")) {
        const Json& t = root.at("topology");
        require_keys(t, "topology",
                     {"total_bandwidth_hz", "spectral_efficiency", "nodes", "links",
                      "client_compute"});
        cfg.topology.total_bandwidth_hz = get_or<double>(t, "total_bandwidth_hz", 70e6);
        cfg.topology.spectral_efficiency = get_or<double>(t, "spectral_efficiency", 1.0);
        if (t.contains("nodes")) {
            for (const auto& nj : t.at("nodes")) {
                require_keys(nj, "topology.nodes[]", {"id", "tier", "compute_rate", "memory_bytes"});
                NodeSpec n;
                n.id = need<std::string>(nj, "topology.nodes[]", "id");
                n.tier = tier_from(get_or<std::string>(nj, "tier", "edge"));
                n.compute_rate = get_or<double>(nj, "compute_rate", 1e9);
                n.memory_bytes = get_or<int64_t>(nj, "memory_bytes", int64_t(1) << 62);
                cfg.topology.nodes.push_back(n);
            }
        }
        if (t.contains("links")) {
            for (const auto& lj : t.at("links")) {
                require_keys(lj, "topology.links[]", {"src", "dst", "rate"});
                cfg.topology.links.push_back({need<std::string>(lj, "topology.links[]", "src"),
                                              need<std::string>(lj, "topology.links[]", "dst"),
                                              need<double>(lj, "topology.links[]", "rate")});
            }
        }
        if (t.contains("client_compute")) {
            const Json& c = t.at("client_compute");
            require_keys(c, "topology.client_compute", {"rate", "min", "max"});
            if (c.contains("rate")) {
                cfg.client_compute.min_rate = cfg.client_compute.max_rate =
                    need<double>(c, "topology.client_compute", "rate");
            } else {
                cfg.client_compute.min_rate = need<double>(c, "topology.client_compute", "min");
                cfg.client_compute.max_rate = need<double>(c, "topology.client_compute", "max");
            }
        }
    } else {
        cfg.topology.total_bandwidth_hz = 70e6;
        cfg.topology.spectral_efficiency = 1.0;
    }

    if (root.contains("allocation")) {
        const Json& a = root.at("allocation");
        require_keys(a, "allocation", {"mode", "uplink_hz", "downlink_hz", "server_share"});
        cfg.allocation.mode = get_or<std::string>(a, "mode", "static-equal");
        if (cfg.allocation.mode != "static-equal" && cfg.allocation.mode != "minmax" &&
            cfg.allocation.mode != "explicit")
            throw ConfigError("allocation.mode: must be static-equal, minmax or explicit");
        cfg.allocation.uplink_hz = get_or<std::vector<double>>(a, "uplink_hz", {});
        cfg.allocation.downlink_hz = get_or<std::vector<double>>(a, "downlink_hz", {});
        cfg.allocation.server_share = get_or<std::vector<double>>(a, "server_share", {});
        if (cfg.allocation.mode == "explicit" &&
            (cfg.allocation.uplink_hz.empty() || cfg.allocation.downlink_hz.empty() ||
             cfg.allocation.server_share.empty()))
            throw ConfigError("allocation: explicit mode needs uplink_hz, downlink_hz, server_share");
    }

    if (root.contains("compression")) {
        const Json& c = root.at("compression");
        require_keys(c, "compression", {"activation_bits", "topk_ratio", "weight_bits"});
        cfg.compression.activation_bits = get_or<int>(c, "activation_bits", 32);
        cfg.compression.topk_ratio = get_or<double>(c, "topk_ratio", 1.0);
        if (c.contains("weight_bits")) {
            const Json& wb = c.at("weight_bits");
            require_keys(wb, "compression.weight_bits", {"client", "server", "edge", "cloud", "fed"});
            for (auto it = wb.begin(); it != wb.end(); ++it)
                cfg.compression.weight_bits[it.key()] = it.value().get<int>();
        }
        try {
            cfg.compression.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    if (root.contains("latency_sweep")) {
        const Json& l = root.at("latency_sweep");
        require_keys(l, "latency_sweep", {"dataset_sizes", "rounds_to_target", "edge", "cloud"});
        LatencySweepConfig ls;
        ls.dataset_sizes = need<std::vector<int64_t>>(l, "latency_sweep", "dataset_sizes");
        if (ls.dataset_sizes.empty()) throw ConfigError("latency_sweep.dataset_sizes: empty");
        ls.rounds_to_target = get_or<int64_t>(l, "rounds_to_target", 50);
        ls.edge = get_or<std::string>(l, "edge", "edge");
        ls.cloud = get_or<std::string>(l, "cloud", "cloud");
        cfg.latency_sweep = ls;
    }

    if (root.contains("planner")) {
        const Json& p = root.at("planner");
        require_keys(p, "planner", {"kind", "source", "destinations", "batch", "edge", "cloud"});
        PlannerConfig pc;
        pc.kind = get_or<std::string>(p, "kind", "split_layer");
        if (pc.kind != "split_layer" && pc.kind != "hierarchical" && pc.kind != "multihop")
            throw ConfigError("planner.kind: must be split_layer, hierarchical or multihop");
        pc.source = get_or<std::string>(p, "source", "");
        pc.destinations = get_or<std::vector<std::string>>(p, "destinations", {});
        pc.batch = get_or<int64_t>(p, "batch", 16);
        pc.edge = get_or<std::string>(p, "edge", "edge");
        pc.cloud = get_or<std::string>(p, "cloud", "cloud");
        cfg.planner = pc;
    }

    if (root.contains("sweep")) {
        const Json& s = root.at("sweep");
        require_keys(s, "sweep", {"parameter", "values", "seeds"});
        SweepConfig sw;
        sw.parameter = need<std::string>(s, "sweep", "parameter");
        if (!s.contains("values") || !s.at("values").is_array() || s.at("values").empty())
            throw ConfigError("sweep.values: need a non-empty array");
        for (const auto& v : s.at("values")) sw.values.push_back(v);
        sw.seeds = get_or<std::vector<uint64_t>>(s, "seeds", {cfg.seed});
        cfg.sweep = sw;
    }

    return cfg;
}

inline RunConfig parse_run_config(const Json& root) {
    try {
        return parse_run_config_impl(root);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": parse error at " + cfgdetail::line_of_offset(text, e.byte) +
                          ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path) {
    try {
        return parse_run_config(load_json_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace selsim
