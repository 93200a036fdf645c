#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "selsim/allocator.hpp"
#include "selsim/config.hpp"
#include "selsim/csv.hpp"
#include "selsim/dataset.hpp"
#include "selsim/planner.hpp"
#include "selsim/protocols.hpp"
#include "selsim/svg.hpp"

namespace selsim {

inline const std::vector<std::string> kTraceHeader = {
    "round",      "t_fwd_up_s",     "t_server_s",  "t_down_bwd_s",  "t_avg_s",
    "t_round_s",  "bytes_up",       "bytes_down",  "bytes_grad_down", "bytes_total",
    "train_loss", "eval_accuracy",  "staleness_max", "staleness_mean"};
constexpr int kTraceSchemaVersion = 1;

struct PreparedRun {
    ModelProfile profile;
    Dataset eval_set;
    std::vector<ClientState> clients;
    Topology topo;
    NodeNames names;
    Allocation alloc;
    std::vector<ClientLoad> loads;
    SegmentState server_seg;      // [cut, L) or the U-shape middle
    SegmentState shared_client;   // vanilla SL relay model
    SegmentState global_model;    // fedavg
};

namespace rundetail {

inline Dataset build_dataset(const RunConfig& cfg, std::string_view split) {
    int64_t n = cfg.dataset.n;
    if (split != "train")
        n = std::max<int64_t>(8, static_cast<int64_t>(
                                     std::llround(cfg.dataset.eval_fraction *
                                                  static_cast<double>(cfg.dataset.n))));
    if (cfg.dataset.kind == "two_moons") return make_two_moons(n, cfg.dataset.noise, cfg.seed, split);
    return make_blobs(n, cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.noise, cfg.seed, split);
}

inline void complete_topology(RunConfig& cfg) {
    Topology& t = cfg.topology;
    size_t declared_clients = t.client_ids().size();
    if (declared_clients == 0) {
        for (int m = 0; m < cfg.dataset.clients; ++m) {
            Rng r(derive_seed(cfg.seed, "client-rate", static_cast<uint64_t>(m)));
            double rate = cfg.client_compute.min_rate == cfg.client_compute.max_rate
                              ? cfg.client_compute.min_rate
                              : r.uniform(cfg.client_compute.min_rate, cfg.client_compute.max_rate);
            t.nodes.push_back({"client-" + std::to_string(m), Tier::Client, rate});
        }
    } else if (declared_clients != static_cast<size_t>(cfg.dataset.clients)) {
        throw ConfigError("topology: declares " + std::to_string(declared_clients) +
                          " client nodes but dataset.clients is " +
                          std::to_string(cfg.dataset.clients));
    }
    if (!t.find_node("server")) t.nodes.push_back({"server", Tier::Edge, 7e9});
    if (!t.find_node("fed")) t.nodes.push_back({"fed", Tier::Fed, 1e9});
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline void apply_plan_file(RunConfig& cfg, const ModelProfile& profile) {
    if (cfg.plan_file.empty()) return;
    Json pj = load_json_file(cfg.plan_file);
    cfgdetail::require_keys(pj, "plan", {"segments", "path", "meta"});
    struct Seg {
        std::string node;
        int64_t first, last;
    };
    std::vector<Seg> segs;
    for (const auto& sj : pj.at("segments")) {
        cfgdetail::require_keys(sj, "plan.segments[]", {"node", "layers"});
        auto layers = cfgdetail::need<std::vector<int64_t>>(sj, "plan.segments[]", "layers");
        if (layers.size() != 2) throw ConfigError("plan.segments[].layers: expected [first, last]");
        segs.push_back({cfgdetail::need<std::string>(sj, "plan.segments[]", "node"), layers[0],
                        layers[1]});
    }
    auto is_client = [](const std::string& id) { return id.rfind("client", 0) == 0; };
    if (segs.size() == 1 && !is_client(segs[0].node)) {
        cfg.protocol.cut = 0;
    } else if (segs.size() == 1 && is_client(segs[0].node)) {
        cfg.protocol.cut = profile.L();
    } else if (segs.size() == 2 && is_client(segs[0].node) && segs[1].node == "server") {
        cfg.protocol.cut = segs[0].last;
    } else if (segs.size() == 3 && is_client(segs[0].node) && segs[1].node == "server" &&
               is_client(segs[2].node)) {
        cfg.protocol.cut = segs[0].last;
        cfg.protocol.cut2 = segs[1].last;
    } else {
        throw ConfigError("plan file '" + cfg.plan_file +
                          "' does not map onto a client/server training split "
                          "(chain and mesh plans feed the latency tools, not training)");
    }
}

inline PreparedRun prepare_run(RunConfig& cfg) {
    PreparedRun run;
    run.profile = cfg.build_profile();
    apply_plan_file(cfg, run.profile);
    try {
        cfg.protocol.validate(run.profile.L(), cfg.dataset.clients);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    complete_topology(cfg);
    run.topo = cfg.topology;

    Dataset train = build_dataset(cfg, "train");
    run.eval_set = build_dataset(cfg, "test");
    auto shards = cfg.dataset.partition == "dirichlet"
                      ? partition_dirichlet(train.labels, train.classes, cfg.dataset.clients,
                                            cfg.dataset.dirichlet_beta, cfg.seed)
                      : partition_iid(train.size(), cfg.dataset.clients, cfg.seed);

    const int64_t L = run.profile.L();
    const auto& pk = cfg.protocol.kind;
    for (int m = 0; m < cfg.dataset.clients; ++m) {
        ClientState c;
        c.id = static_cast<size_t>(m);
        c.sched_seed = c.id;
        c.shard = train.subset(shards[static_cast<size_t>(m)]);
        c.batch_size = std::min<int64_t>(cfg.protocol.batch_size, c.shard.size());
        if (cfg.protocol.batch_size > c.shard.size())
            throw ConfigError("protocol.batch_size " + std::to_string(cfg.protocol.batch_size) +
                              " exceeds client " + std::to_string(m) + "'s shard of " +
                              std::to_string(c.shard.size()) + " samples");
        if (pk == ProtocolKind::FedAvg) {
            c.segments.push_back(init_segment(run.profile, 0, L, cfg.seed));
        } else if (pk == ProtocolKind::Ushaped) {
            c.segments.push_back(init_segment(run.profile, 0, cfg.protocol.cut, cfg.seed));
            c.segments.push_back(init_segment(run.profile, cfg.protocol.cut2, L, cfg.seed));
        } else {
            c.segments.push_back(init_segment(run.profile, 0, cfg.protocol.cut, cfg.seed));
        }
        c.validate();
        run.clients.push_back(std::move(c));
        run.loads.push_back(
            {run.clients.back().batch_size, run.clients.back().shard.size()});
    }

    run.names.clients = run.topo.client_ids();
    run.names.server = "server";
    run.names.fed = "fed";

    if (pk == ProtocolKind::Ushaped) {
        run.server_seg = init_segment(run.profile, cfg.protocol.cut, cfg.protocol.cut2, cfg.seed);
    } else if (pk == ProtocolKind::FedAvg) {
        run.global_model = init_segment(run.profile, 0, L, cfg.seed);
    } else {
        run.server_seg = init_segment(run.profile, cfg.protocol.cut, L, cfg.seed);
        if (pk == ProtocolKind::VanillaSl)
            run.shared_client = init_segment(run.profile, 0, cfg.protocol.cut, cfg.seed);
    }

    const size_t M = run.clients.size();
    if (cfg.allocation.mode == "explicit") {
        run.alloc.uplink_hz = cfg.allocation.uplink_hz;
        run.alloc.downlink_hz = cfg.allocation.downlink_hz;
        run.alloc.server_share = cfg.allocation.server_share;
    } else if (cfg.allocation.mode == "minmax") {
        double server_rate = run.topo.node("server").compute_rate;
        std::vector<ClientWorkload> work;
        if (pk == ProtocolKind::FedAvg) {
            // bandwidth phases carry the model blob; compute stays local
            int64_t model_bits =
                bytes_of({run.profile.total_params()}, cfg.compression.weight_bits_for("client")) *
                8;
            for (size_t m = 0; m < M; ++m) {
                ClientWorkload w;
                w.uplink_bits = static_cast<double>(model_bits);
                w.downlink_bits = static_cast<double>(model_bits);
                work.push_back(w);
            }
        } else if (pk == ProtocolKind::Ushaped) {
            for (size_t m = 0; m < M; ++m) {
                ClientWorkload w;
                double f = run.topo.node(run.names.clients[m]).compute_rate;
                double steps = static_cast<double>(run.loads[m].steps());
                double b = static_cast<double>(run.loads[m].batch_size);
                w.fwd_seconds = steps * run.profile.fwd_cycles(0, cfg.protocol.cut) * b / f;
                w.bwd_seconds =
                    steps *
                    (run.profile.bwd_cycles(0, cfg.protocol.cut) +
                     run.profile.fwd_cycles(cfg.protocol.cut2, L) +
                     run.profile.bwd_cycles(cfg.protocol.cut2, L)) *
                    b / f;
                int64_t up = cut_payload_bytes(run.profile, cfg.protocol.cut, run.loads[m].batch_size,
                                               cfg.compression) +
                             cut_payload_bytes(run.profile, cfg.protocol.cut2,
                                               run.loads[m].batch_size, cfg.compression);
                w.uplink_bits = steps * 8.0 * static_cast<double>(up);
                w.downlink_bits = w.uplink_bits;
                w.server_cycles = steps *
                                  (run.profile.fwd_cycles(cfg.protocol.cut, cfg.protocol.cut2) +
                                   run.profile.bwd_cycles(cfg.protocol.cut, cfg.protocol.cut2)) *
                                  b;
                work.push_back(w);
            }
        } else {
            work = split_workloads(run.profile, cfg.protocol.cut, run.topo, run.names, run.loads,
                                   cfg.compression);
        }
        try {
            run.alloc = allocate_minmax(work, run.topo, server_rate).allocation;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else {
        run.alloc = Allocation::equal(run.topo, M);
    }
    try {
        run.alloc.validate(run.topo, M);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return run;
}

inline double evaluate_run(const RunConfig& cfg, const PreparedRun& run) {
    const auto pk = cfg.protocol.kind;
    if (pk == ProtocolKind::FedAvg)
        return evaluate_chain(run.profile, {&run.global_model}, run.eval_set);
    if (pk == ProtocolKind::VanillaSl)
        return evaluate_chain(run.profile, {&run.shared_client, &run.server_seg}, run.eval_set);
    double acc = 0.0;
    for (const auto& c : run.clients) {
        if (pk == ProtocolKind::Ushaped)
            acc += evaluate_chain(run.profile, {&c.segments[0], &run.server_seg, &c.segments[1]},
                                  run.eval_set);
        else
            acc += evaluate_chain(run.profile, {&c.segments[0], &run.server_seg}, run.eval_set);
    }
    return acc / static_cast<double>(run.clients.size());
}

inline std::string sanitize_for_path(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
    return s.empty() ? std::string("value") : s;
}

/// Exact per-client loads for a dataset of n samples partitioned the same way
/// training would partition it, so planner byte predictions match traces.
inline std::vector<ClientLoad> dataset_loads(const RunConfig& cfg, int64_t n) {
    RunConfig sized = cfg;
    sized.dataset.n = n;
    Dataset train = build_dataset(sized, "train");
    auto shards = cfg.dataset.partition == "dirichlet"
                      ? partition_dirichlet(train.labels, train.classes, cfg.dataset.clients,
                                            cfg.dataset.dirichlet_beta, cfg.seed)
                      : partition_iid(train.size(), cfg.dataset.clients, cfg.seed);
    std::vector<ClientLoad> loads;
    for (const auto& s : shards) {
        int64_t size = static_cast<int64_t>(s.size());
        loads.push_back({std::min<int64_t>(cfg.protocol.batch_size, size), size});
    }
    return loads;
}

}  // namespace rundetail

struct RunSummary {
    double final_accuracy = 0.0;
    double final_train_loss = 0.0;
    double total_sim_seconds = 0.0;
    int64_t total_bytes = 0;
    int64_t rounds = 0;
};

/// Runs the configured protocol end to end and persists trace.csv, links.csv,
/// messages.csv and summary.json under out_dir. Fully determined by
/// (config, seed).
inline RunSummary run_training(RunConfig cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    // prepare_run resolves plan files and completes the topology in place, so
    // everything below sees the cuts the run actually uses
    PreparedRun run = rundetail::prepare_run(cfg);
    fs::create_directories(out_dir);

    std::vector<RoundTrace> rounds;
    std::vector<double> accuracies;
    if (cfg.protocol.kind == ProtocolKind::AsyncPsl) {
        rounds = run_async_psl(run.profile, run.clients, run.server_seg, cfg.protocol, run.topo,
                               run.alloc, run.names, cfg.compression);
        // evaluation after the fact would see only final weights; async is
        // evaluated once per run
        for (size_t i = 0; i < rounds.size(); ++i) accuracies.push_back(-1.0);
        if (!rounds.empty()) accuracies.back() = rundetail::evaluate_run(cfg, run);
    } else {
        SplitPlan plan =
            cfg.protocol.kind == ProtocolKind::FedAvg
                ? SplitPlan{{{run.names.clients[0], 0, run.profile.L()}}}
                : SplitPlan::two_way(run.names.clients[0], run.names.server, cfg.protocol.cut,
                                     run.profile.L());
        if (cfg.protocol.kind == ProtocolKind::Ushaped) {
            plan.segments.clear();
            plan.segments.push_back({run.names.clients[0], 0, cfg.protocol.cut});
            plan.segments.push_back({run.names.server, cfg.protocol.cut, cfg.protocol.cut2});
            plan.segments.push_back({run.names.clients[0], cfg.protocol.cut2, run.profile.L()});
        }
        for (int64_t r = 0; r < cfg.protocol.rounds; ++r) {
            RoundTrace rt;
            switch (cfg.protocol.kind) {
                case ProtocolKind::FedAvg:
                    rt = run_round_fedavg(run.profile, run.clients, run.global_model, cfg.protocol,
                                          run.names, r, cfg.compression);
                    break;
                case ProtocolKind::VanillaSl:
                    rt = run_round_vanilla_sl(run.profile, run.clients, run.server_seg,
                                              run.shared_client, cfg.protocol, run.names, r,
                                              cfg.compression);
                    break;
                case ProtocolKind::Sfl:
                    rt = run_round_sfl(run.profile, run.clients, run.server_seg, cfg.protocol,
                                       run.names, r, cfg.compression);
                    break;
                case ProtocolKind::Psl:
                    rt = run_round_psl(run.profile, run.clients, run.server_seg, cfg.protocol,
                                       run.names, r, cfg.compression);
                    break;
                case ProtocolKind::Epsl:
                    rt = run_round_epsl(run.profile, run.clients, run.server_seg, cfg.protocol,
                                        run.names, r, cfg.compression);
                    break;
                case ProtocolKind::Ushaped:
                    rt = run_round_ushaped(run.profile, run.clients, run.server_seg, cfg.protocol,
                                           run.names, r, cfg.compression);
                    break;
                default:
                    throw ConfigError("unsupported protocol in sync path");
            }
            rt.phases = round_latency(cfg.protocol, plan, run.topo, run.alloc, run.profile,
                                      run.loads, run.names, cfg.compression, r)
                            .phases;
            rounds.push_back(std::move(rt));
            accuracies.push_back(rundetail::evaluate_run(cfg, run));
        }
    }

    CsvWriter trace_csv(out_dir + "/trace.csv", kTraceHeader);
    CsvWriter links_csv(out_dir + "/links.csv", {"round", "src", "dst", "bytes"});
    CsvWriter msg_csv(out_dir + "/messages.csv",
                      {"round", "phase", "src", "dst", "kind", "bytes"});
    RunSummary summary;
    std::map<std::string, int64_t> bytes_by_kind;
    for (size_t i = 0; i < rounds.size(); ++i) {
        const RoundTrace& rt = rounds[i];
        int64_t up = 0, down = 0, grad_down = 0;
        for (const auto& m : rt.trace.messages) {
            bool from_client = m.src.rfind("client", 0) == 0;
            (from_client ? up : down) += m.bytes;
            if (!from_client && m.kind == PayloadKind::Grad) grad_down += m.bytes;
            bytes_by_kind[payload_kind_name(m.kind)] += m.bytes;
            msg_csv.row({std::to_string(rt.round), phase_name(m.phase), m.src, m.dst,
                         payload_kind_name(m.kind), std::to_string(m.bytes)});
        }
        for (const auto& [link, bytes] : rt.trace.bytes_by_link())
            links_csv.row({std::to_string(rt.round), link.first, link.second,
                           std::to_string(bytes)});
        trace_csv.row({std::to_string(rt.round), fmt_double(rt.phases.fwd_up),
                       fmt_double(rt.phases.server), fmt_double(rt.phases.down_bwd),
                       fmt_double(rt.phases.averaging), fmt_double(rt.phases.round_total),
                       std::to_string(up), std::to_string(down), std::to_string(grad_down),
                       std::to_string(rt.trace.total_bytes()), fmt_double(rt.train_loss),
                       fmt_double(accuracies[i]), std::to_string(rt.max_staleness()),
                       fmt_double(rt.mean_staleness())});
        summary.total_bytes += rt.trace.total_bytes();
        summary.total_sim_seconds += rt.phases.round_total;
        summary.final_train_loss = rt.train_loss;
    }
    summary.rounds = static_cast<int64_t>(rounds.size());
    for (auto it = accuracies.rbegin(); it != accuracies.rend(); ++it)
        if (*it >= 0) {
            summary.final_accuracy = *it;
            break;
        }

    Json sj;
    sj["schema_version"] = kTraceSchemaVersion;
    sj["protocol"] = protocol_kind_name(cfg.protocol.kind);
    sj["seed"] = cfg.seed;
    sj["clients"] = cfg.dataset.clients;
    sj["rounds"] = summary.rounds;
    sj["cut"] = cfg.protocol.cut;
    sj["final_accuracy"] = summary.final_accuracy;
    sj["final_train_loss"] = summary.final_train_loss;
    sj["total_sim_seconds"] = summary.total_sim_seconds;
    sj["total_bytes"] = summary.total_bytes;
    sj["bytes_by_kind"] = bytes_by_kind;
    std::ofstream(out_dir + "/summary.json") << sj.dump(2) << "\n";
    return summary;
}

/// Latency of the three architectures (user-edge-cloud and the two-tier
/// degenerates) per swept dataset size; total = per-round x rounds-to-target.
inline void run_latency_sweep(const RunConfig& cfg, const std::string& out_dir) {
    if (!cfg.latency_sweep)
        throw ConfigError("latency: config needs a latency_sweep section");
    const LatencySweepConfig& ls = *cfg.latency_sweep;
    RunConfig complete = cfg;
    rundetail::complete_topology(complete);
    const Topology& topo = complete.topology;
    if (!topo.find_node(ls.edge) || !topo.find_node(ls.cloud))
        throw ConfigError("latency: topology must declare '" + ls.edge + "' and '" + ls.cloud +
                          "' tiers");
    ModelProfile profile = cfg.build_profile();
    NodeNames names;
    names.clients = topo.client_ids();
    const size_t M = names.clients.size();

    std::filesystem::create_directories(out_dir);
    CsvWriter csv(out_dir + "/latency.csv",
                  {"dataset_size", "architecture", "cut1", "cut2", "round_seconds",
                   "total_seconds"});
    for (int64_t n : ls.dataset_sizes) {
        std::vector<ClientLoad> loads = rundetail::dataset_loads(cfg, n);
        (void)M;
        HierarchicalPlan plan =
            plan_hierarchical(profile, topo, names, ls.edge, ls.cloud, loads, cfg.compression);
        double r = static_cast<double>(ls.rounds_to_target);
        csv.row({std::to_string(n), "user-edge-cloud", std::to_string(plan.cut1),
                 std::to_string(plan.cut2), fmt_double(plan.round_seconds),
                 fmt_double(plan.round_seconds * r)});
        csv.row({std::to_string(n), "user-edge", std::to_string(plan.user_edge_cut),
                 std::to_string(profile.L()), fmt_double(plan.user_edge_seconds),
                 fmt_double(plan.user_edge_seconds * r)});
        csv.row({std::to_string(n), "user-cloud", std::to_string(plan.user_cloud_cut),
                 std::to_string(plan.user_cloud_cut), fmt_double(plan.user_cloud_seconds),
                 fmt_double(plan.user_cloud_seconds * r)});
    }
}

/// Runs the configured planner; writes plan.json (round-trippable into train
/// for client/server splits) and report.json with the predicted costs.
inline Json run_planner(const RunConfig& cfg, const std::string& out_dir) {
    if (!cfg.planner) throw ConfigError("plan: config needs a planner section");
    RunConfig complete = cfg;
    rundetail::complete_topology(complete);
    const Topology& topo = complete.topology;
    ModelProfile profile = cfg.build_profile();
    NodeNames names;
    names.clients = topo.client_ids();
    std::vector<ClientLoad> loads = rundetail::dataset_loads(cfg, cfg.dataset.n);

    Json plan_json;
    Json report;
    const PlannerConfig& pc = *cfg.planner;
    if (pc.kind == "split_layer") {
        double server_rate = topo.node("server").compute_rate;
        auto [cut, res] =
            select_split_layer(profile, topo, names, loads, server_rate, cfg.compression);
        SplitPlan plan = SplitPlan::two_way("client-0", "server", cut, profile.L());
        for (const auto& s : plan.segments)
            plan_json["segments"].push_back({{"node", s.node}, {"layers", {s.first, s.last}}});
        report["kind"] = "split_layer";
        report["cut"] = cut;
        report["round_seconds"] = res.round_seconds;
        report["allocation"] = {{"uplink_hz", res.allocation.uplink_hz},
                                {"downlink_hz", res.allocation.downlink_hz},
                                {"server_share", res.allocation.server_share}};
        ProtocolConfig pcfg = cfg.protocol;
        pcfg.kind = ProtocolKind::Psl;
        pcfg.cut = cut;
        auto vol = comm_volume(pcfg, plan, profile, loads, names, cfg.compression, 0);
        int64_t total = 0;
        for (const auto& [link, b] : vol) total += b;
        report["predicted_round_bytes"] = total;
    } else if (pc.kind == "hierarchical") {
        if (!topo.find_node(pc.edge) || !topo.find_node(pc.cloud))
            throw ConfigError("plan: hierarchical needs '" + pc.edge + "' and '" + pc.cloud +
                              "' nodes");
        HierarchicalPlan plan =
            plan_hierarchical(profile, topo, names, pc.edge, pc.cloud, loads, cfg.compression);
        for (const auto& s : plan.plan.segments)
            plan_json["segments"].push_back({{"node", s.node}, {"layers", {s.first, s.last}}});
        report["kind"] = "hierarchical";
        report["cut1"] = plan.cut1;
        report["cut2"] = plan.cut2;
        report["round_seconds"] = plan.round_seconds;
        report["user_edge_seconds"] = plan.user_edge_seconds;
        report["user_cloud_seconds"] = plan.user_cloud_seconds;
    } else {
        if (pc.source.empty() || pc.destinations.empty())
            throw ConfigError("plan: multihop needs planner.source and planner.destinations");
        MultihopPlan plan;
        try {
            plan = route_multihop(profile, topo, pc.source, pc.destinations, pc.batch,
                                  cfg.compression);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        for (const auto& s : plan.plan.segments)
            plan_json["segments"].push_back({{"node", s.node}, {"layers", {s.first, s.last}}});
        plan_json["path"] = plan.path;
        report["kind"] = "multihop";
        report["path"] = plan.path;
        report["cost_seconds"] = plan.cost_seconds;
    }
    plan_json["meta"] = {{"seed", cfg.seed}, {"model_layers", profile.L()}};
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir + "/plan.json") << plan_json.dump(2) << "\n";
    std::ofstream(out_dir + "/report.json") << report.dump(2) << "\n";
    return report;
}

/// Renders accuracy curves, a phase-latency bar chart, and, when the inputs
/// span several client counts, the bytes-versus-M scaling chart.
inline std::vector<std::string> run_plots(const std::vector<std::string>& trace_paths,
                                          const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (trace_paths.empty()) throw std::runtime_error("plot: no trace files given");
    struct Loaded {
        CsvTable table;
        std::string label;
        std::string protocol;
        int64_t clients = 0;
    };
    std::vector<Loaded> traces;
    for (const auto& path : trace_paths) {
        Loaded l;
        l.table = read_csv(path);
        if (l.table.rows.empty()) throw std::runtime_error("plot: empty trace: " + path);
        fs::path p(path);
        l.label = p.parent_path().filename().string();
        if (l.label.empty()) l.label = p.filename().string();
        fs::path sj = p.parent_path() / "summary.json";
        if (fs::exists(sj)) {
            Json j = load_json_file(sj.string());
            l.protocol = j.value("protocol", "");
            l.clients = j.value("clients", 0);
            if (!l.protocol.empty())
                l.label = l.protocol + " (M=" + std::to_string(l.clients) + ")";
        }
        traces.push_back(std::move(l));
    }
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    std::vector<svg::Series> acc_series;
    for (const auto& t : traces) {
        svg::Series s;
        s.label = t.label;
        auto rounds = t.table.numeric_column("round");
        auto acc = t.table.numeric_column("eval_accuracy");
        for (size_t i = 0; i < rounds.size(); ++i) {
            if (acc[i] < 0) continue;  // async logs accuracy only at the end
            s.x.push_back(rounds[i]);
            s.y.push_back(acc[i]);
        }
        if (!s.x.empty()) acc_series.push_back(std::move(s));
    }
    if (!acc_series.empty()) {
        std::string path = out_dir + "/accuracy_vs_round.svg";
        svg::line_chart(path, "Test accuracy by round", "round", "accuracy", acc_series);
        written.push_back(path);
    }

    std::vector<svg::BarGroup> bars;
    for (const auto& t : traces) {
        svg::BarGroup g;
        g.label = t.label;
        for (const char* col : {"t_fwd_up_s", "t_server_s", "t_down_bwd_s", "t_avg_s"}) {
            auto v = t.table.numeric_column(col);
            double sum = 0;
            for (double x : v) sum += x;
            g.values.push_back(sum);
        }
        bars.push_back(std::move(g));
    }
    std::string bar_path = out_dir + "/latency_breakdown.svg";
    svg::stacked_bars(bar_path, "Simulated latency by phase", "seconds",
                      {"fwd+up", "server", "down+bwd", "averaging"}, bars);
    written.push_back(bar_path);

    std::set<int64_t> client_counts;
    for (const auto& t : traces)
        if (t.clients > 0) client_counts.insert(t.clients);
    if (client_counts.size() >= 2) {
        std::map<std::string, svg::Series> by_protocol;
        for (const auto& t : traces) {
            if (t.clients <= 0) continue;
            auto grad = t.table.numeric_column("bytes_grad_down");
            double mean = 0;
            for (double v : grad) mean += v;
            mean /= static_cast<double>(grad.size());
            auto& s = by_protocol[t.protocol];
            s.label = t.protocol;
            s.x.push_back(static_cast<double>(t.clients));
            s.y.push_back(mean);
        }
        std::vector<svg::Series> series;
        for (auto& [name, s] : by_protocol) {
            std::vector<size_t> order(s.x.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(),
                      [&](size_t a, size_t b) { return s.x[a] < s.x[b]; });
            svg::Series sorted;
            sorted.label = s.label;
            for (size_t i : order) {
                sorted.x.push_back(s.x[i]);
                sorted.y.push_back(s.y[i]);
            }
            series.push_back(std::move(sorted));
        }
        std::string path = out_dir + "/bytes_vs_m.svg";
        svg::line_chart(path, "Mean per-round downlink gradient bytes vs client count", "clients",
                        "bytes", series);
        written.push_back(path);
    }
    return written;
}

/// One training run per (value, seed) cell; aggregates summaries into
/// sweep_summary.csv.
inline void run_sweep(const Json& root_config, const std::string& out_dir) {
    RunConfig base = parse_run_config(root_config);
    if (!base.sweep) throw ConfigError("sweep: config needs a sweep section");
    const SweepConfig& sw = *base.sweep;

    // dotted path into the JSON tree
    std::vector<std::string> keys;
    std::string cur;
    for (char c : sw.parameter) {
        if (c == '.') {
            keys.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    keys.push_back(cur);

    std::filesystem::create_directories(out_dir);
    CsvWriter csv(out_dir + "/sweep_summary.csv",
                  {"parameter", "value", "seed", "clients", "final_accuracy", "final_train_loss",
                   "total_sim_seconds", "total_bytes", "rounds"});
    for (const auto& value : sw.values) {
        for (uint64_t seed : sw.seeds) {
            Json cell = root_config;
            cell.erase("sweep");
            Json* node = &cell;
            for (size_t i = 0; i + 1 < keys.size(); ++i) node = &((*node)[keys[i]]);
            (*node)[keys.back()] = value;
            cell["seed"] = seed;
            RunConfig cfg = parse_run_config(cell);
            std::string label = value.is_string() ? value.get<std::string>() : value.dump();
            std::string cell_dir = out_dir + "/" + rundetail::sanitize_for_path(sw.parameter) +
                                   "=" + rundetail::sanitize_for_path(label) +
                                   "_seed=" + std::to_string(seed);
            RunSummary s = run_training(cfg, cell_dir);
            csv.row({sw.parameter, label, std::to_string(seed),
                     std::to_string(cfg.dataset.clients), fmt_double(s.final_accuracy),
                     fmt_double(s.final_train_loss), fmt_double(s.total_sim_seconds),
                     std::to_string(s.total_bytes), std::to_string(s.rounds)});
        }
    }
}

}  // namespace selsim
