// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "multihop_oracle.hpp"
#include "selsim/allocator.hpp"
#include "selsim/csv.hpp"
#include "selsim/planner.hpp"
#include "selsim/protocols.hpp"
#include "support.hpp"

using namespace selsim;
using namespace seltest;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %02d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " | ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int id, const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [pass, detail] = body();
        report(id, name, pass, detail);
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

struct Fleet {
    ModelProfile profile;
    std::vector<ClientState> clients;
    NodeNames names;
    Dataset eval_set;
};

constexpr uint64_t kInit = 4242;

Fleet make_fleet(int64_t M, int64_t per_client, int64_t batch, int64_t cut, int64_t cut2 = -1,
                 uint64_t data_seed = 99, int64_t hidden = 10) {
    Fleet f{mlp4_profile(8, hidden, 4), {}, NodeNames::standard(size_t(M)), {}};
    Dataset all = make_blobs(M * per_client, 4, 8, 0.6, data_seed);
    f.eval_set = make_blobs(std::max<int64_t>(200, M * per_client / 5), 4, 8, 0.6, data_seed,
                            "test");
    auto shards = partition_iid(all.size(), int(M), data_seed);
    for (int64_t m = 0; m < M; ++m) {
        ClientState c;
        c.id = size_t(m);
        c.sched_seed = c.id;
        c.shard = all.subset(shards[size_t(m)]);
        c.batch_size = batch;
        c.segments.push_back(init_segment(f.profile, 0, cut, kInit));
        if (cut2 >= 0) c.segments.push_back(init_segment(f.profile, cut2, f.profile.L(), kInit));
        f.clients.push_back(std::move(c));
    }
    return f;
}

SegmentState stitch(const std::vector<const SegmentState*>& parts) {
    SegmentState out;
    out.first = parts.front()->first;
    out.last = parts.back()->last;
    for (const SegmentState* p : parts)
        for (const auto& lp : p->params) out.params.push_back(lp);
    return out;
}

SegmentState centralized_over(const ModelProfile& profile, const ClientState& c,
                              const ProtocolConfig& cfg, int64_t rounds) {
    SegmentState model = init_segment(profile, 0, profile.L(), kInit);
    for (int64_t r = 0; r < rounds; ++r) {
        auto batches = batch_schedule(cfg.seed, c.sched_seed, r, c.shard.size(), c.batch_size);
        centralized_epoch(profile, model, c.shard, batches, cfg.lr);
    }
    return model;
}

ProtocolConfig cfg_of(ProtocolKind kind, int64_t cut, int64_t batch, double lr = 0.05,
                      uint64_t seed = 2025) {
    ProtocolConfig cfg;
    cfg.kind = kind;
    cfg.cut = cut;
    cfg.batch_size = batch;
    cfg.lr = lr;
    cfg.seed = seed;
    return cfg;
}

Topology flat_topo(size_t M, std::vector<double> rates = {}) {
    Topology t;
    for (size_t m = 0; m < M; ++m)
        t.nodes.push_back(
            {"client-" + std::to_string(m), Tier::Client, rates.empty() ? 1e9 : rates[m]});
    t.nodes.push_back({"server", Tier::Edge, 7e9});
    t.nodes.push_back({"fed", Tier::Fed, 1e9});
    t.total_bandwidth_hz = 70e6;
    return t;
}

// ---------------------------------------------------------------- criterion 1

std::pair<bool, std::string> criterion_1() {
    auto t0 = std::chrono::steady_clock::now();
    const int64_t rounds = 2, batch = 16, per_client = 48;
    int checked = 0;
    for (int64_t cut = 0; cut <= 4; ++cut) {
        Fleet base = make_fleet(1, per_client, batch, cut);
        SegmentState expect =
            centralized_over(base.profile, base.clients[0], cfg_of(ProtocolKind::Psl, cut, batch),
                             rounds);

        {  // vanilla SL
            Fleet f = make_fleet(1, per_client, batch, cut);
            ProtocolConfig cfg = cfg_of(ProtocolKind::VanillaSl, cut, batch);
            SegmentState server = init_segment(f.profile, cut, 4, kInit);
            SegmentState client = init_segment(f.profile, 0, cut, kInit);
            for (int64_t r = 0; r < rounds; ++r)
                run_round_vanilla_sl(f.profile, f.clients, server, client, cfg, f.names, r);
            if (!segments_equal(stitch({&client, &server}), expect))
                return {false, "vanilla_sl cut " + std::to_string(cut)};
            ++checked;
        }
        {  // PSL
            Fleet f = make_fleet(1, per_client, batch, cut);
            ProtocolConfig cfg = cfg_of(ProtocolKind::Psl, cut, batch);
            SegmentState server = init_segment(f.profile, cut, 4, kInit);
            for (int64_t r = 0; r < rounds; ++r)
                run_round_psl(f.profile, f.clients, server, cfg, f.names, r);
            if (!segments_equal(stitch({&f.clients[0].segments[0], &server}), expect))
                return {false, "psl cut " + std::to_string(cut)};
            ++checked;
        }
        {  // SFL with tau = 1
            Fleet f = make_fleet(1, per_client, batch, cut);
            ProtocolConfig cfg = cfg_of(ProtocolKind::Sfl, cut, batch);
            cfg.sfl_avg_period = 1;
            SegmentState server = init_segment(f.profile, cut, 4, kInit);
            for (int64_t r = 0; r < rounds; ++r)
                run_round_sfl(f.profile, f.clients, server, cfg, f.names, r);
            if (!segments_equal(stitch({&f.clients[0].segments[0], &server}), expect))
                return {false, "sfl cut " + std::to_string(cut)};
            ++checked;
        }
        for (double phi : {0.0, 0.5, 1.0}) {  // EPSL
            Fleet f = make_fleet(1, per_client, batch, cut);
            ProtocolConfig cfg = cfg_of(ProtocolKind::Epsl, cut, batch);
            cfg.epsl_phi = phi;
            SegmentState server = init_segment(f.profile, cut, 4, kInit);
            for (int64_t r = 0; r < rounds; ++r)
                run_round_epsl(f.profile, f.clients, server, cfg, f.names, r);
            if (!segments_equal(stitch({&f.clients[0].segments[0], &server}), expect))
                return {false, "epsl phi " + std::to_string(phi) + " cut " + std::to_string(cut)};
            ++checked;
        }
    }
    for (int64_t l1 = 1; l1 < 4; ++l1)  // U-shaped, every valid cut pair
        for (int64_t l2 = l1 + 1; l2 < 4; ++l2) {
            Fleet f = make_fleet(1, per_client, batch, l1, l2);
            SegmentState expect = centralized_over(
                f.profile, f.clients[0], cfg_of(ProtocolKind::Ushaped, l1, batch), rounds);
            ProtocolConfig cfg = cfg_of(ProtocolKind::Ushaped, l1, batch);
            cfg.cut2 = l2;
            SegmentState server = init_segment(f.profile, l1, l2, kInit);
            for (int64_t r = 0; r < rounds; ++r)
                run_round_ushaped(f.profile, f.clients, server, cfg, f.names, r);
            if (!segments_equal(
                    stitch({&f.clients[0].segments[0], &server, &f.clients[0].segments[1]}),
                    expect))
                return {false, "ushaped cuts " + std::to_string(l1) + "," + std::to_string(l2)};
            ++checked;
        }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 60.0) return {false, "runtime " + std::to_string(secs) + "s exceeds 1 min"};
    return {true, std::to_string(checked) + " protocol/cut combinations bit-identical in " +
                      fmt_double(secs) + "s"};
}

// ---------------------------------------------------------------- criterion 2

std::pair<bool, std::string> criterion_2() {
    auto run = [&](ProtocolKind kind) {
        Fleet f = make_fleet(5, 40, 8, 2);
        ProtocolConfig cfg = cfg_of(kind, 2, 8);
        cfg.epsl_phi = 0.0;
        SegmentState server = init_segment(f.profile, 2, 4, kInit);
        int64_t bytes = 0;
        for (int64_t r = 0; r < 50; ++r) {
            RoundTrace rt = kind == ProtocolKind::Epsl
                                ? run_round_epsl(f.profile, f.clients, server, cfg, f.names, r)
                                : run_round_psl(f.profile, f.clients, server, cfg, f.names, r);
            bytes += rt.trace.total_bytes();
        }
        return std::tuple(std::move(f), std::move(server), bytes);
    };
    auto [fe, se, be] = run(ProtocolKind::Epsl);
    auto [fp, sp, bp] = run(ProtocolKind::Psl);
    if (!segments_equal(se, sp)) return {false, "server weights differ"};
    for (size_t m = 0; m < 5; ++m)
        if (!segments_equal(fe.clients[m].segments[0], fp.clients[m].segments[0]))
            return {false, "client " + std::to_string(m) + " weights differ"};
    if (be != bp)
        return {false, "byte totals differ: " + std::to_string(be) + " vs " + std::to_string(bp)};
    return {true, "50 rounds, M=5: weights bit-identical, " + std::to_string(be) + " bytes both"};
}

// ---------------------------------------------------------------- criterion 3

std::pair<bool, std::string> criterion_3() {
    const int64_t batch = 10, per_client = 50;
    auto metrics = [&](ProtocolKind kind, int64_t M) {
        Fleet f = make_fleet(M, per_client, batch, 2);
        ProtocolConfig cfg = cfg_of(kind, 2, batch);
        cfg.epsl_phi = 1.0;
        SegmentState server = init_segment(f.profile, 2, 4, kInit);
        RoundTrace rt = kind == ProtocolKind::Epsl
                            ? run_round_epsl(f.profile, f.clients, server, cfg, f.names, 0)
                            : run_round_psl(f.profile, f.clients, server, cfg, f.names, 0);
        int64_t grad_down = 0;
        for (const auto& m : rt.trace.messages)
            if (m.kind == PayloadKind::Grad && m.src == "server") grad_down += m.bytes;
        return std::pair(rt.server_bwd_cycles, grad_down);
    };
    auto [cycles1, bytes1] = metrics(ProtocolKind::Epsl, 1);
    for (int64_t M : {1, 2, 4, 8, 16}) {
        auto [ce, be] = metrics(ProtocolKind::Epsl, M);
        auto [cp, bp] = metrics(ProtocolKind::Psl, M);
        if (ce != cycles1 || be != bytes1)
            return {false, "EPSL metrics vary at M=" + std::to_string(M)};
        if (cp != double(M) * ce || bp != M * be)
            return {false, "PSL/EPSL ratio is not exactly M at M=" + std::to_string(M)};
    }
    return {true, "EPSL server-bwd cycles and downlink grad bytes flat over M in {1,2,4,8,16}; "
                  "PSL scales by exactly M"};
}

// ---------------------------------------------------------------- criterion 4

std::pair<bool, std::string> criterion_4() {
    auto t0 = std::chrono::steady_clock::now();
    const int64_t n = 10000, M = 5, batch = 32, rounds = 12;
    const double lr = 0.08;
    const double noise = 1.1;  // overlapping blobs so accuracy is not saturated
    std::vector<uint64_t> seeds{3, 4, 5};
    double acc_psl = 0, acc_epsl = 0, acc_cent = 0;
    for (uint64_t seed : seeds) {
        Dataset all = make_blobs(n, 4, 8, noise, seed);
        Dataset eval = make_blobs(2000, 4, 8, noise, seed, "test");
        auto shards = partition_iid(n, M, seed);
        ModelProfile profile = mlp4_profile(8, 24, 4);
        auto build = [&]() {
            std::vector<ClientState> clients;
            for (int64_t m = 0; m < M; ++m) {
                ClientState c;
                c.id = size_t(m);
                c.sched_seed = c.id;
                c.shard = all.subset(shards[size_t(m)]);
                c.batch_size = batch;
                c.segments.push_back(init_segment(profile, 0, 2, kInit));
                clients.push_back(std::move(c));
            }
            return clients;
        };
        auto final_acc = [&](ProtocolKind kind, double phi) {
            auto clients = build();
            ProtocolConfig cfg = cfg_of(kind, 2, batch, lr, seed);
            cfg.epsl_phi = phi;
            SegmentState server = init_segment(profile, 2, 4, kInit);
            NodeNames names = NodeNames::standard(M);
            for (int64_t r = 0; r < rounds; ++r) {
                if (kind == ProtocolKind::Epsl)
                    run_round_epsl(profile, clients, server, cfg, names, r);
                else
                    run_round_psl(profile, clients, server, cfg, names, r);
            }
            double acc = 0;
            for (const auto& c : clients)
                acc += evaluate_chain(profile, {&c.segments[0], &server}, eval);
            return acc / double(M);
        };
        acc_psl += final_acc(ProtocolKind::Psl, 0.0);
        acc_epsl += final_acc(ProtocolKind::Epsl, 1.0);
        // centralized: one virtual client holding all the data
        ClientState whole;
        whole.id = 0;
        whole.sched_seed = 0;
        whole.shard = all;
        whole.batch_size = batch;
        SegmentState model = centralized_over(
            profile, whole, cfg_of(ProtocolKind::Psl, 0, batch, lr, seed), rounds);
        acc_cent += evaluate_chain(profile, {&model}, eval);
    }
    acc_psl /= double(seeds.size());
    acc_epsl /= double(seeds.size());
    acc_cent /= double(seeds.size());
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail = "mean over 3 seeds: psl " + fmt_double(acc_psl) + ", epsl(phi=1) " +
                         fmt_double(acc_epsl) + ", centralized " + fmt_double(acc_cent) + " in " +
                         fmt_double(secs) + "s";
    if (secs >= 300.0) return {false, "runtime exceeds 5 min: " + detail};
    if (std::fabs(acc_epsl - acc_psl) > 0.02)
        return {false, "epsl vs psl gap > 2 points: " + detail};
    if (std::fabs(acc_epsl - acc_cent) > 0.05 || std::fabs(acc_psl - acc_cent) > 0.05)
        return {false, "gap to centralized > 5 points: " + detail};
    return {true, detail};
}

// ---------------------------------------------------------------- criterion 5

std::pair<bool, std::string> criterion_5() {
    const int64_t L = 4, M = 3, batch = 10, rounds = 20;
    Fleet f_sfl = make_fleet(M, 50, batch, L);
    Fleet f_fed = make_fleet(M, 50, batch, L);
    for (auto& c : f_fed.clients) c.segments[0] = init_segment(f_fed.profile, 0, L, kInit);
    ProtocolConfig cfg_sfl = cfg_of(ProtocolKind::Sfl, L, batch);
    cfg_sfl.sfl_avg_period = 1;
    ProtocolConfig cfg_fed = cfg_of(ProtocolKind::FedAvg, 0, batch);
    SegmentState server = init_segment(f_sfl.profile, L, L, kInit);
    SegmentState global = init_segment(f_fed.profile, 0, L, kInit);
    for (int64_t r = 0; r < rounds; ++r) {
        run_round_sfl(f_sfl.profile, f_sfl.clients, server, cfg_sfl, f_sfl.names, r);
        run_round_fedavg(f_fed.profile, f_fed.clients, global, cfg_fed, f_fed.names, r);
        for (size_t m = 0; m < M; ++m)
            if (!segments_equal(f_sfl.clients[m].segments[0], f_fed.clients[m].segments[0]))
                return {false, "diverged at round " + std::to_string(r) + " client " +
                                   std::to_string(m)};
    }
    return {true, "20 rounds, M=3: SFL(cut=L, tau=1) trajectory bit-identical to FedAvg"};
}

// ---------------------------------------------------------------- criterion 6

std::pair<bool, std::string> criterion_6() {
    ModelProfile profile = convlike_profile(256, 4);
    Rng rng(6);
    Topology topo;
    for (int m = 0; m < 5; ++m)
        topo.nodes.push_back(
            {"client-" + std::to_string(m), Tier::Client, rng.uniform(0.1e9, 0.5e9)});
    topo.nodes.push_back({"edge", Tier::Edge, 7e9});
    topo.nodes.push_back({"cloud", Tier::Cloud, 20e9});
    topo.links.push_back({"edge", "cloud", 70e6 / 20});
    topo.links.push_back({"cloud", "edge", 70e6 / 20});
    topo.total_bandwidth_hz = 70e6;
    NodeNames names = NodeNames::standard(5);
    std::vector<int64_t> sizes{200, 400, 800, 1600, 3200};
    double prev_gap_edge = -1, prev_gap_cloud = -1;
    HierarchicalPlan last;
    for (int64_t nsize : sizes) {
        std::vector<ClientLoad> loads(5, {16, nsize / 5});
        HierarchicalPlan plan = plan_hierarchical(profile, topo, names, "edge", "cloud", loads);
        double gap_edge = plan.user_edge_seconds - plan.round_seconds;
        double gap_cloud = plan.user_cloud_seconds - plan.round_seconds;
        if (gap_edge <= prev_gap_edge || gap_cloud <= prev_gap_cloud)
            return {false, "gap not widening at dataset size " + std::to_string(nsize)};
        prev_gap_edge = gap_edge;
        prev_gap_cloud = gap_cloud;
        last = plan;
    }
    if (last.round_seconds > last.user_edge_seconds ||
        last.round_seconds > last.user_cloud_seconds)
        return {false, "hierarchical loses at the largest size"};
    return {true, "largest size: hierarchical " + fmt_double(last.round_seconds) +
                      "s <= user-edge " + fmt_double(last.user_edge_seconds) +
                      "s and user-cloud " + fmt_double(last.user_cloud_seconds) +
                      "s; gaps widen over the sweep"};
}

// ---------------------------------------------------------------- criterion 7

std::pair<bool, std::string> criterion_7() {
    ModelProfile profile = mlp4_profile(8, 16, 4);
    Rng rng(1234);
    NodeNames names = NodeNames::standard(3);
    auto topo_with = [&](double pool, double server, const std::vector<double>& rates) {
        Topology t;
        for (size_t m = 0; m < 3; ++m)
            t.nodes.push_back({"client-" + std::to_string(m), Tier::Client, rates[m]});
        t.nodes.push_back({"server", Tier::Edge, server});
        t.total_bandwidth_hz = pool;
        return t;
    };
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> rates{rng.uniform(0.1e9, 1e9), rng.uniform(0.1e9, 1e9),
                                  rng.uniform(0.1e9, 1e9)};
        double pool = rng.uniform(5e6, 80e6);
        double server = rng.uniform(1e9, 20e9);
        Topology topo = topo_with(pool, server, rates);
        int64_t cut = 1 + int64_t(rng.below(3));
        std::vector<ClientLoad> loads(3, {16, 16});
        auto work = split_workloads(profile, cut, topo, names, loads);
        MinmaxResult r = allocate_minmax(work, topo, server);
        auto phase_min = [&](bool uplink) {
            double best = std::numeric_limits<double>::infinity();
            for (int k0 = 1; k0 < 200; ++k0)
                for (int k1 = 1; k0 + k1 < 200; ++k1) {
                    int k2 = 200 - k0 - k1;
                    double hz[3] = {pool * k0 / 200, pool * k1 / 200, pool * k2 / 200};
                    double worst = 0;
                    for (size_t m = 0; m < 3; ++m) {
                        double fixed = uplink ? work[m].fwd_seconds : work[m].bwd_seconds;
                        double bits = uplink ? work[m].uplink_bits : work[m].downlink_bits;
                        worst = std::max(worst, fixed + bits / hz[m]);
                    }
                    best = std::min(best, worst);
                }
            return best;
        };
        double total_cycles = 0;
        for (const auto& w : work) total_cycles += w.server_cycles;
        double oracle = phase_min(true) + total_cycles / server + phase_min(false);
        if (r.round_seconds > oracle * 1.0000001 || r.round_seconds < oracle * 0.99)
            return {false, "instance " + std::to_string(rep) + ": allocator " +
                               fmt_double(r.round_seconds) + " vs grid " + fmt_double(oracle)};
    }
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> rates{rng.uniform(0.1e9, 1e9), rng.uniform(0.1e9, 1e9),
                                  rng.uniform(0.1e9, 1e9)};
        double pool = rng.uniform(5e6, 50e6);
        double server = rng.uniform(1e9, 10e9);
        int64_t cut = int64_t(rng.below(5));
        std::vector<ClientLoad> loads(3, {16, 32});
        Topology t1 = topo_with(pool, server, rates);
        Topology t2 =
            topo_with(pool * rng.uniform(1.0, 4.0), server * rng.uniform(1.0, 3.0), rates);
        double a = allocate_minmax(split_workloads(profile, cut, t1, names, loads), t1, server)
                       .round_seconds;
        double b = allocate_minmax(split_workloads(profile, cut, t2, names, loads), t2,
                                   t2.node("server").compute_rate)
                       .round_seconds;
        if (b > a * (1 + 1e-9))
            return {false, "pool enlargement worsened latency at pair " + std::to_string(rep)};
    }
    return {true, "20/20 instances within 1% of the 200-point grid; 100/100 enlargement pairs "
                  "monotone"};
}

// ---------------------------------------------------------------- criterion 8

std::pair<bool, std::string> criterion_8() {
    Rng rng(77777);
    int done = 0, infeasible = 0;
    while (done < 20) {
        ModelProfile p = random_walk_profile(rng);
        std::vector<std::string> node_names;
        Topology mesh = random_mesh(rng, 4, node_names);
        std::vector<std::string> dests{node_names.back()};
        WalkBest oracle = run_walk_oracle(p, mesh, node_names[0], dests, 4);
        if (!std::isfinite(oracle.cost)) {
            bool threw = false;
            try {
                route_multihop(p, mesh, node_names[0], dests, 4);
            } catch (const std::invalid_argument&) {
                threw = true;
            }
            if (!threw) return {false, "DP found a plan the oracle says is infeasible"};
            ++infeasible;
            continue;
        }
        MultihopPlan plan = route_multihop(p, mesh, node_names[0], dests, 4);
        if (std::fabs(plan.cost_seconds - oracle.cost) > 1e-12 * std::max(1.0, oracle.cost) ||
            plan.path != oracle.path)
            return {false, "instance " + std::to_string(done) + ": DP " +
                               fmt_double(plan.cost_seconds) + " vs oracle " +
                               fmt_double(oracle.cost)};
        ++done;
    }
    return {true, "20/20 feasible instances equal the exhaustive enumeration exactly (" +
                      std::to_string(infeasible) + " infeasible instances rejected by both)"};
}

// ---------------------------------------------------------------- criterion 9

std::pair<bool, std::string> criterion_9() {
    Rng rng(31415);
    double worst = 0;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<std::pair<std::string, FdProbe>> probes;
        {
            ModelProfile p({make_dense(4, 3), make_relu({3})});
            probes.push_back({"dense",
                              {p, init_segment(p, 0, 1, rng.next_u64()),
                               random_tensor({2, 4}, rng), random_tensor({2, 3}, rng)}});
        }
        {
            ModelProfile p({make_relu({5}), make_relu({5})});
            probes.push_back({"relu",
                              {p, init_segment(p, 0, 1, rng.next_u64()),
                               random_tensor({3, 5}, rng, 1e-3), random_tensor({3, 5}, rng)}});
        }
        {
            ModelProfile p({make_conv2d_small(2, 3, 5, 5), make_flatten({3, 3, 3})});
            probes.push_back({"conv2d-small",
                              {p, init_segment(p, 0, 1, rng.next_u64()),
                               random_tensor({2, 2, 5, 5}, rng),
                               random_tensor({2, 3, 3, 3}, rng)}});
        }
        {
            ModelProfile p({make_flatten({2, 3, 3}), make_dense(18, 2)});
            probes.push_back({"flatten",
                              {p, init_segment(p, 0, 1, rng.next_u64()),
                               random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 18}, rng)}});
        }
        {
            ModelProfile p({make_softmax_head(4), make_softmax_head(4)});
            probes.push_back({"softmax-head",
                              {p, init_segment(p, 0, 1, rng.next_u64()),
                               random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}});
        }
        for (auto& [name, probe] : probes) {
            double err = fd_max_rel_err(probe);
            worst = std::max(worst, err);
            if (err >= 1e-5)
                return {false,
                        name + " rel err " + fmt_double(err) + " at rep " + std::to_string(rep)};
        }
    }
    return {true, "5 layer kinds x 10 instances, worst rel err " + fmt_double(worst)};
}

// --------------------------------------------------------------- criterion 10

std::pair<bool, std::string> criterion_10() {
    Fleet f = make_fleet(3, 40, 8, 1, 3);
    ProtocolConfig cfg = cfg_of(ProtocolKind::Ushaped, 1, 8);
    cfg.cut2 = 3;
    SegmentState server = init_segment(f.profile, 1, 3, kInit);
    int64_t messages = 0;
    for (int64_t r = 0; r < 10; ++r) {
        RoundTrace rt = run_round_ushaped(f.profile, f.clients, server, cfg, f.names, r);
        for (const auto& m : rt.trace.messages) {
            ++messages;
            if (m.kind == PayloadKind::Label && m.dst.rfind("client", 0) != 0)
                return {false, "label payload reached " + m.dst};
        }
    }
    return {true,
            std::to_string(messages) + " messages over 10 rounds, zero server-bound labels"};
}

// --------------------------------------------------------------- criterion 11

std::pair<bool, std::string> criterion_11() {
    {
        const int64_t M = 3, batch = 8, per_client = 16, rounds = 2;
        Fleet fa = make_fleet(M, per_client, batch, 2);
        Fleet fp = make_fleet(M, per_client, batch, 2);
        ProtocolConfig cfg = cfg_of(ProtocolKind::AsyncPsl, 2, batch);
        cfg.async_quorum = M;
        cfg.rounds = rounds * batches_per_epoch(per_client, batch);
        Topology topo = flat_topo(M, {0.5e9, 1e9, 2e9});
        Allocation alloc = Allocation::equal(topo, M);
        SegmentState sa = init_segment(fa.profile, 2, 4, kInit);
        SegmentState sp = init_segment(fp.profile, 2, 4, kInit);
        run_async_psl(fa.profile, fa.clients, sa, cfg, topo, alloc, fa.names);
        ProtocolConfig cfg_psl = cfg_of(ProtocolKind::Psl, 2, batch);
        for (int64_t r = 0; r < rounds; ++r)
            run_round_psl(fp.profile, fp.clients, sp, cfg_psl, fp.names, r);
        if (!segments_equal(sa, sp)) return {false, "K=M server weights differ from PSL"};
        for (size_t m = 0; m < M; ++m)
            if (!segments_equal(fa.clients[m].segments[0], fp.clients[m].segments[0]))
                return {false, "K=M client " + std::to_string(m) + " differs from PSL"};
    }
    Fleet f = make_fleet(2, 16, 8, 2);
    ProtocolConfig cfg = cfg_of(ProtocolKind::AsyncPsl, 2, 8);
    cfg.async_quorum = 1;
    cfg.rounds = 40;
    Topology topo = flat_topo(2, {4e9, 0.25e9});
    Allocation alloc;  // the straggler also gets a fraction of the spectrum
    alloc.uplink_hz = {60e6, 10e6};
    alloc.downlink_hz = {60e6, 10e6};
    alloc.server_share = {0.5, 0.5};
    SegmentState server = init_segment(f.profile, 2, 4, kInit);
    auto rts = run_async_psl(f.profile, f.clients, server, cfg, topo, alloc, f.names);
    int64_t fast = 0, slow = 0, max_stale = 0;
    for (const auto& rt : rts) {
        max_stale = std::max(max_stale, rt.max_staleness());
        for (const auto& m : rt.trace.messages)
            if (m.kind == PayloadKind::Grad) (m.dst == "client-0" ? fast : slow) += 1;
    }
    if (max_stale <= 0) return {false, "no staleness recorded under heterogeneous latency"};
    if (fast < slow) return {false, "straggler out-participated the fast client"};
    return {true, "K=M bitwise equal to PSL; K=1 max staleness " + std::to_string(max_stale) +
                      ", participation fast/slow = " + std::to_string(fast) + "/" +
                      std::to_string(slow)};
}

// --------------------------------------------------------------- criterion 12

std::pair<bool, std::string> criterion_12() {
    auto trajectory = [&](ProtocolKind kind, const CompressionSpec& comp) {
        Fleet f = kind == ProtocolKind::Ushaped ? make_fleet(3, 24, 8, 1, 3)
                                                : make_fleet(3, 24, 8, 2);
        ProtocolConfig cfg = cfg_of(kind, kind == ProtocolKind::Ushaped ? 1 : 2, 8);
        cfg.cut2 = 3;
        cfg.epsl_phi = 0.5;
        SegmentState server = kind == ProtocolKind::Ushaped
                                  ? init_segment(f.profile, 1, 3, kInit)
                                  : init_segment(f.profile, 2, 4, kInit);
        SegmentState vanilla_client = init_segment(f.profile, 0, 2, kInit);
        SegmentState global = init_segment(f.profile, 0, 4, kInit);
        if (kind == ProtocolKind::FedAvg)
            for (auto& c : f.clients) c.segments[0] = init_segment(f.profile, 0, 4, kInit);
        for (int64_t r = 0; r < 4; ++r) {
            switch (kind) {
                case ProtocolKind::Psl:
                    run_round_psl(f.profile, f.clients, server, cfg, f.names, r, comp);
                    break;
                case ProtocolKind::Epsl:
                    run_round_epsl(f.profile, f.clients, server, cfg, f.names, r, comp);
                    break;
                case ProtocolKind::Sfl:
                    run_round_sfl(f.profile, f.clients, server, cfg, f.names, r, comp);
                    break;
                case ProtocolKind::VanillaSl:
                    run_round_vanilla_sl(f.profile, f.clients, server, vanilla_client, cfg,
                                         f.names, r, comp);
                    break;
                case ProtocolKind::Ushaped:
                    run_round_ushaped(f.profile, f.clients, server, cfg, f.names, r, comp);
                    break;
                case ProtocolKind::FedAvg:
                    run_round_fedavg(f.profile, f.clients, global, cfg, f.names, r, comp);
                    break;
                default:
                    break;
            }
        }
        std::vector<SegmentState> out;
        out.push_back(server);
        out.push_back(global);
        out.push_back(vanilla_client);
        for (const auto& c : f.clients)
            for (const auto& s : c.segments) out.push_back(s);
        return out;
    };
    CompressionSpec defaults;
    CompressionSpec spelled_out;
    spelled_out.activation_bits = 32;
    spelled_out.topk_ratio = 1.0;
    spelled_out.weight_bits = {{"client", 32}, {"server", 32}};
    for (ProtocolKind kind : {ProtocolKind::Psl, ProtocolKind::Epsl, ProtocolKind::Sfl,
                              ProtocolKind::VanillaSl, ProtocolKind::Ushaped,
                              ProtocolKind::FedAvg}) {
        auto a = trajectory(kind, defaults);
        auto b = trajectory(kind, spelled_out);
        for (size_t i = 0; i < a.size(); ++i)
            if (!segments_equal(a[i], b[i]))
                return {false,
                        std::string("identity compression changed ") + protocol_kind_name(kind)};
    }

    auto run_quant = [&](uint64_t seed, const CompressionSpec& comp) {
        ModelProfile profile = mlp4_profile(8, 24, 4);
        Dataset all = make_blobs(2000, 4, 8, 0.6, seed);
        Dataset eval = make_blobs(500, 4, 8, 0.6, seed, "test");
        auto shards = partition_iid(2000, 5, seed);
        std::vector<ClientState> clients;
        for (int64_t m = 0; m < 5; ++m) {
            ClientState c;
            c.id = size_t(m);
            c.sched_seed = c.id;
            c.shard = all.subset(shards[size_t(m)]);
            c.batch_size = 32;
            c.segments.push_back(init_segment(profile, 0, 2, kInit));
            clients.push_back(std::move(c));
        }
        ProtocolConfig cfg = cfg_of(ProtocolKind::Psl, 2, 32, 0.08, seed);
        SegmentState server = init_segment(profile, 2, 4, kInit);
        NodeNames names = NodeNames::standard(5);
        int64_t smashed = 0;
        for (int64_t r = 0; r < 12; ++r) {
            RoundTrace rt = run_round_psl(profile, clients, server, cfg, names, r, comp);
            smashed += rt.trace.bytes_of_kind(PayloadKind::Activation) +
                       rt.trace.bytes_of_kind(PayloadKind::Grad);
        }
        double acc = 0;
        for (const auto& c : clients)
            acc += evaluate_chain(profile, {&c.segments[0], &server}, eval);
        return std::pair(smashed, acc / 5.0);
    };
    CompressionSpec q8;
    q8.activation_bits = 8;
    double acc_full = 0, acc_q8 = 0;
    for (uint64_t seed : {11, 12, 13}) {
        auto [bytes_full, a_full] = run_quant(seed, defaults);
        auto [bytes_q8, a_q8] = run_quant(seed, q8);
        if (bytes_full != 4 * bytes_q8)
            return {false, "smashed bytes not exactly 4x: " + std::to_string(bytes_full) +
                               " vs " + std::to_string(bytes_q8)};
        acc_full += a_full / 3.0;
        acc_q8 += a_q8 / 3.0;
    }
    if (std::fabs(acc_full - acc_q8) > 0.03)
        return {false, "8-bit accuracy gap " + fmt_double(std::fabs(acc_full - acc_q8)) +
                           " exceeds 3 points"};
    return {true,
            "identity defaults bitwise across 6 protocols; 8-bit: bytes exactly 4x lower, "
            "accuracy " +
                fmt_double(acc_q8) + " vs " + fmt_double(acc_full) + " full precision"};
}

}  // namespace

int main() {
    run_criterion(1, "single-client centralized equivalence at every cut", criterion_1);
    run_criterion(2, "EPSL(phi=0) reduces to PSL bitwise", criterion_2);
    run_criterion(3, "EPSL O(1) backward cost and downlink vs PSL's O(M)", criterion_3);
    run_criterion(4, "EPSL accuracy within 2 points of PSL, both near centralized", criterion_4);
    run_criterion(5, "SFL(cut=L, tau=1) bridges to FedAvg bitwise", criterion_5);
    run_criterion(6, "hierarchical plan beats two-tier plans with widening gap", criterion_6);
    run_criterion(7, "min-max allocator matches grid brute force and is monotone", criterion_7);
    run_criterion(8, "multihop routing equals exhaustive enumeration", criterion_8);
    run_criterion(9, "analytic gradients pass finite-difference checks", criterion_9);
    run_criterion(10, "U-shaped runs never send labels off-client", criterion_10);
    run_criterion(11, "async PSL: full quorum = PSL, staleness under heterogeneity",
                  criterion_11);
    run_criterion(12, "compression: identity defaults and 8-bit activation tradeoff",
                  criterion_12);
    if (g_failures == 0)
        std::printf("acceptance: all 12 criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return g_failures;
}
