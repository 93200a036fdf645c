#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace selsim {

/// Jensen-Shannon divergence in bits (log base 2), so the value lives in
/// [0, 1]. Inputs are normalized in place of trust.
inline double js_divergence(std::vector<double> p, std::vector<double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("js_divergence: size mismatch");
    double sp = 0, sq = 0;
    for (double v : p) sp += v;
    for (double v : q) sq += v;
    if (sp <= 0 || sq <= 0) return 1.0;
    for (auto& v : p) v /= sp;
    for (auto& v : q) v /= sq;
    auto kl = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            if (a[i] <= 0) continue;
            d += a[i] * std::log2(a[i] / b[i]);
        }
        return d;
    };
    std::vector<double> m(p.size());
    for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

struct Candidate {
    size_t id = 0;
    double latency_estimate = 0.0;        // seconds to finish a round
    std::vector<double> label_histogram;  // counts or frequencies
    int64_t samples = 1;
};

struct SelectionConfig {
    double deadline = 1.0;  // seconds; members must fit it
    double alpha = 0.5;     // 1 = count only, 0 = diversity only
    std::vector<Candidate> candidates;

    void validate() const {
        if (deadline <= 0) throw std::invalid_argument("selection: deadline must be > 0");
        if (alpha < 0 || alpha > 1) throw std::invalid_argument("selection: alpha must be in [0,1]");
        if (candidates.empty()) throw std::invalid_argument("selection: no candidates");
    }
};

/// Greedy client selection maximizing
///   score(S) = alpha * |S|/N + (1-alpha) * (1 - JSD(pooled(S), global)),
/// admitting only deadline-feasible candidates; ties break toward the lower
/// client id. Greedy is deliberate: exact subset search is exponential and
/// the 2^N oracle in the tests documents the gap.
inline std::vector<size_t> select_clients(const SelectionConfig& cfg) {
    cfg.validate();
    const size_t N = cfg.candidates.size();
    size_t classes = cfg.candidates.front().label_histogram.size();
    std::vector<double> global(classes, 0.0);
    for (const auto& c : cfg.candidates) {
        if (c.label_histogram.size() != classes)
            throw std::invalid_argument("selection: ragged label histograms");
        double total = 0;
        for (double v : c.label_histogram) total += v;
        if (total <= 0) throw std::invalid_argument("selection: empty histogram");
        for (size_t k = 0; k < classes; ++k)
            global[k] += c.label_histogram[k] / total * static_cast<double>(c.samples);
    }

    std::vector<size_t> feasible;
    for (size_t i = 0; i < N; ++i)
        if (cfg.candidates[i].latency_estimate <= cfg.deadline) feasible.push_back(i);

    auto score_of = [&](const std::vector<bool>& chosen, size_t count) {
        if (count == 0) return 0.0;
        std::vector<double> pooled(classes, 0.0);
        for (size_t i = 0; i < N; ++i) {
            if (!chosen[i]) continue;
            const auto& c = cfg.candidates[i];
            double total = 0;
            for (double v : c.label_histogram) total += v;
            for (size_t k = 0; k < classes; ++k)
                pooled[k] += c.label_histogram[k] / total * static_cast<double>(c.samples);
        }
        double diversity = 1.0 - js_divergence(pooled, global);
        return cfg.alpha * static_cast<double>(count) / static_cast<double>(N) +
               (1.0 - cfg.alpha) * diversity;
    };

    std::vector<bool> chosen(N, false);
    size_t count = 0;
    double best_score = 0.0;
    for (;;) {
        double gain_best = 0.0;
        size_t pick = N;
        for (size_t i : feasible) {
            if (chosen[i]) continue;
            chosen[i] = true;
            double s = score_of(chosen, count + 1);
            chosen[i] = false;
            if (s > best_score + 1e-12 && (pick == N || s > gain_best + 1e-12)) {
                gain_best = s;
                pick = i;  // first hit wins ties (ascending id scan)
            }
        }
        if (pick == N) break;
        chosen[pick] = true;
        ++count;
        best_score = gain_best;
    }
    std::vector<size_t> out;
    for (size_t i = 0; i < N; ++i)
        if (chosen[i]) out.push_back(cfg.candidates[i].id);
    return out;
}

}  // namespace selsim
