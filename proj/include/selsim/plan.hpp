#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/model.hpp"
#include "selsim/topology.hpp"

namespace selsim {

/// Assignment of contiguous layer ranges to named nodes. Ranges must
/// partition [0, L) in order; zero-length ranges are not allowed.
struct SplitPlan {
    struct Segment {
        std::string node;
        int64_t first = 0;
        int64_t last = 0;
    };
    std::vector<Segment> segments;

    void validate(const ModelProfile& profile) const {
        if (segments.empty()) throw std::invalid_argument("plan: no segments");
        int64_t expect = 0;
        for (const auto& s : segments) {
            if (s.first != expect)
                throw std::invalid_argument("plan: segment on '" + s.node +
                                            "' starts at " + std::to_string(s.first) +
                                            ", expected " + std::to_string(expect));
            if (s.last <= s.first)
                throw std::invalid_argument("plan: empty segment on '" + s.node + "'");
            expect = s.last;
        }
        if (expect != profile.L())
            throw std::invalid_argument("plan: segments cover layers up to " +
                                        std::to_string(expect) + ", model has " +
                                        std::to_string(profile.L()));
    }

    static SplitPlan two_way(const std::string& lower, const std::string& upper,
                             int64_t cut, int64_t total_layers) {
        SplitPlan p;
        if (cut > 0) p.segments.push_back({lower, 0, cut});
        if (cut < total_layers) p.segments.push_back({upper, cut, total_layers});
        return p;
    }

    std::string summary() const {
        std::string s;
        for (const auto& seg : segments) {
            if (!s.empty()) s += " | ";
            s += seg.node + ":[" + std::to_string(seg.first) + "," + std::to_string(seg.last) + ")";
        }
        return s;
    }
};

}  // namespace selsim
