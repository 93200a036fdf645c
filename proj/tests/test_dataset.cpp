#include <gtest/gtest.h>

#include <set>

#include "selsim/dataset.hpp"
#include "selsim/scheduling.hpp"
#include "support.hpp"

using namespace selsim;
using namespace seltest;

TEST(Blobs, ShapesAndDeterminism) {
    Dataset a = make_blobs(100, 4, 6, 0.5, 11);
    Dataset b = make_blobs(100, 4, 6, 0.5, 11);
    EXPECT_EQ(a.xs.shape, (Shape{100, 6}));
    EXPECT_EQ(a.labels.size(), 100u);
    EXPECT_TRUE(tensors_equal(a.xs, b.xs));
    Dataset c = make_blobs(100, 4, 6, 0.5, 12);
    EXPECT_FALSE(tensors_equal(a.xs, c.xs));
}

TEST(Blobs, TrainAndTestShareCenters) {
    // with zero noise every split collapses onto the class centers
    Dataset train = make_blobs(8, 2, 3, 0.0, 5, "train");
    Dataset test = make_blobs(8, 2, 3, 0.0, 5, "test");
    for (int64_t i = 0; i < 8; ++i) {
        ASSERT_EQ(train.labels[size_t(i)], test.labels[size_t(i)]);
        for (int64_t j = 0; j < 3; ++j)
            EXPECT_DOUBLE_EQ(train.xs.at2(i, j), test.xs.at2(i, j));
    }
}

TEST(TwoMoons, TwoClassesIn2d) {
    Dataset d = make_two_moons(50, 0.1, 3);
    EXPECT_EQ(d.classes, 2);
    EXPECT_EQ(d.xs.shape, (Shape{50, 2}));
}

TEST(PartitionIid, CoversEverySampleOnce) {
    auto shards = partition_iid(103, 4, 9);
    std::set<size_t> seen;
    size_t total = 0;
    for (const auto& s : shards) {
        EXPECT_FALSE(s.empty());
        total += s.size();
        seen.insert(s.begin(), s.end());
    }
    EXPECT_EQ(total, 103u);
    EXPECT_EQ(seen.size(), 103u);
}

TEST(PartitionDirichlet, CoversEverySampleOnce) {
    Dataset d = make_blobs(200, 5, 4, 0.3, 21);
    auto shards = partition_dirichlet(d.labels, d.classes, 6, 0.5, 21);
    std::set<size_t> seen;
    size_t total = 0;
    for (const auto& s : shards) {
        EXPECT_FALSE(s.empty());
        total += s.size();
        seen.insert(s.begin(), s.end());
    }
    EXPECT_EQ(total, 200u);
    EXPECT_EQ(seen.size(), 200u);
}

// Small beta concentrates each client on few labels; huge beta approaches the
// IID per-client label spread. Compare mean per-shard label entropy.
TEST(PartitionDirichlet, BetaControlsSkew) {
    Dataset d = make_blobs(3000, 5, 4, 0.3, 33);
    auto entropy_of = [&](const std::vector<std::vector<size_t>>& shards) {
        double h_sum = 0;
        for (const auto& s : shards) {
            std::vector<double> hist(5, 0.0);
            for (size_t i : s) hist[size_t(d.labels[i])] += 1.0;
            double h = 0;
            for (double v : hist) {
                if (v == 0) continue;
                double p = v / double(s.size());
                h -= p * std::log(p);
            }
            h_sum += h;
        }
        return h_sum / double(shards.size());
    };
    double h_skew = entropy_of(partition_dirichlet(d.labels, 5, 5, 0.05, 33));
    double h_iid = entropy_of(partition_dirichlet(d.labels, 5, 5, 1000.0, 33));
    EXPECT_LT(h_skew, h_iid - 0.3);
    EXPECT_GT(h_iid, std::log(5.0) - 0.05);
}

TEST(Subset, GathersRowsAndLabels) {
    Dataset d = make_blobs(10, 2, 3, 0.1, 2);
    Dataset s = d.subset({7, 2});
    EXPECT_EQ(s.xs.shape, (Shape{2, 3}));
    EXPECT_EQ(s.labels[0], d.labels[7]);
    EXPECT_EQ(s.labels[1], d.labels[2]);
    for (int64_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(s.xs.at2(0, j), d.xs.at2(7, j));
}

TEST(Histogram, NormalizedCounts) {
    Dataset d;
    d.classes = 3;
    d.xs = Tensor::zeros({4, 1});
    d.labels = {0, 0, 1, 2};
    auto h = label_histogram(d);
    EXPECT_DOUBLE_EQ(h[0], 0.5);
    EXPECT_DOUBLE_EQ(h[1], 0.25);
    EXPECT_DOUBLE_EQ(h[2], 0.25);
}

TEST(Rng, DirichletSumsToOne) {
    Rng rng(7);
    for (double beta : {0.1, 1.0, 50.0}) {
        auto p = rng.dirichlet(beta, 6);
        double s = 0;
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Scheduling, BatchScheduleCoversShardOnce) {
    auto batches = batch_schedule(9, 2, 0, 23, 5);
    ASSERT_EQ(batches.size(), 5u);  // ceil(23/5)
    EXPECT_EQ(batches.back().size(), 3u);
    std::set<size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    EXPECT_EQ(seen.size(), 23u);
}

TEST(Scheduling, ProtocolAgnosticStreams) {
    auto a = batch_schedule(9, 2, 4, 23, 5);
    auto b = batch_schedule(9, 2, 4, 23, 5);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, batch_schedule(9, 2, 5, 23, 5));
    EXPECT_NE(a, batch_schedule(9, 3, 4, 23, 5));
}

TEST(Scheduling, VanillaVisitOrderRotation) {
    // round r+1 must open with round r's last client
    for (int64_t r = 0; r < 5; ++r) {
        auto cur = vanilla_visit_order(13, r, 4);
        auto next = vanilla_visit_order(13, r + 1, 4);
        EXPECT_EQ(next.front(), cur.back()) << "round " << r;
    }
    auto one = vanilla_visit_order(13, 3, 1);
    EXPECT_EQ(one, (std::vector<size_t>{0}));
}

TEST(Scheduling, EpslGroupSizes) {
    EXPECT_TRUE(epsl_group(1, 0, 4, 0.0).empty());
    EXPECT_EQ(epsl_group(1, 0, 4, 1.0).size(), 4u);
    EXPECT_EQ(epsl_group(1, 0, 4, 0.5).size(), 2u);
    EXPECT_EQ(epsl_group(1, 0, 4, 0.01).size(), 1u);  // ceil
    auto g = epsl_group(1, 2, 5, 0.6);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}
