#include <algorithm>
#include <cstdlib>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fedvec/error.hpp"
#include "fedvec/federation.hpp"
#include "test_support.hpp"

using namespace fedvec;
using fedvec::test::random_set;

namespace {

// n shards of varying size with globally unique ids, scattered around
// different offsets so shards differ.
std::vector<ShardIndex> make_shards(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::vector<ShardIndex> out;
    VectorId next = 0;
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t count = 20 + 13 * s;
        auto set = random_set(count, dim, seed * 100 + s, next);
        for (std::size_t i = 0; i < set.values.size(); i += dim) set.values[i] += static_cast<float>(s);
        next += count;
        out.push_back(build_index(static_cast<ShardId>(s), set));
    }
    return out;
}

std::vector<ScoredHit> centralized(const std::vector<ShardIndex>& shards, std::span<const float> q, std::size_t k) {
    std::vector<ScoredHit> all;
    for (const auto& s : shards)
        for (std::size_t i = 0; i < s.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < s.dimension(); ++j) {
                double diff = static_cast<double>(s.vectors().row(i)[j]) - q[j];
                d += diff * diff;
            }
            all.push_back({s.shard_id(), s.vectors().ids[i], d});
        }
    std::sort(all.begin(), all.end(), hit_less);
    all.resize(std::min(k, all.size()));
    return all;
}

VectorSet one_row(VectorId id, std::vector<float> v) {
    VectorSet s;
    s.dimension = v.size();
    s.push_back(id, v);
    return s;
}

}  // namespace

TEST(Decide, Threshold) {
    auto d = decide(3, {0.9, 0.1, 0.6}, 0.5);
    EXPECT_EQ(d.selected, (std::vector<bool>{true, false, true}));
    EXPECT_EQ(d.selected_count(), 2u);
    EXPECT_FALSE(d.fallback_used);
    EXPECT_EQ(decide(0, {0.5}, 0.5).selected_count(), 1u);
}

TEST(Decide, FallbackToArgmax) {
    auto d = decide(0, {0.2, 0.2, 0.2}, 0.5);
    EXPECT_EQ(d.selected, (std::vector<bool>{true, false, false}));
    EXPECT_TRUE(d.fallback_used);
    auto e = decide(0, {0.1, 0.3, 0.2}, 0.5);
    EXPECT_EQ(e.selected, (std::vector<bool>{false, true, false}));
    EXPECT_FEDVEC_ERROR(decide(0, {}, 0.5), ErrorCode::kInvalidArgument);
}

TEST(Merge, TwoLists) {
    std::vector<std::vector<ScoredHit>> parts{{{0, 10, 1.0}, {0, 11, 3.0}}, {{1, 20, 2.0}, {1, 21, 9.0}}};
    auto merged = merge_top_k(parts, 2);
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].distance, 1.0);
    EXPECT_EQ(merged[1].distance, 2.0);
    EXPECT_EQ(merged[1].shard_id, 1u);
}

TEST(Merge, TieOrder) {
    std::vector<std::vector<ScoredHit>> parts{{{2, 5, 1.0}}, {{1, 9, 1.0}}, {{1, 3, 1.0}}};
    auto merged = merge_top_k(parts, 3);
    EXPECT_EQ(merged, (std::vector<ScoredHit>{{1, 3, 1.0}, {1, 9, 1.0}, {2, 5, 1.0}}));
}

TEST(Federation, SingleShardIdentity) {
    Federation fed(make_shards(4, 6, 1));
    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
        auto q = fedvec::test::random_vector(6, rng);
        RoutingDecision d;
        d.selected = {false, false, true, false};
        d.probabilities.assign(4, 0.0);
        auto r = fed.federated_search(d, q, 5);
        EXPECT_EQ(r.hits, search_top_k(fed.shard(2), q, 5));
        EXPECT_EQ(r.shards_queried, 1u);
    }
}

TEST(Federation, NaiveEqualsCentralized) {
    auto shards = make_shards(6, 8, 3);
    Federation fed(shards);
    Rng rng(4);
    for (std::size_t k : {1u, 5u, 10u, 32u, 1000u}) {
        for (int i = 0; i < 20; ++i) {
            auto q = fedvec::test::random_vector(8, rng);
            auto r = fed.naive_search(i, q, k);
            EXPECT_EQ(r.hits, centralized(shards, q, k));
            EXPECT_EQ(r.shards_queried, 6u);
            std::size_t expected_returned = 0;
            for (auto& s : shards) expected_returned += std::min(k, s.size());
            EXPECT_EQ(r.embeddings_returned, expected_returned);
            EXPECT_EQ(r.bytes_moved, 6 * request_bytes(8) + response_bytes(8, expected_returned));
        }
    }
}

TEST(Federation, ByteAccounting) {
    EXPECT_EQ(request_bytes(32), 8u + 128u);
    EXPECT_EQ(response_bytes(32, 10), 10u * 136u);
    Federation fed(make_shards(5, 4, 5));
    Rng rng(6);
    auto q = fedvec::test::random_vector(4, rng);
    auto naive = fed.naive_search(0, q, 10);
    for (unsigned mask = 1; mask < 31; ++mask) {
        RoutingDecision d;
        d.probabilities.assign(5, 0.0);
        for (int s = 0; s < 5; ++s) d.selected.push_back(mask >> s & 1);
        auto r = fed.federated_search(d, q, 10);
        EXPECT_LT(r.bytes_moved, naive.bytes_moved);
        EXPECT_EQ(r.shards_queried, d.selected_count());
    }
}

TEST(Federation, UnavailableShard) {
    Federation fed(make_shards(3, 4, 7));
    fed.set_available(1, false);
    std::vector<float> q(4, 0.0f);
    try {
        fed.naive_search(0, q, 3);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kShardUnavailable);
        EXPECT_NE(std::string(e.what()).find("shard 1"), std::string::npos) << e.what();
    }
    RoutingDecision d;
    d.probabilities.assign(3, 0.0);
    d.selected = {true, false, true};
    EXPECT_NO_THROW(fed.federated_search(d, q, 3));
}

TEST(Federation, ConstructionErrors) {
    std::vector<ShardIndex> dup;
    dup.push_back(build_index(1, one_row(0, {1, 2})));
    dup.push_back(build_index(1, one_row(1, {1, 2})));
    EXPECT_FEDVEC_ERROR(Federation{dup}, ErrorCode::kDuplicateId);
    std::vector<ShardIndex> mixed;
    mixed.push_back(build_index(0, one_row(0, {1, 2})));
    mixed.push_back(build_index(1, one_row(1, {1, 2, 3})));
    EXPECT_FEDVEC_ERROR(Federation{mixed}, ErrorCode::kDimensionMismatch);
    EXPECT_FEDVEC_ERROR(Federation{{}}, ErrorCode::kEmptyInput);
}

TEST(Federation, ShardsOrderedById) {
    std::vector<ShardIndex> shards;
    shards.push_back(build_index(9, one_row(0, {0})));
    shards.push_back(build_index(2, one_row(1, {5})));
    Federation fed(shards);
    EXPECT_EQ(fed.shard(0).shard_id(), 2u);
    EXPECT_EQ(fed.shard(1).shard_id(), 9u);
}

TEST(Federation, ThreadCountDoesNotChangeResults) {
    Federation fed(make_shards(8, 8, 9));
    Rng rng(10);
    std::vector<std::vector<float>> qs;
    for (int i = 0; i < 15; ++i) qs.push_back(fedvec::test::random_vector(8, rng));
    std::vector<FederatedResult> single;
    for (std::size_t i = 0; i < qs.size(); ++i) single.push_back(fed.naive_search(i, qs[i], 10));
    fed.set_max_threads(4);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        auto r = fed.naive_search(i, qs[i], 10);
        EXPECT_EQ(r.hits, single[i].hits);
        EXPECT_EQ(r.bytes_moved, single[i].bytes_moved);
    }
}

TEST(Federation, ThreadsFromEnv) {
    ::setenv("FEDVEC_THREADS", "3", 1);
    EXPECT_EQ(threads_from_env(1), 3u);
    ::setenv("FEDVEC_THREADS", "zero", 1);
    EXPECT_EQ(threads_from_env(2), 2u);
    ::unsetenv("FEDVEC_THREADS");
    EXPECT_EQ(threads_from_env(5), 5u);
}

TEST(Federation, RouteUsesModel) {
    Federation fed(make_shards(3, 2, 11));
    RouterModel zero(2, {4, 3});
    std::vector<float> q{0.5f, -0.5f};
    auto d = fed.route(zero, 4, q);
    EXPECT_EQ(d.query_id, 4u);
    EXPECT_EQ(d.probabilities, std::vector<double>(3, 0.5));
    EXPECT_EQ(d.selected_count(), 3u);
    zero.threshold = 0.6;
    auto f = fed.route(zero, 4, q);
    EXPECT_TRUE(f.fallback_used);
    EXPECT_EQ(f.selected, (std::vector<bool>{true, false, false}));
}

TEST(GenerateLabels, SingleSourceShard) {
    std::vector<ShardIndex> shards;
    for (ShardId s = 0; s < 5; ++s) {
        float c = s == 3 ? 0.0f : 100.0f + s;
        VectorSet set;
        set.dimension = 2;
        for (int i = 0; i < 4; ++i) {
            std::vector<float> v{c + 0.1f * i, c};
            set.push_back(s * 10 + i, v);
        }
        shards.push_back(build_index(s, set));
    }
    Federation fed(shards);
    VectorSet queries = one_row(0, {0.0f, 0.0f});
    auto ex = generate_labels(fed, queries, 3);
    ASSERT_EQ(ex.size(), 5u);
    std::vector<int> labels;
    for (auto& e : ex) labels.push_back(e.label);
    EXPECT_EQ(labels, (std::vector<int>{0, 0, 0, 1, 0}));
    EXPECT_EQ(ex[3].shard_id, 3u);
    EXPECT_EQ(ex[3].features, assemble_features(queries.row(0), fed.shard(3).stats()));

    auto all = generate_labels(fed, queries, 100);
    for (auto& e : all) EXPECT_EQ(e.label, 1);
}

TEST(GenerateLabels, MatchesCentralizedOracle) {
    auto shards = make_shards(5, 6, 12);
    Federation fed(shards);
    auto queries = random_set(40, 6, 13, 500);
    auto ex = generate_labels(fed, queries, 10);
    ASSERT_EQ(ex.size(), 200u);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        std::set<ShardId> contributing;
        for (auto& h : centralized(shards, queries.row(qi), 10)) contributing.insert(h.shard_id);
        int positives = 0;
        for (std::size_t s = 0; s < 5; ++s) {
            const auto& e = ex[qi * 5 + s];
            EXPECT_EQ(e.query_id, queries.ids[qi]);
            EXPECT_EQ(e.label, contributing.count(e.shard_id) ? 1 : 0);
            positives += e.label;
        }
        EXPECT_GE(positives, 1);
    }
}

TEST(GenerateLabels, OracleRoutingHasFullRecall) {
    Federation fed(make_shards(6, 5, 14));
    auto queries = random_set(30, 5, 15);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        auto truth = fed.naive_search(qi, queries.row(qi), 10);
        RoutingDecision d;
        d.selected = fed.relevant_shards(truth);
        d.probabilities.assign(6, 0.0);
        auto r = fed.federated_search(d, queries.row(qi), 10);
        EXPECT_EQ(r.hits, truth.hits);
        EXPECT_LE(r.bytes_moved, truth.bytes_moved);
    }
}
