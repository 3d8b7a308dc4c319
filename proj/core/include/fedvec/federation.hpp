#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fedvec/router_model.hpp"
#include "fedvec/vector_store.hpp"

namespace fedvec {

struct RoutingDecision {
    QueryId query_id = 0;
    std::vector<double> probabilities;  // one per shard, federation order
    std::vector<bool> selected;
    bool fallback_used = false;

    std::size_t selected_count() const;
};

struct FederatedResult {
    QueryId query_id = 0;
    std::vector<ScoredHit> hits;  // global top-k, ascending (distance, shard, id)
    std::size_t shards_queried = 0;
    std::size_t embeddings_returned = 0;
    std::uint64_t bytes_moved = 0;
};

/// Request: one 8-byte id plus the d x f32 query per contacted shard.
/// Response: 8-byte id plus d x f32 coordinates per returned embedding.
std::uint64_t request_bytes(std::size_t dimension);
std::uint64_t response_bytes(std::size_t dimension, std::size_t embeddings);

/// Thresholds per-shard probabilities; when nothing clears the threshold the
/// single highest-probability shard (lowest index on ties) is selected.
RoutingDecision decide(QueryId query_id, std::vector<double> probabilities, double threshold);

/// Merges per-shard top-k lists into the global k smallest under `hit_less`.
std::vector<ScoredHit> merge_top_k(std::span<const std::vector<ScoredHit>> partials, std::size_t k);

/// A set of shards searched together. Shards are held in ascending shard_id
/// order; routing vectors are indexed by that position.
class Federation {
public:
    explicit Federation(std::vector<ShardIndex> shards);

    std::size_t size() const { return shards_->size(); }
    std::size_t dimension() const { return dimension_; }
    const ShardIndex& shard(std::size_t position) const { return (*shards_)[position]; }
    std::vector<ShardStats> stats() const;

    /// Cap on concurrent shard searches (1 = sequential). Results do not
    /// depend on it.
    void set_max_threads(std::size_t threads) { max_threads_ = threads == 0 ? 1 : threads; }
    std::size_t max_threads() const { return max_threads_; }

    /// Simulates an outage; searches that select the shard then fail.
    void set_available(std::size_t position, bool available);
    bool available(std::size_t position) const { return available_[position]; }

    /// One probability per shard from the model; see `decide`.
    RoutingDecision route(const RouterModel& model, QueryId query_id, std::span<const float> query) const;

    /// Queries exactly the selected shards and merges to the global top-k.
    FederatedResult federated_search(const RoutingDecision& decision, std::span<const float> query,
                                     std::size_t k) const;

    /// All shards selected: ground truth and the cost baseline.
    FederatedResult naive_search(QueryId query_id, std::span<const float> query, std::size_t k) const;

    /// Ground-truth relevance: shard i is relevant iff it contributes a hit
    /// to the global top-k.
    std::vector<bool> relevant_shards(const FederatedResult& truth) const;

    /// Per-shard top-k lists for the selected positions (unselected lists
    /// stay empty).
    std::vector<std::vector<ScoredHit>> scatter(const std::vector<bool>& selected, std::span<const float> query,
                                                std::size_t k) const;

private:
    std::size_t position_of(ShardId id) const;

    std::shared_ptr<const std::vector<ShardIndex>> shards_;
    std::size_t dimension_ = 0;
    std::size_t max_threads_ = 1;
    std::vector<bool> available_;
};

/// Reads FEDVEC_THREADS; returns `fallback` when unset or invalid.
std::size_t threads_from_env(std::size_t fallback = 1);

/// For each query: naive search, then one LabeledExample per shard with raw
/// features and label 1 iff that shard appears in the global top-k.
std::vector<LabeledExample> generate_labels(const Federation& federation, const VectorSet& queries, std::size_t k,
                                            DistanceKind distance = DistanceKind::kSquaredEuclidean);

}  // namespace fedvec
