#include "fedvec/federation.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

#include "fedvec/error.hpp"

namespace fedvec {

std::size_t RoutingDecision::selected_count() const {
    return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true));
}

std::uint64_t request_bytes(std::size_t dimension) { return 8 + 4 * std::uint64_t{dimension}; }

std::uint64_t response_bytes(std::size_t dimension, std::size_t embeddings) {
    return std::uint64_t{embeddings} * (8 + 4 * std::uint64_t{dimension});
}

RoutingDecision decide(QueryId query_id, std::vector<double> probabilities, double threshold) {
    if (probabilities.empty()) throw Error(ErrorCode::kInvalidArgument, "routing needs at least one shard");
    RoutingDecision decision;
    decision.query_id = query_id;
    decision.selected.resize(probabilities.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        decision.selected[i] = probabilities[i] >= threshold;
        if (probabilities[i] > probabilities[best]) best = i;
    }
    if (decision.selected_count() == 0) {
        decision.selected[best] = true;
        decision.fallback_used = true;
    }
    decision.probabilities = std::move(probabilities);
    return decision;
}

std::vector<ScoredHit> merge_top_k(std::span<const std::vector<ScoredHit>> partials, std::size_t k) {
    std::vector<ScoredHit> all;
    for (const auto& part : partials) all.insert(all.end(), part.begin(), part.end());
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), hit_less);
    all.resize(keep);
    return all;
}

Federation::Federation(std::vector<ShardIndex> shards) {
    if (shards.empty()) throw Error(ErrorCode::kEmptyInput, "federation needs at least one shard");
    std::sort(shards.begin(), shards.end(),
              [](const ShardIndex& a, const ShardIndex& b) { return a.shard_id() < b.shard_id(); });
    dimension_ = shards.front().dimension();
    for (std::size_t i = 0; i < shards.size(); ++i) {
        if (shards[i].dimension() != dimension_) {
            throw Error(ErrorCode::kDimensionMismatch, "shard " + std::to_string(shards[i].shard_id()) +
                                                           " has dimension " + std::to_string(shards[i].dimension()) +
                                                           ", expected " + std::to_string(dimension_));
        }
        if (i > 0 && shards[i].shard_id() == shards[i - 1].shard_id()) {
            throw Error(ErrorCode::kDuplicateId, "duplicate shard_id " + std::to_string(shards[i].shard_id()));
        }
    }
    available_.assign(shards.size(), true);
    shards_ = std::make_shared<const std::vector<ShardIndex>>(std::move(shards));
}

std::vector<ShardStats> Federation::stats() const {
    std::vector<ShardStats> out;
    out.reserve(size());
    for (const auto& s : *shards_) out.push_back(s.stats());
    return out;
}

void Federation::set_available(std::size_t position, bool available) {
    if (position >= size()) throw Error(ErrorCode::kInvalidArgument, "no shard at position " + std::to_string(position));
    available_[position] = available;
}

std::size_t Federation::position_of(ShardId id) const {
    for (std::size_t i = 0; i < size(); ++i) {
        if ((*shards_)[i].shard_id() == id) return i;
    }
    throw Error(ErrorCode::kShardUnavailable, "unknown shard " + std::to_string(id));
}

RoutingDecision Federation::route(const RouterModel& model, QueryId query_id, std::span<const float> query) const {
    if (model.dimension() != dimension_ || query.size() != dimension_) {
        throw Error(ErrorCode::kDimensionMismatch, "router/query dimension does not match the federation (" +
                                                       std::to_string(dimension_) + ")");
    }
    std::vector<RoutingFeatures> rows;
    rows.reserve(size());
    for (const auto& s : *shards_) rows.push_back(assemble_features(query, s.stats(), model.distance_kind));
    return decide(query_id, predict_batch(model, rows), model.threshold);
}

std::vector<std::vector<ScoredHit>> Federation::scatter(const std::vector<bool>& selected, std::span<const float> query,
                                                        std::size_t k) const {
    if (selected.size() != size()) {
        throw Error(ErrorCode::kInvalidArgument, "routing decision covers " + std::to_string(selected.size()) +
                                                     " shards, federation has " + std::to_string(size()));
    }
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    if (query.size() != dimension_) {
        throw Error(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                                       ", federation has " + std::to_string(dimension_));
    }
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!selected[i]) continue;
        if (!available_[i]) {
            throw Error(ErrorCode::kShardUnavailable,
                        "selected shard " + std::to_string(shard(i).shard_id()) + " is unavailable");
        }
        targets.push_back(i);
    }

    std::vector<std::vector<ScoredHit>> partials(size());
    const std::size_t workers = std::min(max_threads_, targets.size());
    if (workers <= 1) {
        for (std::size_t i : targets) partials[i] = search_top_k(shard(i), query, k);
        return partials;
    }
    // Each worker fills disjoint slots; the merge later is order independent.
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t t = w; t < targets.size(); t += workers) {
                        partials[targets[t]] = search_top_k(shard(targets[t]), query, k);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return partials;
}

FederatedResult Federation::federated_search(const RoutingDecision& decision, std::span<const float> query,
                                             std::size_t k) const {
    const std::vector<bool>& sel = decision.selected;
    const auto partials = scatter(sel, query, k);
    FederatedResult result;
    result.query_id = decision.query_id;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!sel[i]) continue;
        ++result.shards_queried;
        result.embeddings_returned += partials[i].size();
    }
    result.hits = merge_top_k(partials, k);
    result.bytes_moved = result.shards_queried * request_bytes(dimension_) +
                         response_bytes(dimension_, result.embeddings_returned);
    return result;
}

FederatedResult Federation::naive_search(QueryId query_id, std::span<const float> query, std::size_t k) const {
    RoutingDecision all;
    all.query_id = query_id;
    all.selected.assign(size(), true);
    all.probabilities.assign(size(), 1.0);
    return federated_search(all, query, k);
}

std::vector<bool> Federation::relevant_shards(const FederatedResult& truth) const {
    std::vector<bool> relevant(size(), false);
    for (const auto& hit : truth.hits) relevant[position_of(hit.shard_id)] = true;
    return relevant;
}

std::size_t threads_from_env(std::size_t fallback) {
    const char* value = std::getenv("FEDVEC_THREADS");
    if (value == nullptr || *value == '\0') return fallback;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(value, &end, 10);
    if (end == value || *end != '\0' || parsed == 0) return fallback;
    return static_cast<std::size_t>(parsed);
}

std::vector<LabeledExample> generate_labels(const Federation& federation, const VectorSet& queries, std::size_t k,
                                            DistanceKind distance) {
    if (queries.size() == 0) throw Error(ErrorCode::kEmptyInput, "generate_labels needs at least one query");
    if (queries.dimension != federation.dimension()) {
        throw Error(ErrorCode::kDimensionMismatch, "query dimension " + std::to_string(queries.dimension) +
                                                       " does not match federation " +
                                                       std::to_string(federation.dimension()));
    }
    const std::vector<ShardStats> stats = federation.stats();
    std::vector<LabeledExample> out;
    out.reserve(queries.size() * federation.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto query = queries.row(q);
        const FederatedResult truth = federation.naive_search(queries.ids[q], query, k);
        const std::vector<bool> relevant = federation.relevant_shards(truth);
        for (std::size_t s = 0; s < federation.size(); ++s) {
            LabeledExample ex;
            ex.features = assemble_features(query, stats[s], distance);
            ex.label = relevant[s] ? 1 : 0;
            ex.query_id = queries.ids[q];
            ex.shard_id = federation.shard(s).shard_id();
            out.push_back(std::move(ex));
        }
    }
    return out;
}

}  // namespace fedvec
