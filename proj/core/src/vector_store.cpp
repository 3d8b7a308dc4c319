#include "fedvec/vector_store.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "fedvec/error.hpp"

namespace fedvec {

void VectorSet::push_back(VectorId id, std::span<const float> embedding) {
    if (embedding.size() != dimension) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "embedding has dimension " + std::to_string(embedding.size()) + ", expected " +
                        std::to_string(dimension));
    }
    ids.push_back(id);
    values.insert(values.end(), embedding.begin(), embedding.end());
}

double squared_l2(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += diff * diff;
    }
    return sum;
}

double squared_l2(std::span<const float> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        sum += diff * diff;
    }
    return sum;
}

ShardIndex build_index(ShardId shard_id, VectorSet vectors, DensityKind density) {
    const std::string where = "shard " + std::to_string(shard_id) + ": ";
    if (vectors.size() == 0) throw Error(ErrorCode::kEmptyInput, where + "no vectors");
    if (vectors.dimension == 0) throw Error(ErrorCode::kInvalidArgument, where + "dimension is 0");
    if (vectors.values.size() != vectors.size() * vectors.dimension) {
        throw Error(ErrorCode::kDimensionMismatch, where + "value block does not match ids x dimension");
    }
    for (float v : vectors.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, where + "non-finite coordinate");
    }
    std::unordered_set<VectorId> seen;
    seen.reserve(vectors.size());
    for (VectorId id : vectors.ids) {
        if (!seen.insert(id).second) {
            throw Error(ErrorCode::kDuplicateId, where + "duplicate vector_id " + std::to_string(id));
        }
    }

    const std::size_t d = vectors.dimension;
    const std::size_t n = vectors.size();
    ShardStats stats;
    stats.count = n;
    stats.centroid.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = vectors.row(i);
        for (std::size_t j = 0; j < d; ++j) stats.centroid[j] += row[j];
    }
    for (double& c : stats.centroid) c /= static_cast<double>(n);

    double sum_dist = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sq = squared_l2(vectors.row(i), std::span<const double>(stats.centroid));
        sum_sq += sq;
        sum_dist += std::sqrt(sq);
    }
    stats.mean_distance = sum_dist / static_cast<double>(n);
    switch (density) {
        case DensityKind::kInverseMeanDistance:
            stats.density = 1.0 / (1.0 + stats.mean_distance);
            break;
        case DensityKind::kInverseMeanSquaredDistance:
            stats.density = 1.0 / (1.0 + sum_sq / static_cast<double>(n));
            break;
    }

    ShardIndex index;
    index.shard_id_ = shard_id;
    index.vectors_ = std::move(vectors);
    index.stats_ = std::move(stats);
    return index;
}

std::vector<ScoredHit> search_top_k(const ShardIndex& index, std::span<const float> query,
                                    std::size_t k) {
    if (query.size() != index.dimension()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "query has dimension " + std::to_string(query.size()) + ", shard " +
                        std::to_string(index.shard_id()) + " has " + std::to_string(index.dimension()));
    }
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");

    const VectorSet& vs = index.vectors();
    const std::size_t keep = std::min(k, vs.size());
    // Max-heap of the best `keep` hits seen so far; the root is the worst kept.
    std::vector<ScoredHit> heap;
    heap.reserve(keep + 1);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        ScoredHit hit{index.shard_id(), vs.ids[i], squared_l2(query, vs.row(i))};
        if (heap.size() < keep) {
            heap.push_back(hit);
            std::push_heap(heap.begin(), heap.end(), hit_less);
        } else if (hit_less(hit, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), hit_less);
            heap.back() = hit;
            std::push_heap(heap.begin(), heap.end(), hit_less);
        }
    }
    std::sort_heap(heap.begin(), heap.end(), hit_less);
    return heap;
}

double shard_distance(std::span<const float> query, const ShardStats& stats) {
    if (query.size() != stats.centroid.size()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "query has dimension " + std::to_string(query.size()) + ", centroid has " +
                        std::to_string(stats.centroid.size()));
    }
    return squared_l2(query, std::span<const double>(stats.centroid));
}

}  // namespace fedvec
