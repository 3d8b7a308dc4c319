#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedvec {

/// One stored or query embedding. Coordinates are kept in single precision
/// (the on-disk format); all arithmetic on them is done in double.
using EmbeddingVector = std::vector<float>;

using ShardId = std::uint32_t;
using VectorId = std::uint64_t;

/// How shard density is summarized from member-to-centroid distances.
enum class DensityKind : std::uint32_t {
    /// 1 / (1 + mean Euclidean distance to the centroid). Default.
    kInverseMeanDistance = 0,
    /// 1 / (1 + mean squared Euclidean distance to the centroid).
    kInverseMeanSquaredDistance = 1,
};

struct ShardStats {
    std::vector<double> centroid;
    std::uint64_t count = 0;
    double density = 0.0;
    /// Mean Euclidean distance of members to the centroid.
    double mean_distance = 0.0;
};

struct ScoredHit {
    ShardId shard_id = 0;
    VectorId vector_id = 0;
    /// Squared Euclidean distance to the query.
    double distance = 0.0;

    friend bool operator==(const ScoredHit&, const ScoredHit&) = default;
};

/// Global result order: distance, then shard id, then vector id.
inline bool hit_less(const ScoredHit& a, const ScoredHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.shard_id != b.shard_id) return a.shard_id < b.shard_id;
    return a.vector_id < b.vector_id;
}

/// Row-major block of embeddings with their ids. The usual input to
/// `build_index` and the unit read from / written to vector files.
struct VectorSet {
    std::size_t dimension = 0;
    std::vector<VectorId> ids;
    std::vector<float> values;  // ids.size() * dimension

    std::size_t size() const { return ids.size(); }
    std::span<const float> row(std::size_t i) const {
        return {values.data() + i * dimension, dimension};
    }
    void push_back(VectorId id, std::span<const float> embedding);
};

double squared_l2(std::span<const float> a, std::span<const float> b);
double squared_l2(std::span<const float> a, std::span<const double> b);

/// Flat exact-search index over one shard. Immutable once built, so
/// concurrent searches are safe.
class ShardIndex {
public:
    ShardId shard_id() const { return shard_id_; }
    std::size_t dimension() const { return vectors_.dimension; }
    std::size_t size() const { return vectors_.size(); }
    const ShardStats& stats() const { return stats_; }
    const VectorSet& vectors() const { return vectors_; }

private:
    friend ShardIndex build_index(ShardId, VectorSet, DensityKind);

    ShardId shard_id_ = 0;
    VectorSet vectors_;
    ShardStats stats_;
};

/// Throws Error on empty input, inconsistent dimensions, non-finite
/// coordinates or duplicate vector ids.
ShardIndex build_index(ShardId shard_id, VectorSet vectors,
                       DensityKind density = DensityKind::kInverseMeanDistance);

/// min(k, size) nearest vectors, ascending by (distance, shard_id, vector_id).
std::vector<ScoredHit> search_top_k(const ShardIndex& index, std::span<const float> query,
                                    std::size_t k);

/// Squared Euclidean distance from the query to the shard centroid.
double shard_distance(std::span<const float> query, const ShardStats& stats);

}  // namespace fedvec
