#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedvec/vector_store.hpp"

namespace fedvec {

/// Which distance fills the query-centroid slot of the routing features.
enum class DistanceKind : std::uint32_t {
    kSquaredEuclidean = 0,
    kEuclidean = 1,
};

/// Router input for one (query, shard) pair, length 2d+3:
///
///   [0, d)      query embedding
///   [d, 2d)     shard centroid
///   2d          query-centroid distance
///   2d+1        shard item count
///   2d+2        shard density
using RoutingFeatures = std::vector<double>;

constexpr std::size_t feature_length(std::size_t dimension) { return 2 * dimension + 3; }

RoutingFeatures assemble_features(std::span<const float> query, const ShardStats& stats,
                                  DistanceKind distance = DistanceKind::kSquaredEuclidean);

/// Per-column standardization parameters (population stddev, floored).
struct ScalerParams {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t size() const { return mean.size(); }
};

inline constexpr double kStddevFloor = 1e-8;

/// Needs at least two rows of equal length.
ScalerParams fit_scaler(std::span<const RoutingFeatures> rows);

RoutingFeatures transform(const ScalerParams& params, std::span<const double> row);
RoutingFeatures inverse_transform(const ScalerParams& params, std::span<const double> row);

}  // namespace fedvec
