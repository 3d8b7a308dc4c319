#include "fedvec/features.hpp"

#include <cmath>
#include <string>

#include "fedvec/error.hpp"

namespace fedvec {

RoutingFeatures assemble_features(std::span<const float> query, const ShardStats& stats,
                                  DistanceKind distance) {
    const std::size_t d = query.size();
    const double sq = shard_distance(query, stats);  // validates dimensions

    RoutingFeatures out;
    out.reserve(feature_length(d));
    for (float q : query) out.push_back(q);
    out.insert(out.end(), stats.centroid.begin(), stats.centroid.end());
    out.push_back(distance == DistanceKind::kEuclidean ? std::sqrt(sq) : sq);
    out.push_back(static_cast<double>(stats.count));
    out.push_back(stats.density);
    for (double v : out) {
        if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite routing feature");
    }
    return out;
}

ScalerParams fit_scaler(std::span<const RoutingFeatures> rows) {
    if (rows.size() < 2) {
        throw Error(ErrorCode::kEmptyInput, "fit_scaler needs at least 2 rows, got " + std::to_string(rows.size()));
    }
    const std::size_t width = rows.front().size();
    ScalerParams params;
    params.mean.assign(width, 0.0);
    params.stddev.assign(width, 0.0);
    for (const auto& row : rows) {
        if (row.size() != width) throw Error(ErrorCode::kDimensionMismatch, "fit_scaler: ragged rows");
        for (std::size_t j = 0; j < width; ++j) params.mean[j] += row[j];
    }
    const double n = static_cast<double>(rows.size());
    for (double& m : params.mean) m /= n;
    // Two-pass variance; the shifted sum keeps precision on large offsets.
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < width; ++j) {
            const double diff = row[j] - params.mean[j];
            params.stddev[j] += diff * diff;
        }
    }
    for (double& s : params.stddev) s = std::max(std::sqrt(s / n), kStddevFloor);
    return params;
}

RoutingFeatures transform(const ScalerParams& params, std::span<const double> row) {
    if (row.size() != params.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "transform: row length " + std::to_string(row.size()) +
                                                       ", scaler length " + std::to_string(params.size()));
    }
    RoutingFeatures out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - params.mean[j]) / params.stddev[j];
    return out;
}

RoutingFeatures inverse_transform(const ScalerParams& params, std::span<const double> row) {
    if (row.size() != params.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "inverse_transform: length mismatch");
    }
    RoutingFeatures out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] * params.stddev[j] + params.mean[j];
    return out;
}

}  // namespace fedvec
