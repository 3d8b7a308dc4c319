#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedvec/router_model.hpp"
#include "fedvec/split.hpp"
#include "fedvec/vector_io.hpp"
#include "fedvec/vector_store.hpp"

namespace fedvec {

// --- k-means sharding -------------------------------------------------------

struct KMeansOptions {
    std::size_t max_iterations = 100;
    double tolerance = 1e-6;  // relative inertia change
};

struct KMeansResult {
    std::vector<std::uint32_t> assignment;  // cluster per input row
    std::vector<std::vector<double>> centroids;
    std::vector<double> inertia_history;  // after each assignment step
    std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded to
/// the point farthest from its current centroid. Deterministic under `seed`.
KMeansResult kmeans(const VectorSet& vectors, std::size_t clusters, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Splits a flat corpus into one ShardIndex per k-means cluster; shard ids
/// are cluster numbers and vector ids are carried over.
std::vector<ShardIndex> kmeans_shard(const VectorSet& vectors, std::size_t clusters, std::uint64_t seed,
                                     const KMeansOptions& options = {}, KMeansResult* details = nullptr);

// --- synthetic benchmark data -----------------------------------------------

struct SyntheticSpec {
    std::size_t n_clusters = 10;
    std::size_t dim = 32;
    std::size_t min_points_per_cluster = 400;
    std::size_t max_points_per_cluster = 2000;
    /// Total corpus size; cluster sizes are log-normal shares of it clamped
    /// to [min, max]. 0 means the midpoint of the range per cluster.
    std::size_t total_points = 10000;
    double center_radius = 0.8;
    double cluster_spread = 1.0;
    double query_noise = 0.5;
    std::size_t n_queries = 2000;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    VectorSet corpus;                            // ids 0..N-1
    std::vector<std::uint32_t> corpus_clusters;  // generator label per corpus row
    VectorSet queries;                           // ids 0..Q-1
    std::vector<std::uint32_t> query_clusters;
    std::vector<std::vector<double>> centers;
};

/// Pure function of `spec`.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// --- import / export --------------------------------------------------------

/// Loads every shard listed in the manifest, checking each file's dimension
/// against the manifest and the others.
std::vector<ShardIndex> import_shards(const std::filesystem::path& manifest_path,
                                      DensityKind density = DensityKind::kInverseMeanDistance);

/// Writes one vector file per shard into `directory` plus manifest.json.
/// Returns the manifest path.
std::filesystem::path export_shards(std::span<const ShardIndex> shards, const std::filesystem::path& directory);

// --- labeled datasets -------------------------------------------------------

/// CSV: query_id,shard_id,label,f0..f{2d+2}; values printed with 17
/// significant digits so reading back is exact.
void write_labels_csv(const std::filesystem::path& path, std::span<const LabeledExample> examples);
std::vector<LabeledExample> read_labels_csv(const std::filesystem::path& path);

}  // namespace fedvec
