#pragma once

#include <filesystem>
#include <vector>

#include "fedvec/vector_store.hpp"

namespace fedvec {

/// Binary vector file ("FVR1"), little-endian:
///
///   magic   "FVR1"          4 bytes
///   dim     u32
///   count   u64
///   count x { id u64, dim x f32 }
///
/// Used for shard contents and for query sets (query_id in the id field).
void write_vector_file(const std::filesystem::path& path, const VectorSet& vectors);
VectorSet read_vector_file(const std::filesystem::path& path);

struct ManifestEntry {
    ShardId shard_id = 0;
    std::filesystem::path path;
};

/// JSON sidecar: {"dimension": d, "shards": [{"shard_id": s, "path": p}, ...]}.
/// Relative paths are resolved against the manifest's directory on read.
struct Manifest {
    std::size_t dimension = 0;
    std::vector<ManifestEntry> shards;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace fedvec
