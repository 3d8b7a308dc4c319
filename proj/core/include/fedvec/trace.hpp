#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedvec/split.hpp"

namespace fedvec {

/// One evaluated query, one JSON object per line in traces.jsonl.
///
/// The first seven fields are the routed-query record; the rest carry the
/// naive and oracle baselines and per-shard detail so every report number
/// can be recomputed from the trace file alone.
struct QueryTrace {
    QueryId query_id = 0;
    std::vector<double> probabilities;
    std::vector<bool> selected;
    std::size_t m = 0;
    double recall = 0.0;
    std::uint64_t bytes_moved = 0;
    std::uint64_t latency_ns = 0;  // router inference only

    bool fallback_used = false;
    std::vector<bool> relevant;  // ground-truth labels (oracle routing)
    std::vector<double> shard_recall;  // recall if only that shard were queried
    std::size_t naive_m = 0;
    std::uint64_t naive_bytes = 0;
    std::size_t oracle_m = 0;
    std::uint64_t oracle_bytes = 0;
    double oracle_recall = 0.0;

    friend bool operator==(const QueryTrace&, const QueryTrace&) = default;
};

std::string trace_to_json_line(const QueryTrace& trace);
QueryTrace trace_from_json_line(const std::string& line);

void write_traces(const std::filesystem::path& path, std::span<const QueryTrace> traces);
std::vector<QueryTrace> read_traces(const std::filesystem::path& path);

}  // namespace fedvec
