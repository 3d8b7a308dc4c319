#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fedvec {

using QueryId = std::uint64_t;

/// Question-level train/validation/test split. All rows belonging to one
/// query land in the same part.
struct SplitSpec {
    double train_frac = 0.30;
    double val_frac = 0.10;
    double test_frac = 0.60;
    std::uint64_t seed = 0;
};

struct QuerySplit {
    std::vector<QueryId> train;
    std::vector<QueryId> val;
    std::vector<QueryId> test;
};

/// Deterministic under `spec.seed`. Requires at least 10 distinct ids and
/// fractions that sum to 1. Each part is returned sorted ascending.
QuerySplit split_by_query(std::span<const QueryId> query_ids, const SplitSpec& spec);

}  // namespace fedvec
