#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedvec/federation.hpp"
#include "fedvec/trace.hpp"

namespace fedvec {

/// |routed ids ∩ truth ids| / |truth ids|. Both results must be for the
/// same query and the truth must be nonempty.
double retrieval_recall(const FederatedResult& routed, const FederatedResult& truth);

struct Prediction {
    double probability = 0.0;
    int label = 0;
};

struct ClassifierMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    bool precision_defined = true;  // false when nothing was predicted positive
    bool recall_defined = true;     // false when there are no positive labels
    bool auc_defined = true;        // false for single-class labels
    std::size_t count = 0;
    std::size_t positives = 0;
};

/// Threshold metrics at `threshold` (probability >= threshold is positive)
/// plus rank-statistic AUC. Undefined ratios are reported as 0 with the
/// matching flag cleared.
ClassifierMetrics classifier_metrics(std::span<const Prediction> predictions, double threshold);

/// Mann-Whitney AUC with average ranks for ties (ties count 1/2). Throws
/// when either class is absent.
double rank_auc(std::span<const Prediction> predictions);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population, across shards
    std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

struct EfficiencySummary {
    std::size_t n_queries = 0;
    std::size_t n_shards = 0;
    double mean_recall = 0.0;
    double oracle_mean_recall = 0.0;
    std::uint64_t total_queries_naive = 0;
    std::uint64_t total_queries_oracle = 0;
    std::uint64_t total_queries_routed = 0;
    double query_reduction_pct = 0.0;
    double oracle_query_reduction_pct = 0.0;
    std::uint64_t bytes_naive = 0;
    std::uint64_t bytes_oracle = 0;
    std::uint64_t bytes_routed = 0;
    double volume_reduction_pct = 0.0;
    double oracle_volume_reduction_pct = 0.0;
    std::size_t fallback_count = 0;
};

/// query_reduction_pct = 100 * (1 - sum(m) / (Q * n)); the volume figure is
/// the same ratio over bytes. Throws on empty traces.
EfficiencySummary efficiency_summary(std::span<const QueryTrace> traces, std::size_t n_shards);

struct ClassifierSummary {
    MeanStd accuracy;
    MeanStd precision;
    MeanStd recall;
    MeanStd f1;
    MeanStd auc;  // over shards whose test labels contain both classes
    ClassifierMetrics pooled;  // every (query, shard) pair together
    std::vector<ClassifierMetrics> per_shard;
};

/// One-vs-rest metrics per shard from the trace probabilities and
/// ground-truth labels, then mean and stddev across shards.
ClassifierSummary classifier_summary(std::span<const QueryTrace> traces, std::size_t n_shards, double threshold);

struct LatencySummary {
    std::uint64_t p50_ns = 0;
    std::uint64_t p95_ns = 0;
    std::uint64_t batch32_inference_ns = 0;  // median of repeated runs; 0 if not measured
};

/// Nearest-rank percentile of the trace latencies.
LatencySummary latency_summary(std::span<const QueryTrace> traces);

struct PerQueryRow {
    QueryId query_id = 0;
    double recall = 0.0;
    std::size_t m = 0;
    std::uint64_t bytes_moved = 0;

    friend bool operator==(const PerQueryRow&, const PerQueryRow&) = default;
};

struct EvalReport {
    std::size_t k = 0;
    double threshold = 0.5;
    std::vector<std::uint32_t> shard_ids;
    std::vector<PerQueryRow> per_query;
    EfficiencySummary aggregate;
    ClassifierSummary classifier;
    std::vector<double> recall_by_shard;  // mean recall of each shard queried alone
    LatencySummary latency;
};

/// Pure fold over the traces.
EvalReport build_report(std::span<const QueryTrace> traces, std::span<const std::uint32_t> shard_ids,
                        std::size_t k, double threshold);

/// Column order of summary.csv.
extern const std::vector<std::string> kSummaryColumns;

/// Writes report.json, summary.csv, recall_by_shard.csv and
/// queries_by_strategy.csv (all deterministic) plus latency.json (wall-clock
/// measurements) into `out_dir`.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace fedvec
