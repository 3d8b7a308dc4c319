#include "fedvec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "fedvec/error.hpp"

namespace fedvec {

double retrieval_recall(const FederatedResult& routed, const FederatedResult& truth) {
    if (routed.query_id != truth.query_id) {
        throw Error(ErrorCode::kInvalidArgument, "recall: query ids differ (" + std::to_string(routed.query_id) +
                                                     " vs " + std::to_string(truth.query_id) + ")");
    }
    if (truth.hits.empty()) throw Error(ErrorCode::kEmptyInput, "recall: ground truth is empty");
    std::set<std::pair<ShardId, VectorId>> wanted;
    for (const auto& h : truth.hits) wanted.emplace(h.shard_id, h.vector_id);
    std::size_t found = 0;
    for (const auto& h : routed.hits) found += wanted.count({h.shard_id, h.vector_id});
    return static_cast<double>(found) / static_cast<double>(wanted.size());
}

double rank_auc(std::span<const Prediction> predictions) {
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return predictions[a].probability < predictions[b].probability;
    });
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && predictions[order[j]].probability == predictions[order[i]].probability) ++j;
        // Ranks i+1..j share their average.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (predictions[order[t]].label == 1) {
                positive_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = predictions.size() - positives;
    if (positives == 0 || negatives == 0) throw Error(ErrorCode::kInvalidArgument, "AUC needs both classes");
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

ClassifierMetrics classifier_metrics(std::span<const Prediction> predictions, double threshold) {
    if (predictions.empty()) throw Error(ErrorCode::kEmptyInput, "classifier_metrics needs predictions");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& p : predictions) {
        if (p.label != 0 && p.label != 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
        const bool predicted = p.probability >= threshold;
        if (predicted && p.label == 1) ++tp;
        else if (predicted) ++fp;
        else if (p.label == 1) ++fn;
        else ++tn;
    }
    ClassifierMetrics m;
    m.count = predictions.size();
    m.positives = tp + fn;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.count);
    m.precision_defined = tp + fp > 0;
    m.precision = m.precision_defined ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall_defined = tp + fn > 0;
    m.recall = m.recall_defined ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.auc_defined = m.positives > 0 && m.positives < m.count;
    m.auc = m.auc_defined ? rank_auc(predictions) : 0.0;
    return m;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    out.count = values.size();
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size()));
    return out;
}

EfficiencySummary efficiency_summary(std::span<const QueryTrace> traces, std::size_t n_shards) {
    if (traces.empty()) throw Error(ErrorCode::kEmptyInput, "efficiency_summary: no traces");
    if (n_shards == 0) throw Error(ErrorCode::kInvalidArgument, "efficiency_summary: no shards");
    EfficiencySummary s;
    s.n_queries = traces.size();
    s.n_shards = n_shards;
    double recall_sum = 0.0;
    double oracle_recall_sum = 0.0;
    for (const auto& t : traces) {
        recall_sum += t.recall;
        oracle_recall_sum += t.oracle_recall;
        s.total_queries_routed += t.m;
        s.total_queries_oracle += t.oracle_m;
        s.total_queries_naive += t.naive_m;
        s.bytes_routed += t.bytes_moved;
        s.bytes_oracle += t.oracle_bytes;
        s.bytes_naive += t.naive_bytes;
        s.fallback_count += t.fallback_used ? 1 : 0;
    }
    const double q = static_cast<double>(traces.size());
    s.mean_recall = recall_sum / q;
    s.oracle_mean_recall = oracle_recall_sum / q;
    const double all_queries = q * static_cast<double>(n_shards);
    s.query_reduction_pct = 100.0 * (1.0 - static_cast<double>(s.total_queries_routed) / all_queries);
    s.oracle_query_reduction_pct = 100.0 * (1.0 - static_cast<double>(s.total_queries_oracle) / all_queries);
    if (s.bytes_naive > 0) {
        const double naive = static_cast<double>(s.bytes_naive);
        s.volume_reduction_pct = 100.0 * (1.0 - static_cast<double>(s.bytes_routed) / naive);
        s.oracle_volume_reduction_pct = 100.0 * (1.0 - static_cast<double>(s.bytes_oracle) / naive);
    }
    return s;
}

ClassifierSummary classifier_summary(std::span<const QueryTrace> traces, std::size_t n_shards, double threshold) {
    if (traces.empty()) throw Error(ErrorCode::kEmptyInput, "classifier_summary: no traces");
    std::vector<std::vector<Prediction>> by_shard(n_shards);
    std::vector<Prediction> pooled;
    for (const auto& t : traces) {
        if (t.probabilities.size() != n_shards || t.relevant.size() != n_shards) {
            throw Error(ErrorCode::kMalformed, "trace for query " + std::to_string(t.query_id) +
                                                   " does not cover every shard");
        }
        for (std::size_t s = 0; s < n_shards; ++s) {
            const Prediction p{t.probabilities[s], t.relevant[s] ? 1 : 0};
            by_shard[s].push_back(p);
            pooled.push_back(p);
        }
    }
    ClassifierSummary out;
    std::vector<double> acc, prec, rec, f1, auc;
    for (const auto& preds : by_shard) {
        const ClassifierMetrics m = classifier_metrics(preds, threshold);
        acc.push_back(m.accuracy);
        prec.push_back(m.precision);
        rec.push_back(m.recall);
        f1.push_back(m.f1);
        if (m.auc_defined) auc.push_back(m.auc);
        out.per_shard.push_back(m);
    }
    out.accuracy = mean_std(acc);
    out.precision = mean_std(prec);
    out.recall = mean_std(rec);
    out.f1 = mean_std(f1);
    out.auc = mean_std(auc);
    out.pooled = classifier_metrics(pooled, threshold);
    return out;
}

LatencySummary latency_summary(std::span<const QueryTrace> traces) {
    LatencySummary out;
    if (traces.empty()) return out;
    std::vector<std::uint64_t> ns;
    ns.reserve(traces.size());
    for (const auto& t : traces) ns.push_back(t.latency_ns);
    std::sort(ns.begin(), ns.end());
    auto rank = [&](double pct) {
        const auto idx = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(ns.size())));
        return ns[std::clamp<std::size_t>(idx, 1, ns.size()) - 1];
    };
    out.p50_ns = rank(50.0);
    out.p95_ns = rank(95.0);
    return out;
}

EvalReport build_report(std::span<const QueryTrace> traces, std::span<const std::uint32_t> shard_ids, std::size_t k,
                        double threshold) {
    const std::size_t n = shard_ids.size();
    EvalReport report;
    report.k = k;
    report.threshold = threshold;
    report.shard_ids.assign(shard_ids.begin(), shard_ids.end());
    report.aggregate = efficiency_summary(traces, n);
    report.classifier = classifier_summary(traces, n, threshold);
    report.latency = latency_summary(traces);
    report.recall_by_shard.assign(n, 0.0);
    for (const auto& t : traces) {
        report.per_query.push_back({t.query_id, t.recall, t.m, t.bytes_moved});
        if (t.shard_recall.size() != n) {
            throw Error(ErrorCode::kMalformed, "trace for query " + std::to_string(t.query_id) +
                                                   " lacks per-shard recall");
        }
        for (std::size_t s = 0; s < n; ++s) report.recall_by_shard[s] += t.shard_recall[s];
    }
    for (double& r : report.recall_by_shard) r /= static_cast<double>(traces.size());
    return report;
}

}  // namespace fedvec
