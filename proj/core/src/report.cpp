#include <charconv>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "binary_stream.hpp"
#include "fedvec/error.hpp"
#include "fedvec/metrics.hpp"

namespace fedvec {

using ojson = nlohmann::ordered_json;

const std::vector<std::string> kSummaryColumns = {
    "k",
    "threshold",
    "n_shards",
    "n_queries",
    "mean_recall",
    "oracle_mean_recall",
    "total_queries_naive",
    "total_queries_oracle",
    "total_queries_routed",
    "query_reduction_pct",
    "oracle_query_reduction_pct",
    "bytes_naive",
    "bytes_oracle",
    "bytes_routed",
    "volume_reduction_pct",
    "oracle_volume_reduction_pct",
    "fallback_count",
    "accuracy_mean",
    "accuracy_std",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
    "f1_mean",
    "f1_std",
    "auc_mean",
    "auc_std",
    "auc_pooled",
};

namespace {

std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

std::string num(std::uint64_t v) { return std::to_string(v); }

ojson to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}, {"count", m.count}}; }

MeanStd mean_std_from(const nlohmann::json& j) {
    return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("count").get<std::size_t>()};
}

ojson to_json(const ClassifierMetrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"auc", m.auc},
            {"precision_defined", m.precision_defined},
            {"recall_defined", m.recall_defined},
            {"auc_defined", m.auc_defined},
            {"count", m.count},
            {"positives", m.positives}};
}

ClassifierMetrics metrics_from(const nlohmann::json& j) {
    ClassifierMetrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    m.auc = j.at("auc").get<double>();
    m.precision_defined = j.at("precision_defined").get<bool>();
    m.recall_defined = j.at("recall_defined").get<bool>();
    m.auc_defined = j.at("auc_defined").get<bool>();
    m.count = j.at("count").get<std::size_t>();
    m.positives = j.at("positives").get<std::size_t>();
    return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
    ojson j;
    j["k"] = r.k;
    j["threshold"] = r.threshold;
    j["shard_ids"] = r.shard_ids;
    const EfficiencySummary& a = r.aggregate;
    j["aggregate"] = {{"n_queries", a.n_queries},
                      {"n_shards", a.n_shards},
                      {"mean_recall", a.mean_recall},
                      {"oracle_mean_recall", a.oracle_mean_recall},
                      {"total_queries_naive", a.total_queries_naive},
                      {"total_queries_oracle", a.total_queries_oracle},
                      {"total_queries_routed", a.total_queries_routed},
                      {"query_reduction_pct", a.query_reduction_pct},
                      {"oracle_query_reduction_pct", a.oracle_query_reduction_pct},
                      {"bytes_naive", a.bytes_naive},
                      {"bytes_oracle", a.bytes_oracle},
                      {"bytes_routed", a.bytes_routed},
                      {"volume_reduction_pct", a.volume_reduction_pct},
                      {"oracle_volume_reduction_pct", a.oracle_volume_reduction_pct},
                      {"fallback_count", a.fallback_count}};
    const ClassifierSummary& c = r.classifier;
    ojson per_shard = ojson::array();
    for (const auto& m : c.per_shard) per_shard.push_back(to_json(m));
    j["classifier"] = {{"accuracy", to_json(c.accuracy)},
                       {"precision", to_json(c.precision)},
                       {"recall", to_json(c.recall)},
                       {"f1", to_json(c.f1)},
                       {"auc", to_json(c.auc)},
                       {"pooled", to_json(c.pooled)},
                       {"per_shard", per_shard}};
    j["recall_by_shard"] = r.recall_by_shard;
    ojson rows = ojson::array();
    for (const auto& q : r.per_query) {
        rows.push_back({{"query_id", q.query_id}, {"recall", q.recall}, {"m", q.m}, {"bytes_moved", q.bytes_moved}});
    }
    j["per_query"] = rows;
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        EvalReport r;
        r.k = j.at("k").get<std::size_t>();
        r.threshold = j.at("threshold").get<double>();
        r.shard_ids = j.at("shard_ids").get<std::vector<std::uint32_t>>();
        const auto& a = j.at("aggregate");
        EfficiencySummary& s = r.aggregate;
        s.n_queries = a.at("n_queries").get<std::size_t>();
        s.n_shards = a.at("n_shards").get<std::size_t>();
        s.mean_recall = a.at("mean_recall").get<double>();
        s.oracle_mean_recall = a.at("oracle_mean_recall").get<double>();
        s.total_queries_naive = a.at("total_queries_naive").get<std::uint64_t>();
        s.total_queries_oracle = a.at("total_queries_oracle").get<std::uint64_t>();
        s.total_queries_routed = a.at("total_queries_routed").get<std::uint64_t>();
        s.query_reduction_pct = a.at("query_reduction_pct").get<double>();
        s.oracle_query_reduction_pct = a.at("oracle_query_reduction_pct").get<double>();
        s.bytes_naive = a.at("bytes_naive").get<std::uint64_t>();
        s.bytes_oracle = a.at("bytes_oracle").get<std::uint64_t>();
        s.bytes_routed = a.at("bytes_routed").get<std::uint64_t>();
        s.volume_reduction_pct = a.at("volume_reduction_pct").get<double>();
        s.oracle_volume_reduction_pct = a.at("oracle_volume_reduction_pct").get<double>();
        s.fallback_count = a.at("fallback_count").get<std::size_t>();
        const auto& c = j.at("classifier");
        r.classifier.accuracy = mean_std_from(c.at("accuracy"));
        r.classifier.precision = mean_std_from(c.at("precision"));
        r.classifier.recall = mean_std_from(c.at("recall"));
        r.classifier.f1 = mean_std_from(c.at("f1"));
        r.classifier.auc = mean_std_from(c.at("auc"));
        r.classifier.pooled = metrics_from(c.at("pooled"));
        for (const auto& m : c.at("per_shard")) r.classifier.per_shard.push_back(metrics_from(m));
        r.recall_by_shard = j.at("recall_by_shard").get<std::vector<double>>();
        for (const auto& q : j.at("per_query")) {
            r.per_query.push_back({q.at("query_id").get<QueryId>(), q.at("recall").get<double>(),
                                   q.at("m").get<std::size_t>(), q.at("bytes_moved").get<std::uint64_t>()});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMalformed, std::string("bad report: ") + e.what());
    }
}

void write_report(const EvalReport& r, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string());

    write_text(out_dir / "report.json", report_to_json(r));

    const EfficiencySummary& a = r.aggregate;
    const ClassifierSummary& c = r.classifier;
    const std::vector<std::string> values = {
        num(std::uint64_t{r.k}),
        num(r.threshold),
        num(std::uint64_t{a.n_shards}),
        num(std::uint64_t{a.n_queries}),
        num(a.mean_recall),
        num(a.oracle_mean_recall),
        num(a.total_queries_naive),
        num(a.total_queries_oracle),
        num(a.total_queries_routed),
        num(a.query_reduction_pct),
        num(a.oracle_query_reduction_pct),
        num(a.bytes_naive),
        num(a.bytes_oracle),
        num(a.bytes_routed),
        num(a.volume_reduction_pct),
        num(a.oracle_volume_reduction_pct),
        num(std::uint64_t{a.fallback_count}),
        num(c.accuracy.mean),
        num(c.accuracy.stddev),
        num(c.precision.mean),
        num(c.precision.stddev),
        num(c.recall.mean),
        num(c.recall.stddev),
        num(c.f1.mean),
        num(c.f1.stddev),
        num(c.auc.mean),
        num(c.auc.stddev),
        num(c.pooled.auc),
    };
    std::string summary;
    for (std::size_t i = 0; i < kSummaryColumns.size(); ++i) summary += (i ? "," : "") + kSummaryColumns[i];
    summary += '\n';
    for (std::size_t i = 0; i < values.size(); ++i) summary += (i ? "," : "") + values[i];
    summary += '\n';
    write_text(out_dir / "summary.csv", summary);

    std::string by_shard = "source,mean_recall\n";
    for (std::size_t s = 0; s < r.recall_by_shard.size(); ++s) {
        by_shard += "shard_" + std::to_string(r.shard_ids[s]) + "," + num(r.recall_by_shard[s]) + "\n";
    }
    by_shard += "routed," + num(a.mean_recall) + "\n";
    write_text(out_dir / "recall_by_shard.csv", by_shard);

    std::string strategies = "strategy,total_queries,total_bytes,mean_recall\n";
    strategies += "naive," + num(a.total_queries_naive) + "," + num(a.bytes_naive) + ",1\n";
    strategies += "oracle," + num(a.total_queries_oracle) + "," + num(a.bytes_oracle) + "," +
                  num(a.oracle_mean_recall) + "\n";
    strategies += "predicted," + num(a.total_queries_routed) + "," + num(a.bytes_routed) + "," +
                  num(a.mean_recall) + "\n";
    write_text(out_dir / "queries_by_strategy.csv", strategies);

    ojson latency = {{"p50_ns", r.latency.p50_ns},
                     {"p95_ns", r.latency.p95_ns},
                     {"batch32_inference_ns", r.latency.batch32_inference_ns}};
    write_text(out_dir / "latency.json", latency.dump(2) + "\n");
}

}  // namespace fedvec
