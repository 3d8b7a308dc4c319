#include "driver.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fedvec/error.hpp"
#include "fedvec/federation.hpp"
#include "fedvec/vector_io.hpp"

namespace fedvec::driver {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Deletes the files it tracks unless `commit()` is called, so a failed
/// command leaves no partial outputs behind.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const auto& p : paths_) {
            std::error_code ignored;
            fs::remove_all(p, ignored);
        }
    }
    void track(fs::path p) { paths_.push_back(std::move(p)); }
    void commit() { committed_ = true; }

private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = fs::path(path) += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
        out << text;
        if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "missing input " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require(const fs::path& path, const char* what) {
    if (!fs::exists(path)) {
        throw Error(ErrorCode::kIo, std::string("missing ") + what + " " + path.string() + " (run the earlier step first)");
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
            throw Error(ErrorCode::kInvalidArgument, where + ": unknown config key '" + it.key() + "'");
        }
    }
}

Federation open_federation(const RunConfig& config) {
    const Workspace ws{config.out};
    require(ws.manifest(), "corpus manifest");
    Federation federation(import_shards(ws.manifest(), config.density));
    federation.set_max_threads(threads_from_env(1));
    return federation;
}

std::string split_to_json(const QuerySplit& split) {
    ordered_json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    return j.dump() + "\n";
}

QuerySplit split_from_json(const std::string& text) {
    const json j = json::parse(text);
    return {j.at("train").get<std::vector<QueryId>>(), j.at("val").get<std::vector<QueryId>>(),
            j.at("test").get<std::vector<QueryId>>()};
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

/// Recall of each shard queried alone: its share of the global top-k.
std::vector<double> per_shard_recall(const Federation& federation, const FederatedResult& truth) {
    std::vector<double> share(federation.size(), 0.0);
    std::unordered_map<ShardId, std::size_t> position;
    for (std::size_t i = 0; i < federation.size(); ++i) position[federation.shard(i).shard_id()] = i;
    for (const auto& hit : truth.hits) share[position.at(hit.shard_id)] += 1.0;
    for (double& s : share) s /= static_cast<double>(truth.hits.size());
    return share;
}

std::uint64_t median_batch_latency_ns(const RouterModel& model, const std::vector<RoutingFeatures>& rows,
                                      std::size_t repeats) {
    if (rows.empty() || repeats == 0) return 0;
    std::vector<std::uint64_t> samples;
    samples.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto probs = predict_batch(model, rows);
        const auto t1 = std::chrono::steady_clock::now();
        if (probs.size() != rows.size()) throw Error(ErrorCode::kInvalidArgument, "predict_batch size mismatch");
        samples.push_back(static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace

// --- configuration ----------------------------------------------------------

RunConfig load_config(const fs::path& path, RunConfig c) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
    }
    try {
        check_keys(j,
                   {"out", "k", "threshold", "seed", "synthetic", "kmeans_shards", "train", "split", "distance",
                    "density", "manifest", "flat_corpus", "import_clusters", "queries", "latency_repeats"},
                   path.string());
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
        read_if(j, "k", c.k);
        read_if(j, "threshold", c.threshold);
        read_if(j, "seed", c.seed);
        read_if(j, "kmeans_shards", c.kmeans_shards);
        read_if(j, "import_clusters", c.import_clusters);
        read_if(j, "latency_repeats", c.latency_repeats);
        if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
        if (j.contains("flat_corpus")) c.flat_corpus = j.at("flat_corpus").get<std::string>();
        if (j.contains("queries")) c.queries = j.at("queries").get<std::string>();
        if (j.contains("distance")) {
            const auto v = j.at("distance").get<std::string>();
            if (v == "squared") c.distance = DistanceKind::kSquaredEuclidean;
            else if (v == "euclidean") c.distance = DistanceKind::kEuclidean;
            else throw Error(ErrorCode::kInvalidArgument, "distance must be 'squared' or 'euclidean'");
        }
        if (j.contains("density")) {
            const auto v = j.at("density").get<std::string>();
            if (v == "inverse_mean_distance") c.density = DensityKind::kInverseMeanDistance;
            else if (v == "inverse_mean_squared_distance") c.density = DensityKind::kInverseMeanSquaredDistance;
            else throw Error(ErrorCode::kInvalidArgument, "unknown density kind '" + v + "'");
        }
        if (j.contains("synthetic")) {
            const json& s = j.at("synthetic");
            check_keys(s,
                       {"n_clusters", "dim", "min_points_per_cluster", "max_points_per_cluster", "total_points",
                        "center_radius", "cluster_spread", "query_noise", "n_queries"},
                       path.string() + " synthetic");
            read_if(s, "n_clusters", c.synthetic.n_clusters);
            read_if(s, "dim", c.synthetic.dim);
            read_if(s, "min_points_per_cluster", c.synthetic.min_points_per_cluster);
            read_if(s, "max_points_per_cluster", c.synthetic.max_points_per_cluster);
            read_if(s, "total_points", c.synthetic.total_points);
            read_if(s, "center_radius", c.synthetic.center_radius);
            read_if(s, "cluster_spread", c.synthetic.cluster_spread);
            read_if(s, "query_noise", c.synthetic.query_noise);
            read_if(s, "n_queries", c.synthetic.n_queries);
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            check_keys(t,
                       {"lr_min", "lr_max", "cycle_length", "epochs", "batch_size", "pos_weight", "dropout_rate",
                        "momentum", "hidden1", "hidden2"},
                       path.string() + " train");
            read_if(t, "lr_min", c.train.lr_min);
            read_if(t, "lr_max", c.train.lr_max);
            read_if(t, "cycle_length", c.train.cycle_length);
            read_if(t, "epochs", c.train.epochs);
            read_if(t, "batch_size", c.train.batch_size);
            if (t.contains("pos_weight") && !t.at("pos_weight").is_null()) {
                c.train.pos_weight = t.at("pos_weight").get<double>();
            }
            read_if(t, "dropout_rate", c.train.dropout_rate);
            read_if(t, "momentum", c.train.momentum);
            read_if(t, "hidden1", c.train.shape.hidden1);
            read_if(t, "hidden2", c.train.shape.hidden2);
        }
        if (j.contains("split")) {
            const json& s = j.at("split");
            check_keys(s, {"train_frac", "val_frac", "test_frac"}, path.string() + " split");
            read_if(s, "train_frac", c.split.train_frac);
            read_if(s, "val_frac", c.split.val_frac);
            read_if(s, "test_frac", c.split.test_frac);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
    }
    return c;
}

void validate(const RunConfig& c) {
    if (c.k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    if (!(c.threshold > 0.0 && c.threshold < 1.0)) throw Error(ErrorCode::kInvalidArgument, "threshold must be in (0,1)");
    if (c.out.empty()) throw Error(ErrorCode::kInvalidArgument, "output directory is empty");
    if (!c.manifest.empty() && !fs::exists(c.manifest)) {
        throw Error(ErrorCode::kIo, "manifest not found: " + c.manifest.string());
    }
    if (!c.flat_corpus.empty() && !fs::exists(c.flat_corpus)) {
        throw Error(ErrorCode::kIo, "corpus file not found: " + c.flat_corpus.string());
    }
    if (!c.queries.empty() && !fs::exists(c.queries)) {
        throw Error(ErrorCode::kIo, "query file not found: " + c.queries.string());
    }
}

RunConfig with_derived_seeds(RunConfig c) {
    auto derive = [&](std::string_view name) { return Rng::substream(c.seed, name).next_u64(); };
    c.synthetic.seed = derive("data");
    c.split.seed = derive("split");
    c.train.seed = derive("train");
    return c;
}

// --- commands ---------------------------------------------------------------

void cmd_synth(const RunConfig& config, std::ostream& log) {
    validate(config);
    const RunConfig c = with_derived_seeds(config);
    const Workspace ws{c.out};
    fs::create_directories(ws.root);
    OutputGuard guard;
    guard.track(ws.corpus_dir());
    guard.track(ws.queries());

    const SyntheticData data = generate_synthetic(c.synthetic);
    std::vector<ShardIndex> shards;
    if (c.kmeans_shards) {
        shards = kmeans_shard(data.corpus, c.synthetic.n_clusters, Rng::substream(c.seed, "kmeans").next_u64());
    } else {
        std::vector<VectorSet> parts(c.synthetic.n_clusters);
        for (auto& p : parts) p.dimension = c.synthetic.dim;
        for (std::size_t i = 0; i < data.corpus.size(); ++i) {
            parts[data.corpus_clusters[i]].push_back(data.corpus.ids[i], data.corpus.row(i));
        }
        for (std::size_t s = 0; s < parts.size(); ++s) {
            shards.push_back(build_index(static_cast<ShardId>(s), std::move(parts[s]), c.density));
        }
    }
    if (fs::exists(ws.corpus_dir())) fs::remove_all(ws.corpus_dir());
    export_shards(shards, ws.corpus_dir());
    write_vector_file(ws.queries(), data.queries);
    guard.commit();

    log << "synth: " << data.corpus.size() << " vectors in " << shards.size() << " shards (sizes";
    for (const auto& s : shards) log << ' ' << s.size();
    log << "), " << data.queries.size() << " queries -> " << ws.root.string() << '\n';
}

void cmd_import(const RunConfig& config, std::ostream& log) {
    validate(config);
    const RunConfig c = with_derived_seeds(config);
    if (c.manifest.empty() == c.flat_corpus.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "import needs exactly one of 'manifest' or 'flat_corpus'");
    }
    if (c.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "import needs a 'queries' file");
    const Workspace ws{c.out};
    fs::create_directories(ws.root);
    OutputGuard guard;
    guard.track(ws.corpus_dir());
    guard.track(ws.queries());

    std::vector<ShardIndex> shards;
    if (!c.manifest.empty()) {
        shards = import_shards(c.manifest, c.density);
    } else {
        const VectorSet flat = read_vector_file(c.flat_corpus);
        shards = kmeans_shard(flat, c.import_clusters, Rng::substream(c.seed, "kmeans").next_u64());
    }
    const VectorSet queries = read_vector_file(c.queries);
    if (queries.dimension != shards.front().dimension()) {
        throw Error(ErrorCode::kDimensionMismatch, c.queries.string() + ": query dimension " +
                                                       std::to_string(queries.dimension) + " does not match corpus " +
                                                       std::to_string(shards.front().dimension()));
    }
    Federation check(shards);  // rejects duplicate shard ids / mixed dimensions
    (void)check;
    if (fs::exists(ws.corpus_dir())) fs::remove_all(ws.corpus_dir());
    export_shards(shards, ws.corpus_dir());
    write_vector_file(ws.queries(), queries);
    guard.commit();
    log << "import: " << shards.size() << " shards, " << queries.size() << " queries, d=" << queries.dimension
        << " -> " << ws.root.string() << '\n';
}

void cmd_label(const RunConfig& config, std::ostream& log) {
    validate(config);
    const Workspace ws{config.out};
    require(ws.queries(), "query file");
    const Federation federation = open_federation(config);
    const VectorSet queries = read_vector_file(ws.queries());
    OutputGuard guard;
    guard.track(ws.labels());
    const auto examples = generate_labels(federation, queries, config.k, config.distance);
    write_labels_csv(ws.labels(), examples);
    guard.commit();

    std::size_t positives = 0;
    for (const auto& ex : examples) positives += ex.label;
    log << "label: " << examples.size() << " rows (" << queries.size() << " queries x " << federation.size()
        << " shards), positive rate " << static_cast<double>(positives) / static_cast<double>(examples.size())
        << '\n';
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
    validate(config);
    const RunConfig c = with_derived_seeds(config);
    const Workspace ws{c.out};
    require(ws.labels(), "labeled dataset");
    const auto examples = read_labels_csv(ws.labels());
    OutputGuard guard;
    guard.track(ws.model());
    guard.track(ws.train_log());
    guard.track(ws.split());

    TrainResult result = train(examples, c.split, c.train);
    result.model.threshold = c.threshold;
    result.model.distance_kind = c.distance;
    save(result.model, ws.model());

    std::string text = "epoch,mean_loss,val_accuracy,lr_low,lr_high,lr_last,best\n";
    for (const auto& e : result.log) {
        text += std::to_string(e.epoch) + "," + fmt_double(e.mean_loss) + "," + fmt_double(e.val_accuracy) + "," +
                fmt_double(e.lr_low) + "," + fmt_double(e.lr_high) + "," + fmt_double(e.lr_last) + "," +
                (e.epoch == result.best_epoch ? "1" : "0") + "\n";
    }
    write_text(ws.train_log(), text);
    write_text(ws.split(), split_to_json(result.split));
    guard.commit();

    const EpochLog& best = result.log[result.best_epoch - 1];
    log << "train: " << result.log.size() << " epochs, best epoch " << result.best_epoch << " val accuracy "
        << best.val_accuracy << ", pos_weight " << result.pos_weight << " -> " << ws.model().string() << '\n';
    return result;
}

EvalOutcome cmd_eval(const RunConfig& config, std::ostream& log) {
    validate(config);
    const Workspace ws{config.out};
    require(ws.model(), "model");
    require(ws.queries(), "query file");
    require(ws.split(), "split file");
    const RouterModel model = load(ws.model());
    const Federation federation = open_federation(config);
    const VectorSet queries = read_vector_file(ws.queries());
    const QuerySplit split = split_from_json(read_text(ws.split()));
    const std::unordered_set<QueryId> test_ids(split.test.begin(), split.test.end());
    if (test_ids.empty()) throw Error(ErrorCode::kEmptyInput, "test split is empty");

    OutputGuard guard;
    for (const char* name : {"traces.jsonl", "run.json", "report.json", "summary.csv", "recall_by_shard.csv",
                             "queries_by_strategy.csv", "latency.json"}) {
        guard.track(ws.root / name);
    }

    const std::vector<ShardStats> stats = federation.stats();
    std::vector<QueryTrace> traces;
    std::vector<RoutingFeatures> latency_rows;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const QueryId id = queries.ids[q];
        if (!test_ids.contains(id)) continue;
        const auto query = queries.row(q);

        std::vector<RoutingFeatures> rows;
        for (const auto& s : stats) rows.push_back(assemble_features(query, s, model.distance_kind));
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<double> probs = predict_batch(model, rows);
        const auto t1 = std::chrono::steady_clock::now();
        const RoutingDecision decision = decide(id, std::move(probs), config.threshold);
        for (auto& r : rows) {
            if (latency_rows.size() < 32) latency_rows.push_back(std::move(r));
        }

        const FederatedResult truth = federation.naive_search(id, query, config.k);
        const FederatedResult routed = federation.federated_search(decision, query, config.k);
        RoutingDecision oracle;
        oracle.query_id = id;
        oracle.selected = federation.relevant_shards(truth);
        oracle.probabilities.assign(federation.size(), 0.0);
        const FederatedResult oracle_result = federation.federated_search(oracle, query, config.k);

        QueryTrace t;
        t.query_id = id;
        t.probabilities = decision.probabilities;
        t.selected = decision.selected;
        t.m = routed.shards_queried;
        t.recall = retrieval_recall(routed, truth);
        t.bytes_moved = routed.bytes_moved;
        t.latency_ns =
            static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        t.fallback_used = decision.fallback_used;
        t.relevant = oracle.selected;
        t.shard_recall = per_shard_recall(federation, truth);
        t.naive_m = truth.shards_queried;
        t.naive_bytes = truth.bytes_moved;
        t.oracle_m = oracle_result.shards_queried;
        t.oracle_bytes = oracle_result.bytes_moved;
        t.oracle_recall = retrieval_recall(oracle_result, truth);
        traces.push_back(std::move(t));
    }

    std::vector<std::uint32_t> shard_ids;
    for (std::size_t i = 0; i < federation.size(); ++i) shard_ids.push_back(federation.shard(i).shard_id());
    EvalReport report = build_report(traces, shard_ids, config.k, config.threshold);
    report.latency.batch32_inference_ns = median_batch_latency_ns(model, latency_rows, config.latency_repeats);

    write_traces(ws.traces(), traces);
    ordered_json meta;
    meta["k"] = config.k;
    meta["threshold"] = config.threshold;
    meta["shard_ids"] = shard_ids;
    meta["batch32_inference_ns"] = report.latency.batch32_inference_ns;
    write_text(ws.run_meta(), meta.dump(2) + "\n");
    write_report(report, ws.root);
    guard.commit();

    const auto& a = report.aggregate;
    log << "eval: " << a.n_queries << " test queries, mean recall " << a.mean_recall << ", queries routed/oracle/naive "
        << a.total_queries_routed << "/" << a.total_queries_oracle << "/" << a.total_queries_naive << " ("
        << a.query_reduction_pct << "% fewer), bytes " << a.bytes_routed << "/" << a.bytes_oracle << "/"
        << a.bytes_naive << " (" << a.volume_reduction_pct << "% less), AUC " << report.classifier.auc.mean << " +- "
        << report.classifier.auc.stddev << '\n';
    for (const auto& check : quality_checks(report)) {
        log << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.detail << '\n';
    }
    return {std::move(report), std::move(traces)};
}

EvalReport cmd_report(const RunConfig& config, std::ostream& log) {
    const Workspace ws{config.out};
    require(ws.traces(), "trace file");
    require(ws.run_meta(), "run metadata");
    const json meta = json::parse(read_text(ws.run_meta()));
    const auto traces = read_traces(ws.traces());
    const auto shard_ids = meta.at("shard_ids").get<std::vector<std::uint32_t>>();
    EvalReport report =
        build_report(traces, shard_ids, meta.at("k").get<std::size_t>(), meta.at("threshold").get<double>());
    report.latency.batch32_inference_ns = meta.value("batch32_inference_ns", std::uint64_t{0});
    write_report(report, ws.root);
    log << "report: rebuilt from " << traces.size() << " traces -> " << ws.root.string() << '\n';
    return report;
}

EvalOutcome run_pipeline(const RunConfig& config, std::ostream& log) {
    cmd_synth(config, log);
    cmd_label(config, log);
    cmd_train(config, log);
    return cmd_eval(config, log);
}

std::vector<QualityCheck> quality_checks(const EvalReport& report) {
    const auto& a = report.aggregate;
    const auto& c = report.classifier;
    std::vector<QualityCheck> checks;
    auto add = [&](std::string name, bool ok, std::string detail) {
        checks.push_back({std::move(name), ok, std::move(detail)});
    };
    add("router AUC >= 0.90", c.auc.mean >= 0.90 && c.pooled.auc >= 0.90,
        "per-shard mean " + fmt_double(c.auc.mean) + ", pooled " + fmt_double(c.pooled.auc));
    add("routed mean recall >= 0.90", a.mean_recall >= 0.90, fmt_double(a.mean_recall));
    add("routed queries <= 50% of naive", 2 * a.total_queries_routed <= a.total_queries_naive,
        std::to_string(a.total_queries_routed) + " of " + std::to_string(a.total_queries_naive));
    add("oracle <= routed <= naive (queries)",
        a.total_queries_oracle <= a.total_queries_routed && a.total_queries_routed <= a.total_queries_naive,
        std::to_string(a.total_queries_oracle) + " <= " + std::to_string(a.total_queries_routed) + " <= " +
            std::to_string(a.total_queries_naive));
    add("oracle <= routed <= naive (bytes)", a.bytes_oracle <= a.bytes_routed && a.bytes_routed <= a.bytes_naive,
        std::to_string(a.bytes_oracle) + " <= " + std::to_string(a.bytes_routed) + " <= " +
            std::to_string(a.bytes_naive));
    return checks;
}

}  // namespace fedvec::driver
