// Runs the end-to-end acceptance checks and prints one PASS/FAIL line per
// criterion. Usage: fedvec_acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "driver.hpp"
#include "fedvec/dataset.hpp"
#include "fedvec/error.hpp"
#include "fedvec/federation.hpp"
#include "fedvec/metrics.hpp"
#include "fedvec/random.hpp"
#include "fedvec/router_model.hpp"
#include "fedvec/trace.hpp"

using namespace fedvec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
    if (!o.passed) ++failures;
}

void run(int id, const std::string& name, const std::function<Outcome()>& check) {
    try {
        report(id, name, check());
    } catch (const std::exception& e) {
        report(id, name, {false, std::string("exception: ") + e.what()});
    }
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream ss;
    ss.precision(precision);
    ss << v;
    return ss.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- criteria 1 and 2: 10 shards x ~1k vectors, dim 32, 1000 queries ------

struct Fixture {
    std::vector<ShardIndex> shards;
    VectorSet queries;
};

Fixture make_fixture() {
    SyntheticSpec spec;
    spec.n_clusters = 10;
    spec.dim = 32;
    spec.total_points = 10000;
    spec.min_points_per_cluster = 800;
    spec.max_points_per_cluster = 1200;
    spec.n_queries = 1000;
    spec.seed = 2024;
    SyntheticData data = generate_synthetic(spec);
    return {kmeans_shard(data.corpus, 10, 5), std::move(data.queries)};
}

// Centralized brute force: every distance over the union, full sort.
std::vector<ScoredHit> centralized_top_k(const std::vector<ShardIndex>& shards, std::span<const float> q,
                                         std::size_t k) {
    std::vector<ScoredHit> all;
    for (const auto& s : shards) {
        const VectorSet& v = s.vectors();
        for (std::size_t i = 0; i < v.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < v.dimension; ++j) {
                const double diff = static_cast<double>(v.row(i)[j]) - static_cast<double>(q[j]);
                d += diff * diff;
            }
            all.push_back({s.shard_id(), v.ids[i], d});
        }
    }
    std::sort(all.begin(), all.end(), [](const ScoredHit& a, const ScoredHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.shard_id != b.shard_id) return a.shard_id < b.shard_id;
        return a.vector_id < b.vector_id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

Outcome merge_equivalence(const Fixture& fx) {
    Federation fed(fx.shards);
    fed.set_max_threads(1);
    std::size_t mismatches = 0, compared = 0;
    double federated_seconds = 0.0;
    for (std::size_t k : {10u, 32u}) {
        for (std::size_t q = 0; q < fx.queries.size(); ++q) {
            RoutingDecision all;
            all.query_id = q;
            all.probabilities.assign(fed.size(), 1.0);
            all.selected.assign(fed.size(), true);
            const auto t0 = Clock::now();
            const FederatedResult r = fed.federated_search(all, fx.queries.row(q), k);
            federated_seconds += seconds_since(t0);
            const auto expected = centralized_top_k(fx.shards, fx.queries.row(q), k);
            ++compared;
            if (r.hits.size() != expected.size()) {
                ++mismatches;
                continue;
            }
            for (std::size_t i = 0; i < expected.size(); ++i) {
                if (r.hits[i].vector_id != expected[i].vector_id || r.hits[i].distance != expected[i].distance) {
                    ++mismatches;
                    break;
                }
            }
        }
    }
    std::size_t sizes_min = SIZE_MAX, sizes_max = 0;
    for (const auto& s : fx.shards) {
        sizes_min = std::min(sizes_min, s.size());
        sizes_max = std::max(sizes_max, s.size());
    }
    return {mismatches == 0 && federated_seconds < 60.0,
            std::to_string(compared - mismatches) + "/" + std::to_string(compared) +
                " queries exact (k=10,32; shard sizes " + std::to_string(sizes_min) + ".." +
                std::to_string(sizes_max) + "), federated search time " + fmt(federated_seconds, 3) + " s"};
}

Outcome oracle_recall(const Fixture& fx) {
    Federation fed(fx.shards);
    double recall_sum = 0.0;
    std::size_t n = 0;
    double min_recall = 1.0;
    for (std::size_t k : {10u, 32u}) {
        for (std::size_t q = 0; q < fx.queries.size(); ++q) {
            const FederatedResult truth = fed.naive_search(q, fx.queries.row(q), k);
            RoutingDecision oracle;
            oracle.query_id = q;
            oracle.selected = fed.relevant_shards(truth);
            oracle.probabilities.assign(fed.size(), 0.0);
            const double r = retrieval_recall(fed.federated_search(oracle, fx.queries.row(q), k), truth);
            recall_sum += r;
            min_recall = std::min(min_recall, r);
            ++n;
        }
    }
    const double mean = recall_sum / static_cast<double>(n);
    return {mean == 1.0, "mean recall " + fmt(mean, 17) + ", min " + fmt(min_recall) + " over " + std::to_string(n)};
}

// --- criterion 3 ----------------------------------------------------------

// Hand-rolled eval-mode pass returning every hidden pre-activation (affine
// output before layer-norm) and every post-norm affine value (before ReLU).
struct HiddenValues {
    std::vector<std::vector<double>> pre;     // per layer
    std::vector<std::vector<double>> affine;  // per layer
};

/// `column` picks this row's dropout multipliers when `masks` is given.
HiddenValues hidden_values(const RouterModel& m, std::span<const double> x, const DropoutMasks* masks = nullptr,
                           std::size_t column = 0) {
    const double* p = m.parameters().data();
    HiddenValues out;
    std::vector<double> input(x.begin(), x.end());
    const char* names[2][4] = {{"W1", "b1", "gain1", "bias1"}, {"W2", "b2", "gain2", "bias2"}};
    const std::size_t widths[2] = {m.shape().hidden1, m.shape().hidden2};
    for (int layer = 0; layer < 2; ++layer) {
        const std::size_t units = widths[layer];
        const double* W = p + m.block(names[layer][0]).offset;
        const double* b = p + m.block(names[layer][1]).offset;
        const double* gain = p + m.block(names[layer][2]).offset;
        const double* bias = p + m.block(names[layer][3]).offset;
        std::vector<double> z(b, b + units);
        for (std::size_t i = 0; i < input.size(); ++i) {
            const double xi = input[i];
            if (xi == 0.0) continue;
            for (std::size_t o = 0; o < units; ++o) z[o] += W[o + i * units] * xi;
        }
        double mean = 0.0, var = 0.0;
        for (double v : z) mean += v;
        mean /= static_cast<double>(units);
        for (double v : z) var += (v - mean) * (v - mean);
        var /= static_cast<double>(units);
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        const std::vector<double>* mask = masks ? (layer == 0 ? &masks->hidden1 : &masks->hidden2) : nullptr;
        std::vector<double> a(units), next(units);
        for (std::size_t o = 0; o < units; ++o) {
            a[o] = gain[o] * (z[o] - mean) * inv_std + bias[o];
            next[o] = std::max(0.0, a[o]) * (mask ? (*mask)[o + column * units] : 1.0);
        }
        out.pre.push_back(std::move(z));
        out.affine.push_back(std::move(a));
        input = std::move(next);
    }
    return out;
}

// ReLU on/off pattern over a batch; a change between the two ends of a
// finite-difference stencil means the stencil straddles a kink.
std::vector<bool> relu_pattern(const RouterModel& m, const std::vector<RoutingFeatures>& rows,
                               const DropoutMasks* masks) {
    std::vector<bool> pattern;
    for (std::size_t c = 0; c < rows.size(); ++c) {
        const HiddenValues h = hidden_values(m, rows[c], masks, c);
        for (const auto& layer : h.affine)
            for (double v : layer) pattern.push_back(v > 0.0);
    }
    return pattern;
}

Outcome gradient_check() {
    const auto start = Clock::now();
    RouterModel model = RouterModel::initialized(32, {}, 99);
    Rng rng(123);
    // Move biases and gains away from their initial values so every block
    // has a generic gradient.
    for (const auto& b : model.blocks()) {
        const std::string name = b.name;
        if (name[0] == 'W' || name == "w3") continue;
        for (std::size_t i = 0; i < b.size; ++i) {
            model.parameters()[b.offset + i] = (name.rfind("gain", 0) == 0 ? 1.0 : 0.0) + 0.2 * rng.normal();
        }
    }
    const double h = 1e-4;
    double worst = 0.0, worst_at_kink = 0.0;
    std::size_t checked = 0, failed = 0, kinks = 0;
    for (int batch = 0; batch < 20; ++batch) {
        const std::size_t size = 4 + rng.below(29);
        std::vector<RoutingFeatures> rows(size, RoutingFeatures(model.input_size()));
        std::vector<double> labels(size);
        for (auto& r : rows)
            for (auto& v : r) v = rng.normal();
        for (auto& y : labels) y = rng.bernoulli(0.2) ? 1.0 : 0.0;
        const double pos_weight = 1.0 + 5.0 * rng.uniform();
        const DropoutMasks masks = sample_dropout_masks(model, size, rng);
        const DropoutMasks* mk = batch % 2 == 0 ? &masks : nullptr;
        const BatchGradient g = backward(model, rows, labels, pos_weight, mk);
        for (const auto& b : model.blocks()) {
            // six per block: 60 parameters per batch, all ten tensors
            for (int s = 0; s < 6;) {
                const std::size_t i = b.offset + rng.below(b.size);
                const double saved = model.parameters()[i];
                model.parameters()[i] = saved + h;
                const double up = batch_loss(model, rows, labels, pos_weight, mk);
                const auto pattern_up = relu_pattern(model, rows, mk);
                model.parameters()[i] = saved - h;
                const double down = batch_loss(model, rows, labels, pos_weight, mk);
                const auto pattern_down = relu_pattern(model, rows, mk);
                model.parameters()[i] = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max({std::abs(numeric), std::abs(g.grad[i]), 1e-6});
                const double rel = std::abs(numeric - g.grad[i]) / denom;
                if (pattern_up != pattern_down) {
                    // the loss is not differentiable inside this stencil
                    ++kinks;
                    worst_at_kink = std::max(worst_at_kink, rel);
                    continue;
                }
                worst = std::max(worst, rel);
                failed += rel < 1e-3 ? 0 : 1;
                ++checked;
                ++s;
            }
        }
    }
    const double secs = seconds_since(start);
    return {failed == 0 && secs < 30.0,
            std::to_string(checked) + " parameter checks over 20 batches (60 per batch, all 10 tensors), " +
                std::to_string(failed) + " over 1e-3, worst relative error " + fmt(worst, 3) + "; " +
                std::to_string(kinks) + " draws resampled because the stencil crossed a ReLU kink (worst there " +
                fmt(worst_at_kink, 3) + "), " + fmt(secs, 3) + " s"};
}

// --- criteria 4 to 8: default synthetic pipeline ---------------------------

driver::RunConfig default_run(const fs::path& out) {
    driver::RunConfig c;
    c.out = out;
    return c;
}

Outcome pipeline_quality(const EvalReport& r) {
    const auto& a = r.aggregate;
    const double auc_mean = r.classifier.auc.mean;
    const double auc_pooled = r.classifier.pooled.auc;
    const double ratio = static_cast<double>(a.total_queries_routed) / static_cast<double>(a.total_queries_naive);
    const bool ok = auc_mean >= 0.90 && auc_pooled >= 0.90 && a.mean_recall >= 0.90 && ratio <= 0.50;
    return {ok, "AUC per-shard mean " + fmt(auc_mean) + " (std " + fmt(r.classifier.auc.stddev) + "), pooled " +
                    fmt(auc_pooled) + "; routed recall " + fmt(a.mean_recall) + "; routed/naive queries " +
                    std::to_string(a.total_queries_routed) + "/" + std::to_string(a.total_queries_naive) + " = " +
                    fmt(100.0 * ratio, 4) + "%"};
}

Outcome sandwich(const fs::path& run_dir) {
    const auto traces = read_traces(run_dir / "traces.jsonl");
    const auto report = nlohmann::json::parse(slurp(run_dir / "report.json"));
    std::uint64_t q_naive = 0, q_oracle = 0, q_routed = 0, b_naive = 0, b_oracle = 0, b_routed = 0;
    std::size_t per_query_violations = 0;
    for (const auto& t : traces) {
        q_naive += t.naive_m;
        q_oracle += t.oracle_m;
        q_routed += t.m;
        b_naive += t.naive_bytes;
        b_oracle += t.oracle_bytes;
        b_routed += t.bytes_moved;
        per_query_violations += (t.m <= t.naive_m && t.bytes_moved <= t.naive_bytes) ? 0 : 1;
    }
    const std::size_t n_shards = report.at("shard_ids").size();
    const double expect_q = 100.0 * (1.0 - static_cast<double>(q_routed) /
                                               (static_cast<double>(traces.size()) * static_cast<double>(n_shards)));
    const double expect_b = 100.0 * (1.0 - static_cast<double>(b_routed) / static_cast<double>(b_naive));
    const auto& agg = report.at("aggregate");
    const double got_q = agg.at("query_reduction_pct").get<double>();
    const double got_b = agg.at("volume_reduction_pct").get<double>();
    const bool order = q_oracle <= q_routed && q_routed <= q_naive && b_oracle <= b_routed && b_routed <= b_naive;
    const bool recomputed = std::abs(got_q - expect_q) <= 1e-9 && std::abs(got_b - expect_b) <= 1e-9;
    return {order && recomputed && per_query_violations == 0,
            "queries " + std::to_string(q_oracle) + " <= " + std::to_string(q_routed) + " <= " +
                std::to_string(q_naive) + ", bytes " + std::to_string(b_oracle) + " <= " + std::to_string(b_routed) +
                " <= " + std::to_string(b_naive) + "; reductions from traces " + fmt(expect_q, 12) + "% / " +
                fmt(expect_b, 12) + "% vs report diff " + fmt(std::abs(got_q - expect_q), 3) + " / " +
                fmt(std::abs(got_b - expect_b), 3)};
}

Outcome latency(const fs::path& run_dir) {
    const RouterModel model = load(run_dir / "model.rrm");
    const VectorSet queries = read_vector_file(run_dir / "queries.fvr");
    Federation fed(import_shards(run_dir / "corpus" / "manifest.json"));
    std::vector<RoutingFeatures> rows;
    for (std::size_t q = 0; rows.size() < 32; ++q) {
        for (const auto& s : fed.stats()) {
            if (rows.size() < 32) rows.push_back(assemble_features(queries.row(q), s, model.distance_kind));
        }
    }
    volatile double sink = 0.0;
    for (int i = 0; i < 5; ++i) sink = sink + predict_batch(model, rows).front();
    std::vector<double> ms;
    for (int i = 0; i < 100; ++i) {
        const auto t0 = Clock::now();
        sink = sink + predict_batch(model, rows).front();
        ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const double median = 0.5 * (ms[49] + ms[50]);
    return {median <= 5.0, "batch 32, " + std::to_string(fed.size()) + " shards, d=" +
                               std::to_string(model.dimension()) + ": median " + fmt(median, 4) + " ms over 100 runs (p95 " +
                               fmt(ms[94], 4) + " ms)"};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
    std::vector<std::string> differing;
    for (const char* f : {"model.rrm", "report.json", "summary.csv", "recall_by_shard.csv", "queries_by_strategy.csv",
                          "labels.csv", "queries.fvr", "split.json", "train_log.csv"}) {
        if (slurp(a / f) != slurp(b / f)) differing.push_back(f);
    }
    for (const auto& entry : fs::directory_iterator(a / "corpus")) {
        if (slurp(entry.path()) != slurp(b / "corpus" / entry.path().filename())) {
            differing.push_back("corpus/" + entry.path().filename().string());
        }
    }
    std::string detail = differing.empty() ? "model, report files, corpus, labels, split and train log byte-identical"
                                           : "differ:";
    for (const auto& d : differing) detail += " " + d;
    return {differing.empty(), detail};
}

Outcome invariants(const fs::path& run_dir) {
    const RouterModel model = load(run_dir / "model.rrm");
    const auto examples = read_labels_csv(run_dir / "labels.csv");
    const auto split = nlohmann::json::parse(slurp(run_dir / "split.json"));
    const auto train_ids = split.at("train").get<std::vector<QueryId>>();
    const std::unordered_set<QueryId> train(train_ids.begin(), train_ids.end());

    std::vector<RoutingFeatures> standardized;
    for (const auto& ex : examples) {
        if (train.contains(ex.query_id)) standardized.push_back(transform(model.scaler, ex.features));
    }
    const std::size_t width = model.input_size();
    double worst_mean = 0.0, worst_std = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
        double mean = 0.0;
        for (const auto& r : standardized) mean += r[j];
        mean /= static_cast<double>(standardized.size());
        double var = 0.0;
        for (const auto& r : standardized) var += (r[j] - mean) * (r[j] - mean);
        var /= static_cast<double>(standardized.size());
        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_std = std::max(worst_std, std::abs(std::sqrt(var) - 1.0));
    }

    double ln_mean = 0.0, ln_var = 0.0, eps_model = 0.0, min_pre_var = 1e300;
    std::size_t ln_rows = 0;
    for (std::size_t i = 0; i < standardized.size(); i += 7) {
        const ForwardTrace t = forward_trace(model, standardized[i]);
        const HiddenValues hv = hidden_values(model, standardized[i]);
        const std::vector<double>* normalized[2] = {&t.normalized1, &t.normalized2};
        for (int layer = 0; layer < 2; ++layer) {
            auto moments = [](const std::vector<double>& v) {
                double mean = 0.0, var = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                for (double x : v) var += (x - mean) * (x - mean);
                return std::pair{mean, var / static_cast<double>(v.size())};
            };
            const auto [mean, var] = moments(*normalized[layer]);
            const double pre_var = moments(hv.pre[layer]).second;
            ln_mean = std::max(ln_mean, std::abs(mean));
            ln_var = std::max(ln_var, std::abs(var - 1.0));
            // with eps in the denominator the exact variance is v / (v + eps)
            eps_model = std::max(eps_model, std::abs(var - pre_var / (pre_var + kLayerNormEps)));
            min_pre_var = std::min(min_pre_var, pre_var);
        }
        ++ln_rows;
    }
    const bool ok = worst_mean < 1e-6 && worst_std < 1e-6 && ln_mean <= 1e-6 && ln_var <= 1e-6;
    return {ok, "scaler over " + std::to_string(standardized.size()) + " training rows: max |mean| " +
                    fmt(worst_mean, 3) + ", max |std-1| " + fmt(worst_std, 3) + "; layer-norm over " +
                    std::to_string(ln_rows) + " rows x 2 layers: max |mean| " + fmt(ln_mean, 3) + ", max |var-1| " +
                    fmt(ln_var, 3) + " (smallest pre-norm variance " + fmt(min_pre_var, 4) +
                    "; max |var - v/(v+1e-5)| " + fmt(eps_model, 3) + ")"};
}

// --- criterion 9 ----------------------------------------------------------

Outcome auc_equivalence() {
    Rng rng(77);
    double worst = 0.0;
    std::size_t largest = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(1999);
        largest = std::max(largest, n);
        std::vector<Prediction> preds(n);
        const double positive_rate = 0.05 + 0.9 * rng.uniform();
        const double levels = trial % 2 == 0 ? 20.0 : 1e9;  // even trials have heavy ties
        for (auto& p : preds) {
            p.label = rng.bernoulli(positive_rate) ? 1 : 0;
            p.probability = std::round((0.25 * p.label + 0.75 * rng.uniform()) * levels) / levels;
        }
        preds[0].label = 1;
        preds[1].label = 0;
        double wins = 0.0, pairs = 0.0;
        for (const auto& a : preds) {
            if (a.label != 1) continue;
            for (const auto& b : preds) {
                if (b.label != 0) continue;
                pairs += 1.0;
                wins += a.probability > b.probability ? 1.0 : (a.probability == b.probability ? 0.5 : 0.0);
            }
        }
        worst = std::max(worst, std::abs(rank_auc(preds) - wins / pairs));
    }
    return {worst <= 1e-9, "20 datasets up to n=" + std::to_string(largest) + ", max |rank - pairwise| " + fmt(worst, 3)};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fedvec_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    {
        const Fixture fx = make_fixture();
        run(1, "merge/oracle equivalence", [&] { return merge_equivalence(fx); });
        run(2, "oracle-routing recall", [&] { return oracle_recall(fx); });
    }
    run(3, "gradient correctness", gradient_check);

    const fs::path run_a = work / "run_a";
    const fs::path run_b = work / "run_b";
    std::ostringstream log_a, log_b;
    EvalReport report_a;
    bool pipeline_ok = false;
    try {
        const auto t0 = Clock::now();
        report_a = driver::run_pipeline(default_run(run_a), log_a).report;
        std::cout << log_a.str() << "pipeline run A: " << fmt(seconds_since(t0), 3) << " s" << std::endl;
        const auto t1 = Clock::now();
        driver::run_pipeline(default_run(run_b), log_b);
        std::cout << "pipeline run B: " << fmt(seconds_since(t1), 3) << " s" << std::endl;
        pipeline_ok = true;
    } catch (const std::exception& e) {
        std::cout << log_a.str() << "pipeline failed: " << e.what() << std::endl;
    }
    auto needs_pipeline = [&](std::function<Outcome()> f) {
        return [=]() -> Outcome { return pipeline_ok ? f() : Outcome{false, "pipeline did not complete"}; };
    };
    run(4, "learned-routing quality", needs_pipeline([&] { return pipeline_quality(report_a); }));
    run(5, "efficiency accounting sandwich", needs_pipeline([&] { return sandwich(run_a); }));
    run(6, "inference latency", needs_pipeline([&] { return latency(run_a); }));
    run(7, "determinism", needs_pipeline([&] { return determinism(run_a, run_b); }));
    run(8, "scaler and layer-norm invariants", needs_pipeline([&] { return invariants(run_a); }));
    run(9, "AUC oracle equivalence", auc_equivalence);

    std::cout << (failures == 0 ? "all 9 criteria passed" : std::to_string(failures) + " of 9 criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
