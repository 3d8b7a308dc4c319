#include <algorithm>
#include <vector>

#include <benchmark/benchmark.h>

#include "fedvec/dataset.hpp"
#include "fedvec/federation.hpp"
#include "fedvec/router_model.hpp"

using namespace fedvec;

namespace {

VectorSet random_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    VectorSet s;
    s.dimension = dim;
    std::vector<float> row(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : row) x = static_cast<float>(rng.normal());
        s.push_back(i, row);
    }
    return s;
}

void BM_SearchTopK(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const ShardIndex index = build_index(0, random_set(n, 32, 1));
    const VectorSet queries = random_set(64, 32, 2);
    std::size_t q = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(search_top_k(index, queries.row(q++ % 64), 10));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_SearchTopK)->Arg(1000)->Arg(10000);

void BM_FederatedMerge(benchmark::State& state) {
    const auto shards = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    std::vector<std::vector<ScoredHit>> partials(shards);
    for (std::size_t s = 0; s < shards; ++s) {
        for (std::size_t i = 0; i < 32; ++i) partials[s].push_back({static_cast<ShardId>(s), i, rng.uniform()});
        std::sort(partials[s].begin(), partials[s].end(), hit_less);
    }
    for (auto _ : state) benchmark::DoNotOptimize(merge_top_k(partials, 32));
}
BENCHMARK(BM_FederatedMerge)->Arg(10)->Arg(100);

void BM_NaiveSearch(benchmark::State& state) {
    std::vector<ShardIndex> shards;
    for (ShardId s = 0; s < 10; ++s) {
        VectorSet v = random_set(1000, 32, 10 + s);
        for (auto& id : v.ids) id += 1000 * s;
        shards.push_back(build_index(s, std::move(v)));
    }
    Federation fed(std::move(shards));
    fed.set_max_threads(static_cast<std::size_t>(state.range(0)));
    const VectorSet queries = random_set(64, 32, 4);
    std::size_t q = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fed.naive_search(q, queries.row(q % 64), 10));
        ++q;
    }
}
BENCHMARK(BM_NaiveSearch)->Arg(1)->Arg(4);

void BM_PredictBatch32(benchmark::State& state) {
    const RouterModel model = RouterModel::initialized(32, {}, 5);
    Rng rng(6);
    std::vector<RoutingFeatures> rows(32, RoutingFeatures(model.input_size()));
    for (auto& r : rows)
        for (auto& v : r) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(predict_batch(model, rows));
}
BENCHMARK(BM_PredictBatch32);

void BM_Backward128(benchmark::State& state) {
    const RouterModel model = RouterModel::initialized(32, {}, 7);
    Rng rng(8);
    std::vector<RoutingFeatures> rows(128, RoutingFeatures(model.input_size()));
    std::vector<double> labels(128);
    for (auto& r : rows)
        for (auto& v : r) v = rng.normal();
    for (auto& y : labels) y = rng.bernoulli(0.15) ? 1.0 : 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(backward(model, rows, labels, 5.0));
}
BENCHMARK(BM_Backward128);

}  // namespace
BENCHMARK_MAIN();
