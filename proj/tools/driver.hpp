#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fedvec/dataset.hpp"
#include "fedvec/metrics.hpp"
#include "fedvec/router_model.hpp"

namespace fedvec::driver {

/// Everything a pipeline run needs. Loaded from one JSON document; command
/// line flags override individual values.
struct RunConfig {
    std::filesystem::path out = "fedvec_run";
    std::size_t k = 10;
    double threshold = 0.5;
    std::uint64_t seed = 42;

    SyntheticSpec synthetic;
    /// Shard the synthetic corpus with k-means (n_clusters shards) instead of
    /// by generator cluster.
    bool kmeans_shards = true;

    TrainConfig train;
    SplitSpec split;

    DistanceKind distance = DistanceKind::kSquaredEuclidean;
    DensityKind density = DensityKind::kInverseMeanDistance;

    // import
    std::filesystem::path manifest;     // existing per-shard files
    std::filesystem::path flat_corpus;  // one vector file, sharded by k-means
    std::size_t import_clusters = 10;
    std::filesystem::path queries;

    std::size_t latency_repeats = 100;
};

/// Reads a JSON config file into `base`. Unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void validate(const RunConfig& config);

/// Derives component seeds from `config.seed` via named substreams.
RunConfig with_derived_seeds(RunConfig config);

/// Files inside the run directory.
struct Workspace {
    std::filesystem::path root;

    std::filesystem::path corpus_dir() const { return root / "corpus"; }
    std::filesystem::path manifest() const { return corpus_dir() / "manifest.json"; }
    std::filesystem::path queries() const { return root / "queries.fvr"; }
    std::filesystem::path labels() const { return root / "labels.csv"; }
    std::filesystem::path model() const { return root / "model.rrm"; }
    std::filesystem::path train_log() const { return root / "train_log.csv"; }
    std::filesystem::path split() const { return root / "split.json"; }
    std::filesystem::path traces() const { return root / "traces.jsonl"; }
    std::filesystem::path run_meta() const { return root / "run.json"; }
};

struct EvalOutcome {
    EvalReport report;
    std::vector<QueryTrace> traces;
};

void cmd_synth(const RunConfig& config, std::ostream& log);
void cmd_import(const RunConfig& config, std::ostream& log);
void cmd_label(const RunConfig& config, std::ostream& log);
TrainResult cmd_train(const RunConfig& config, std::ostream& log);
EvalOutcome cmd_eval(const RunConfig& config, std::ostream& log);
EvalReport cmd_report(const RunConfig& config, std::ostream& log);

/// synth -> label -> train -> eval.
EvalOutcome run_pipeline(const RunConfig& config, std::ostream& log);

/// Pass/fail checks printed by `eval`.
struct QualityCheck {
    std::string name;
    bool passed;
    std::string detail;
};
std::vector<QualityCheck> quality_checks(const EvalReport& report);

}  // namespace fedvec::driver
