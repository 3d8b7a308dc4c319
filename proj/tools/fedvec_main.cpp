#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "driver.hpp"
#include "fedvec/error.hpp"

using namespace fedvec;

int main(int argc, char** argv) {
    CLI::App app{"fedvec: learned query routing for federated vector search"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::size_t> k;
    std::optional<double> threshold;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> manifest;
    std::optional<std::string> corpus;
    std::optional<std::string> queries;
    std::optional<std::size_t> epochs;

    app.add_option("-c,--config", config_path, "JSON run configuration; flags override its values")
        ->check(CLI::ExistingFile);
    app.add_option("--k", k, "Top-k retrieved per query (e.g. 10 or 32)");
    app.add_option("--threshold", threshold, "Router decision threshold in (0,1)");
    app.add_option("--seed", seed, "Top-level seed for every random stream");
    app.add_option("--out", out, "Run directory holding all artifacts");
    app.add_option("--epochs", epochs, "Training epochs");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic sharded corpus and query set");
    auto* import = app.add_subcommand("import", "Import precomputed embeddings into the run directory");
    import->add_option("--manifest", manifest, "Shard manifest JSON")->check(CLI::ExistingFile);
    import->add_option("--corpus", corpus, "Flat vector file to shard with k-means")->check(CLI::ExistingFile);
    import->add_option("--queries", queries, "Query vector file")->check(CLI::ExistingFile);
    auto* label = app.add_subcommand("label", "Replay queries against all shards and label relevance");
    auto* train = app.add_subcommand("train", "Train the router on the labeled dataset");
    auto* eval = app.add_subcommand("eval", "Evaluate naive, oracle and learned routing on the test split");
    auto* report = app.add_subcommand("report", "Rebuild report files from traces.jsonl");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        driver::RunConfig config;
        if (!config_path.empty()) config = driver::load_config(config_path, config);
        if (k) config.k = *k;
        if (threshold) config.threshold = *threshold;
        if (seed) config.seed = *seed;
        if (out) config.out = *out;
        if (epochs) config.train.epochs = *epochs;
        if (manifest) config.manifest = *manifest;
        if (corpus) config.flat_corpus = *corpus;
        if (queries) config.queries = *queries;

        if (synth->parsed()) driver::cmd_synth(config, std::cout);
        else if (import->parsed()) driver::cmd_import(config, std::cout);
        else if (label->parsed()) driver::cmd_label(config, std::cout);
        else if (train->parsed()) driver::cmd_train(config, std::cout);
        else if (eval->parsed()) driver::cmd_eval(config, std::cout);
        else if (report->parsed()) driver::cmd_report(config, std::cout);
    } catch (const Error& e) {
        std::cerr << "fedvec: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fedvec: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
