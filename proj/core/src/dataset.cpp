#include "fedvec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>

#include "binary_stream.hpp"
#include "fedvec/error.hpp"
#include "fedvec/random.hpp"

namespace fedvec {

// --- split ------------------------------------------------------------------

QuerySplit split_by_query(std::span<const QueryId> query_ids, const SplitSpec& spec) {
    std::vector<QueryId> ids(query_ids.begin(), query_ids.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 10) {
        throw Error(ErrorCode::kInvalidArgument, "split_by_query needs >= 10 distinct queries, got " +
                                                     std::to_string(ids.size()));
    }
    const double fractions[] = {spec.train_frac, spec.val_frac, spec.test_frac};
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "split fractions must be in [0,1]");
    }
    if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9) {
        throw Error(ErrorCode::kInvalidArgument, "split fractions must sum to 1");
    }

    Rng rng = Rng::substream(spec.seed, "split");
    rng.shuffle(std::span<QueryId>(ids));
    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * n));
    const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(spec.val_frac * n)));

    QuerySplit split;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

// --- k-means ----------------------------------------------------------------

namespace {

struct Nearest {
    std::uint32_t cluster;
    double distance;
};

Nearest nearest_centroid(std::span<const float> point, const std::vector<std::vector<double>>& centroids) {
    Nearest best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_l2(point, std::span<const double>(centroids[c]));
        if (d < best.distance) best = {static_cast<std::uint32_t>(c), d};  // strict: lowest index wins ties
    }
    return best;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<std::vector<double>> seed_plus_plus(const VectorSet& vectors, std::size_t clusters, Rng& rng) {
    const std::size_t n = vectors.size();
    std::vector<std::vector<double>> centroids;
    centroids.push_back(to_double(vectors.row(static_cast<std::size_t>(rng.below(n)))));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_l2(vectors.row(i), std::span<const double>(centroids[0]));
    while (centroids.size() < clusters) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double running = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                running += d2[i];
                if (running > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        centroids.push_back(to_double(vectors.row(pick)));
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_l2(vectors.row(i), std::span<const double>(centroids.back())));
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const VectorSet& vectors, std::size_t clusters, std::uint64_t seed, const KMeansOptions& options) {
    if (clusters < 2) throw Error(ErrorCode::kInvalidArgument, "k-means needs at least 2 clusters");
    if (vectors.size() < clusters) {
        throw Error(ErrorCode::kInvalidArgument, "k-means: " + std::to_string(vectors.size()) +
                                                     " vectors is fewer than " + std::to_string(clusters) +
                                                     " clusters");
    }
    const std::size_t n = vectors.size();
    const std::size_t d = vectors.dimension;
    Rng rng = Rng::substream(seed, "kmeans");

    KMeansResult result;
    result.centroids = seed_plus_plus(vectors, clusters, rng);
    result.assignment.assign(n, 0);
    std::vector<double> distance(n);

    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Nearest best = nearest_centroid(vectors.row(i), result.centroids);
            result.assignment[i] = best.cluster;
            distance[i] = best.distance;
            inertia += best.distance;
        }
        result.inertia_history.push_back(inertia);
        result.iterations = iter + 1;

        std::vector<std::vector<double>> sums(clusters, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = vectors.row(i);
            auto& sum = sums[result.assignment[i]];
            for (std::size_t j = 0; j < d; ++j) sum[j] += row[j];
            ++counts[result.assignment[i]];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < clusters; ++c) {
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) result.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
                continue;
            }
            // Reseed an empty cluster at the worst-served point; moving that
            // point into its own cluster cannot raise inertia.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && distance[i] > far_d) {
                    far_d = distance[i];
                    far = i;
                }
            }
            taken[far] = true;
            result.centroids[c] = to_double(vectors.row(far));
        }

        const std::size_t h = result.inertia_history.size();
        if (h >= 2) {
            const double prev = result.inertia_history[h - 2];
            const double change = prev > 0.0 ? (prev - inertia) / prev : 0.0;
            if (change < options.tolerance) break;
        } else if (inertia == 0.0) {
            break;
        }
    }

    // Final assignment consistent with the returned centroids.
    for (std::size_t i = 0; i < n; ++i) result.assignment[i] = nearest_centroid(vectors.row(i), result.centroids).cluster;
    return result;
}

std::vector<ShardIndex> kmeans_shard(const VectorSet& vectors, std::size_t clusters, std::uint64_t seed,
                                     const KMeansOptions& options, KMeansResult* details) {
    KMeansResult km = kmeans(vectors, clusters, seed, options);
    std::vector<VectorSet> parts(clusters);
    for (auto& p : parts) p.dimension = vectors.dimension;
    for (std::size_t i = 0; i < vectors.size(); ++i) parts[km.assignment[i]].push_back(vectors.ids[i], vectors.row(i));

    std::vector<ShardIndex> shards;
    shards.reserve(clusters);
    for (std::size_t c = 0; c < clusters; ++c) {
        if (parts[c].size() == 0) {
            // Only possible with duplicate points collapsing two centroids.
            throw Error(ErrorCode::kEmptyInput, "k-means produced an empty cluster " + std::to_string(c) +
                                                    " (too few distinct points?)");
        }
        shards.push_back(build_index(static_cast<ShardId>(c), std::move(parts[c])));
    }
    if (details != nullptr) *details = std::move(km);
    return shards;
}

// --- synthetic data ---------------------------------------------------------

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_clusters == 0 || spec.dim == 0 || spec.min_points_per_cluster == 0 ||
        spec.max_points_per_cluster < spec.min_points_per_cluster || spec.n_queries == 0 ||
        !(spec.cluster_spread > 0.0) || !(spec.center_radius > 0.0) || !(spec.query_noise >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "invalid synthetic spec");
    }
    Rng rng = Rng::substream(spec.seed, "data");
    SyntheticData data;

    // Centers uniform on a sphere of radius center_radius * sqrt(dim), so the
    // center separation scales like the within-cluster spread.
    const double radius = spec.center_radius * std::sqrt(static_cast<double>(spec.dim));
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        std::vector<double> center(spec.dim);
        double norm = 0.0;
        for (double& v : center) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : center) v *= radius / norm;
        data.centers.push_back(std::move(center));
    }

    // Log-normal size multipliers give a skewed size distribution.
    std::vector<std::size_t> sizes(spec.n_clusters);
    std::vector<double> weights(spec.n_clusters);
    for (double& w : weights) w = std::exp(0.5 * rng.normal());
    const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        double target = spec.total_points > 0
                            ? static_cast<double>(spec.total_points) * weights[c] / weight_sum
                            : 0.5 * static_cast<double>(spec.min_points_per_cluster + spec.max_points_per_cluster) * weights[c];
        target = std::clamp(target, static_cast<double>(spec.min_points_per_cluster),
                            static_cast<double>(spec.max_points_per_cluster));
        sizes[c] = static_cast<std::size_t>(std::llround(target));
    }

    data.corpus.dimension = spec.dim;
    std::vector<float> point(spec.dim);
    VectorId next_id = 0;
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        for (std::size_t i = 0; i < sizes[c]; ++i) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                point[j] = static_cast<float>(data.centers[c][j] + spec.cluster_spread * rng.normal());
            }
            data.corpus.push_back(next_id++, point);
            data.corpus_clusters.push_back(static_cast<std::uint32_t>(c));
        }
    }

    data.queries.dimension = spec.dim;
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
        const auto source = static_cast<std::size_t>(rng.below(data.corpus.size()));
        const auto base = data.corpus.row(source);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            point[j] = static_cast<float>(base[j] + spec.query_noise * rng.normal());
        }
        data.queries.push_back(q, point);
        data.query_clusters.push_back(data.corpus_clusters[source]);
    }
    return data;
}

// --- import / export --------------------------------------------------------

std::vector<ShardIndex> import_shards(const std::filesystem::path& manifest_path, DensityKind density) {
    const Manifest manifest = read_manifest(manifest_path);
    if (manifest.shards.empty()) throw Error(ErrorCode::kEmptyInput, manifest_path.string() + ": no shards listed");
    std::vector<ShardIndex> shards;
    shards.reserve(manifest.shards.size());
    for (const auto& entry : manifest.shards) {
        if (!std::filesystem::exists(entry.path)) {
            throw Error(ErrorCode::kIo, "shard file not found: " + entry.path.string());
        }
        VectorSet vs = read_vector_file(entry.path);
        if (vs.dimension != manifest.dimension) {
            throw Error(ErrorCode::kDimensionMismatch, entry.path.string() + ": dimension " +
                                                           std::to_string(vs.dimension) + ", manifest says " +
                                                           std::to_string(manifest.dimension));
        }
        shards.push_back(build_index(entry.shard_id, std::move(vs), density));
    }
    return shards;
}

std::filesystem::path export_shards(std::span<const ShardIndex> shards, const std::filesystem::path& directory) {
    if (shards.empty()) throw Error(ErrorCode::kEmptyInput, "nothing to export");
    std::filesystem::create_directories(directory);
    Manifest manifest;
    manifest.dimension = shards.front().dimension();
    for (const auto& shard : shards) {
        char name[32];
        std::snprintf(name, sizeof(name), "shard_%03u.fvr", static_cast<unsigned>(shard.shard_id()));
        write_vector_file(directory / name, shard.vectors());
        manifest.shards.push_back({shard.shard_id(), name});
    }
    const auto path = directory / "manifest.json";
    write_manifest(path, manifest);
    return path;
}

// --- labeled datasets -------------------------------------------------------

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    out.append(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view token, const std::string& where) {
    T value{};
    const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        throw Error(ErrorCode::kMalformed, where + ": bad number '" + std::string(token) + "'");
    }
    return value;
}

}  // namespace

void write_labels_csv(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
    if (examples.empty()) throw Error(ErrorCode::kEmptyInput, "no labeled examples to write");
    const std::size_t width = examples.front().features.size();
    std::string text = "query_id,shard_id,label";
    for (std::size_t j = 0; j < width; ++j) text += ",f" + std::to_string(j);
    text += '\n';
    for (const auto& ex : examples) {
        if (ex.features.size() != width) throw Error(ErrorCode::kDimensionMismatch, "ragged labeled examples");
        text += std::to_string(ex.query_id) + ',' + std::to_string(ex.shard_id) + ',' + std::to_string(ex.label);
        for (double v : ex.features) {
            text += ',';
            append_double(text, v);
        }
        text += '\n';
    }
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<LabeledExample> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("query_id,shard_id,label", 0) != 0) {
        throw Error(ErrorCode::kMalformed, path.string() + ": missing header");
    }
    const std::size_t width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
    std::vector<LabeledExample> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        std::vector<std::string_view> tokens;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            tokens.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (tokens.size() != width + 3) throw Error(ErrorCode::kMalformed, where + ": wrong column count");
        LabeledExample ex;
        ex.query_id = parse_number<QueryId>(tokens[0], where);
        ex.shard_id = parse_number<ShardId>(tokens[1], where);
        ex.label = parse_number<int>(tokens[2], where);
        if (ex.label != 0 && ex.label != 1) throw Error(ErrorCode::kMalformed, where + ": label must be 0 or 1");
        ex.features.reserve(width);
        for (std::size_t j = 0; j < width; ++j) ex.features.push_back(parse_number<double>(tokens[3 + j], where));
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace fedvec
