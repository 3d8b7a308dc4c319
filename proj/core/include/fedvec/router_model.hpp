#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedvec/features.hpp"
#include "fedvec/random.hpp"
#include "fedvec/split.hpp"

namespace fedvec {

inline constexpr double kLayerNormEps = 1e-5;

struct RouterShape {
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 128;
};

/// Offset and length of one parameter tensor inside the flat parameter
/// vector. Matrices are stored column-major (out x in).
struct ParamBlock {
    const char* name;
    std::size_t offset;
    std::size_t size;
};

/// Shallow relevance classifier:
///
///   input (2d+3) -> affine(h1) -> layer-norm -> ReLU -> dropout
///                -> affine(h2) -> layer-norm -> ReLU -> dropout
///                -> affine(1)  = raw logit
///
/// All parameters live in one contiguous vector in this order:
/// W1, b1, gain1, bias1, W2, b2, gain2, bias2, w3, b3. The model also
/// carries the input scaler and decision threshold so a loaded file is
/// self-contained.
class RouterModel {
public:
    /// All parameters zero (layer-norm gains included).
    RouterModel(std::size_t dimension, RouterShape shape = {});

    /// Weights uniform in +-sqrt(6/(fan_in+fan_out)); biases 0, gains 1.
    static RouterModel initialized(std::size_t dimension, RouterShape shape, std::uint64_t seed);

    std::size_t dimension() const { return dimension_; }
    std::size_t input_size() const { return feature_length(dimension_); }
    const RouterShape& shape() const { return shape_; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    const ParamBlock& block(std::string_view name) const;

    ScalerParams scaler;
    double threshold = 0.5;
    double dropout_rate = 0.2;
    std::uint64_t seed = 0;
    DistanceKind distance_kind = DistanceKind::kSquaredEuclidean;

private:
    std::size_t dimension_;
    RouterShape shape_;
    std::vector<double> params_;
    std::vector<ParamBlock> blocks_;
};

/// Inverted-dropout multipliers (0 or 1/(1-rate)) for one batch,
/// column-major: unit-fastest, one column per example.
struct DropoutMasks {
    std::size_t batch = 0;
    std::vector<double> hidden1;
    std::vector<double> hidden2;
};

DropoutMasks sample_dropout_masks(const RouterModel& model, std::size_t batch, Rng& rng);

/// Eval-mode logit for one standardized row.
double forward(const RouterModel& model, std::span<const double> standardized);
/// Train mode draws fresh dropout masks from `rng`; eval mode ignores it.
double forward(const RouterModel& model, std::span<const double> standardized, bool train_mode, Rng& rng);

/// Logits for standardized rows. `masks == nullptr` runs in eval mode.
std::vector<double> forward_batch(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                                  const DropoutMasks* masks = nullptr);

/// Intermediate values of an eval-mode pass, for diagnostics.
struct ForwardTrace {
    std::vector<double> normalized1;  // layer-norm output before gain/bias
    std::vector<double> normalized2;
    double logit = 0.0;
};
ForwardTrace forward_trace(const RouterModel& model, std::span<const double> standardized);

double sigmoid(double z);
double softplus(double z);

/// pos_weight * y * softplus(-z) + (1 - y) * softplus(z).
double loss_bce_logits(double logit, double label, double pos_weight);

struct BatchGradient {
    std::vector<double> grad;  // same layout as RouterModel::parameters()
    double loss = 0.0;         // mean over the batch
};

/// Exact gradient of the mean batch loss. Dropout masks, if given, must be
/// the ones used for the matching forward pass.
BatchGradient backward(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                       std::span<const double> labels, double pos_weight,
                       const DropoutMasks* masks = nullptr);

double batch_loss(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                  std::span<const double> labels, double pos_weight, const DropoutMasks* masks = nullptr);

/// Probabilities for raw (unscaled) feature rows; scales with the model's
/// scaler and runs in eval mode. Safe to call concurrently.
std::vector<double> predict_batch(const RouterModel& model, std::span<const RoutingFeatures> raw_rows);

// --- training ---------------------------------------------------------------

struct LabeledExample {
    RoutingFeatures features;  // raw, before scaling
    int label = 0;
    QueryId query_id = 0;
    ShardId shard_id = 0;
};

struct TrainConfig {
    double lr_min = 0.001;
    double lr_max = 0.005;
    /// Steps per half-cycle of the triangular schedule; 0 means two epochs.
    std::size_t cycle_length = 0;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    /// Defaults to #negatives / #positives over the training split.
    std::optional<double> pos_weight;
    double dropout_rate = 0.2;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    RouterShape shape;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
    double lr_low = 0.0;   // smallest rate used this epoch
    double lr_high = 0.0;  // largest rate used this epoch
    double lr_last = 0.0;
};

struct TrainResult {
    RouterModel model;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double pos_weight = 1.0;
    QuerySplit split;
};

/// Triangular cyclic learning rate at 0-based `step`.
double cyclic_lr(std::size_t step, std::size_t half_cycle, double lr_min, double lr_max);

/// #negatives / #positives. Throws if either class is absent.
double default_pos_weight(std::span<const LabeledExample> examples);

/// Fits the scaler on the training split, trains with SGD + momentum under
/// the cyclic schedule, and returns the checkpoint with the best validation
/// accuracy (earliest epoch on ties) with threshold 0.5.
TrainResult train(std::span<const LabeledExample> examples, const SplitSpec& split, const TrainConfig& config);

// --- persistence ------------------------------------------------------------

inline constexpr std::uint32_t kRouterFormatVersion = 1;

/// Little-endian "RRM1" container:
///
///   magic "RRM1", u32 version, u32 d, u32 input, u32 h1, u32 h2,
///   u32 distance_kind, f64 dropout_rate, f64 threshold, u64 seed,
///   f64 x input scaler mean, f64 x input scaler stddev,
///   u64 parameter count, f64 x count parameters (flat order above),
///   u32 CRC-32 of every preceding byte.
std::vector<std::uint8_t> serialize(const RouterModel& model);
RouterModel deserialize(std::span<const std::uint8_t> bytes, const std::string& source = "model");

void save(const RouterModel& model, const std::filesystem::path& path);
RouterModel load(const std::filesystem::path& path);

}  // namespace fedvec
