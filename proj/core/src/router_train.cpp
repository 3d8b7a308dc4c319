#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "fedvec/error.hpp"
#include "fedvec/router_model.hpp"

namespace fedvec {

double cyclic_lr(std::size_t step, std::size_t half_cycle, double lr_min, double lr_max) {
    if (half_cycle == 0) throw Error(ErrorCode::kInvalidArgument, "cyclic_lr: half cycle must be >= 1");
    const std::size_t period = 2 * half_cycle;
    const std::size_t phase = step % period;
    // Rises over [0, half), falls over [half, period).
    const double position = phase <= half_cycle ? static_cast<double>(phase) : static_cast<double>(period - phase);
    return lr_min + (lr_max - lr_min) * position / static_cast<double>(half_cycle);
}

double default_pos_weight(std::span<const LabeledExample> examples) {
    std::size_t positives = 0;
    for (const auto& ex : examples) positives += ex.label == 1 ? 1 : 0;
    const std::size_t negatives = examples.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw Error(ErrorCode::kInvalidArgument, "training split must contain both classes");
    }
    return static_cast<double>(negatives) / static_cast<double>(positives);
}

namespace {

void validate(const TrainConfig& config) {
    if (!(config.lr_min > 0.0 && config.lr_min <= config.lr_max)) {
        throw Error(ErrorCode::kInvalidArgument, "need 0 < lr_min <= lr_max");
    }
    if (config.epochs == 0 || config.batch_size == 0) {
        throw Error(ErrorCode::kInvalidArgument, "epochs and batch_size must be >= 1");
    }
    if (config.pos_weight && !(*config.pos_weight > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "pos_weight must be positive");
    }
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "dropout_rate must be in [0,1)");
    }
}

double accuracy(const RouterModel& model, std::span<const RoutingFeatures> rows, std::span<const double> labels) {
    const std::vector<double> logits = forward_batch(model, rows);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const bool predicted = sigmoid(logits[i]) >= 0.5;
        correct += predicted == (labels[i] > 0.5) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.size());
}

}  // namespace

TrainResult train(std::span<const LabeledExample> examples, const SplitSpec& split_spec, const TrainConfig& config) {
    validate(config);
    if (examples.empty()) throw Error(ErrorCode::kEmptyInput, "no training examples");
    const std::size_t width = examples.front().features.size();
    if (width < 5 || (width - 3) % 2 != 0) {
        throw Error(ErrorCode::kDimensionMismatch, "feature length " + std::to_string(width) + " is not 2d+3");
    }
    const std::size_t dimension = (width - 3) / 2;

    std::vector<QueryId> ids;
    ids.reserve(examples.size());
    for (const auto& ex : examples) ids.push_back(ex.query_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    QuerySplit split = split_by_query(ids, split_spec);

    const std::unordered_set<QueryId> train_ids(split.train.begin(), split.train.end());
    const std::unordered_set<QueryId> val_ids(split.val.begin(), split.val.end());
    std::vector<LabeledExample> train_rows;
    std::vector<LabeledExample> val_rows;
    for (const auto& ex : examples) {
        if (ex.features.size() != width) throw Error(ErrorCode::kDimensionMismatch, "ragged feature rows");
        if (ex.label != 0 && ex.label != 1) throw Error(ErrorCode::kInvalidArgument, "label must be 0 or 1");
        if (train_ids.contains(ex.query_id)) train_rows.push_back(ex);
        else if (val_ids.contains(ex.query_id)) val_rows.push_back(ex);
    }
    if (val_rows.empty()) throw Error(ErrorCode::kEmptyInput, "validation split is empty");
    const double class_ratio = default_pos_weight(train_rows);  // rejects a single-class split
    const double pos_weight = config.pos_weight.value_or(class_ratio);

    std::vector<RoutingFeatures> raw_train;
    raw_train.reserve(train_rows.size());
    for (const auto& ex : train_rows) raw_train.push_back(ex.features);

    RouterModel model = RouterModel::initialized(dimension, config.shape, config.seed);
    model.scaler = fit_scaler(raw_train);
    model.dropout_rate = config.dropout_rate;
    model.threshold = 0.5;

    std::vector<RoutingFeatures> x_train;
    std::vector<double> y_train;
    for (const auto& ex : train_rows) {
        x_train.push_back(transform(model.scaler, ex.features));
        y_train.push_back(ex.label);
    }
    std::vector<RoutingFeatures> x_val;
    std::vector<double> y_val;
    for (const auto& ex : val_rows) {
        x_val.push_back(transform(model.scaler, ex.features));
        y_val.push_back(ex.label);
    }

    const std::size_t n = x_train.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t half_cycle = config.cycle_length > 0 ? config.cycle_length : 2 * steps_per_epoch;

    Rng shuffle_rng = Rng::substream(config.seed, "shuffle");
    Rng dropout_rng = Rng::substream(config.seed, "dropout");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> velocity(model.parameters().size(), 0.0);

    TrainResult result{model, {}, 0, pos_weight, std::move(split)};
    double best_accuracy = -1.0;
    std::size_t step = 0;
    std::vector<RoutingFeatures> batch_x;
    std::vector<double> batch_y;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr_low = config.lr_max;
        entry.lr_high = config.lr_min;
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_x.push_back(x_train[order[i]]);
                batch_y.push_back(y_train[order[i]]);
            }
            const DropoutMasks masks = sample_dropout_masks(model, batch_x.size(), dropout_rng);
            const BatchGradient g = backward(model, batch_x, batch_y, pos_weight, &masks);
            const double lr = cyclic_lr(step++, half_cycle, config.lr_min, config.lr_max);
            auto params = model.parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                velocity[p] = config.momentum * velocity[p] + g.grad[p];
                params[p] -= lr * velocity[p];
            }
            loss_sum += g.loss * static_cast<double>(batch_x.size());
            entry.lr_low = std::min(entry.lr_low, lr);
            entry.lr_high = std::max(entry.lr_high, lr);
            entry.lr_last = lr;
        }
        entry.mean_loss = loss_sum / static_cast<double>(n);
        entry.val_accuracy = accuracy(model, x_val, y_val);
        result.log.push_back(entry);
        if (entry.val_accuracy > best_accuracy) {
            best_accuracy = entry.val_accuracy;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

}  // namespace fedvec
