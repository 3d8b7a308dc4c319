#include "fedvec/router_model.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "fedvec/error.hpp"

namespace fedvec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using MatrixMap = Eigen::Map<Matrix>;
using VectorMap = Eigen::Map<Vector>;

RouterModel::RouterModel(std::size_t dimension, RouterShape shape) : dimension_(dimension), shape_(shape) {
    if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "router dimension must be >= 1");
    if (shape.hidden1 == 0 || shape.hidden2 == 0) {
        throw Error(ErrorCode::kInvalidArgument, "router hidden sizes must be >= 1");
    }
    const std::size_t in = input_size();
    const std::size_t h1 = shape.hidden1;
    const std::size_t h2 = shape.hidden2;
    std::size_t offset = 0;
    auto add = [&](const char* name, std::size_t size) {
        blocks_.push_back({name, offset, size});
        offset += size;
    };
    add("W1", h1 * in);
    add("b1", h1);
    add("gain1", h1);
    add("bias1", h1);
    add("W2", h2 * h1);
    add("b2", h2);
    add("gain2", h2);
    add("bias2", h2);
    add("w3", h2);
    add("b3", 1);
    params_.assign(offset, 0.0);
    scaler.mean.assign(in, 0.0);
    scaler.stddev.assign(in, 1.0);
}

const ParamBlock& RouterModel::block(std::string_view name) const {
    for (const auto& b : blocks_) {
        if (name == b.name) return b;
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown parameter block " + std::string(name));
}

RouterModel RouterModel::initialized(std::size_t dimension, RouterShape shape, std::uint64_t seed) {
    RouterModel model(dimension, shape);
    model.seed = seed;
    Rng rng = Rng::substream(seed, "init");
    auto glorot = [&](std::string_view name, std::size_t fan_in, std::size_t fan_out) {
        const ParamBlock& b = model.block(name);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < b.size; ++i) model.params_[b.offset + i] = rng.uniform(-limit, limit);
    };
    auto fill = [&](std::string_view name, double value) {
        const ParamBlock& b = model.block(name);
        std::fill_n(model.params_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, value);
    };
    glorot("W1", model.input_size(), shape.hidden1);
    glorot("W2", shape.hidden1, shape.hidden2);
    glorot("w3", shape.hidden2, 1);
    fill("gain1", 1.0);
    fill("gain2", 1.0);
    return model;
}

DropoutMasks sample_dropout_masks(const RouterModel& model, std::size_t batch, Rng& rng) {
    const double rate = model.dropout_rate;
    if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout rate must be in [0,1)");
    const double keep_scale = 1.0 / (1.0 - rate);
    DropoutMasks masks;
    masks.batch = batch;
    auto draw = [&](std::vector<double>& out, std::size_t units) {
        out.resize(units * batch);
        for (double& m : out) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    };
    draw(masks.hidden1, model.shape().hidden1);
    draw(masks.hidden2, model.shape().hidden2);
    return masks;
}

namespace {

struct Weights {
    ConstMatrixMap W1, W2;
    ConstVectorMap b1, g1, beta1, b2, g2, beta2, w3;
    double b3;

    explicit Weights(const RouterModel& m)
        : W1(ptr(m, "W1"), m.shape().hidden1, m.input_size()),
          W2(ptr(m, "W2"), m.shape().hidden2, m.shape().hidden1),
          b1(ptr(m, "b1"), m.shape().hidden1),
          g1(ptr(m, "gain1"), m.shape().hidden1),
          beta1(ptr(m, "bias1"), m.shape().hidden1),
          b2(ptr(m, "b2"), m.shape().hidden2),
          g2(ptr(m, "gain2"), m.shape().hidden2),
          beta2(ptr(m, "bias2"), m.shape().hidden2),
          w3(ptr(m, "w3"), m.shape().hidden2),
          b3(*ptr(m, "b3")) {}

    static const double* ptr(const RouterModel& m, std::string_view name) {
        return m.parameters().data() + m.block(name).offset;
    }
};

/// Activations of one hidden layer for the whole batch (one column per row).
struct LayerCache {
    Matrix normalized;  // layer-norm output before gain/bias
    RowVector inv_std;  // 1 / sqrt(var + eps) per column
    Matrix affine;      // gain * normalized + bias (pre-ReLU)
    Matrix output;      // after ReLU and dropout
};

struct BatchCache {
    Matrix input;
    LayerCache layer1;
    LayerCache layer2;
    RowVector logits;
};

Matrix to_matrix(std::span<const RoutingFeatures> rows, std::size_t width) {
    Matrix x(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
        if (rows[c].size() != width) {
            throw Error(ErrorCode::kDimensionMismatch, "router input has length " + std::to_string(rows[c].size()) +
                                                           ", expected " + std::to_string(width));
        }
        for (std::size_t r = 0; r < width; ++r) {
            const double v = rows[c][r];
            if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite router input");
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return x;
}

void hidden_layer(const Matrix& pre, const ConstVectorMap& gain, const ConstVectorMap& bias,
                  const std::vector<double>* mask, LayerCache& cache) {
    const auto units = static_cast<double>(pre.rows());
    const RowVector mean = pre.colwise().sum() / units;
    Matrix centered = pre.rowwise() - mean;
    const RowVector var = centered.array().square().colwise().sum() / units;
    cache.inv_std = (var.array() + kLayerNormEps).rsqrt().matrix();
    cache.normalized = centered.array().rowwise() * cache.inv_std.array();
    cache.affine = (cache.normalized.array().colwise() * gain.array()).colwise() + bias.array();
    cache.output = cache.affine.cwiseMax(0.0);
    if (mask != nullptr) {
        Eigen::Map<const Matrix> m(mask->data(), pre.rows(), pre.cols());
        cache.output.array() *= m.array();
    }
}

BatchCache run_forward(const RouterModel& model, const Weights& w, Matrix input, const DropoutMasks* masks) {
    if (masks != nullptr && masks->batch != static_cast<std::size_t>(input.cols())) {
        throw Error(ErrorCode::kInvalidArgument, "dropout masks sized for a different batch");
    }
    (void)model;
    BatchCache cache;
    cache.input = std::move(input);
    Matrix pre1 = (w.W1 * cache.input).colwise() + w.b1;
    hidden_layer(pre1, w.g1, w.beta1, masks ? &masks->hidden1 : nullptr, cache.layer1);
    Matrix pre2 = (w.W2 * cache.layer1.output).colwise() + w.b2;
    hidden_layer(pre2, w.g2, w.beta2, masks ? &masks->hidden2 : nullptr, cache.layer2);
    cache.logits = (w.w3.transpose() * cache.layer2.output).array() + w.b3;
    return cache;
}

/// Back-propagates dL/d(layer output) through dropout, ReLU and layer-norm.
/// Writes gain/bias gradients and returns dL/d(pre-norm activations).
Matrix hidden_layer_backward(const LayerCache& cache, Matrix d_output, const ConstVectorMap& gain,
                             const std::vector<double>* mask, VectorMap d_gain, VectorMap d_bias) {
    if (mask != nullptr) {
        Eigen::Map<const Matrix> m(mask->data(), d_output.rows(), d_output.cols());
        d_output.array() *= m.array();
    }
    Matrix d_affine = (cache.affine.array() > 0.0).select(d_output, 0.0);
    d_gain = (d_affine.array() * cache.normalized.array()).rowwise().sum();
    d_bias = d_affine.rowwise().sum();
    const Matrix d_norm = d_affine.array().colwise() * gain.array();
    const auto units = static_cast<double>(d_norm.rows());
    const RowVector mean_d = d_norm.colwise().sum() / units;
    const RowVector mean_dx = (d_norm.array() * cache.normalized.array()).colwise().sum() / units;
    Matrix d_pre = (d_norm.rowwise() - mean_d).array() - cache.normalized.array().rowwise() * mean_dx.array();
    d_pre.array().rowwise() *= cache.inv_std.array();
    return d_pre;
}

void check_labels(std::size_t rows, std::span<const double> labels) {
    if (rows == 0) throw Error(ErrorCode::kEmptyInput, "empty batch");
    if (labels.size() != rows) throw Error(ErrorCode::kInvalidArgument, "labels/rows length mismatch");
}

}  // namespace

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double loss_bce_logits(double logit, double label, double pos_weight) {
    return pos_weight * label * softplus(-logit) + (1.0 - label) * softplus(logit);
}

std::vector<double> forward_batch(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                                  const DropoutMasks* masks) {
    if (standardized.empty()) return {};
    const Weights w(model);
    BatchCache cache = run_forward(model, w, to_matrix(standardized, model.input_size()), masks);
    return {cache.logits.data(), cache.logits.data() + cache.logits.size()};
}

double forward(const RouterModel& model, std::span<const double> standardized) {
    const RoutingFeatures row(standardized.begin(), standardized.end());
    return forward_batch(model, std::span<const RoutingFeatures>(&row, 1)).front();
}

double forward(const RouterModel& model, std::span<const double> standardized, bool train_mode, Rng& rng) {
    if (!train_mode) return forward(model, standardized);
    const RoutingFeatures row(standardized.begin(), standardized.end());
    const DropoutMasks masks = sample_dropout_masks(model, 1, rng);
    return forward_batch(model, std::span<const RoutingFeatures>(&row, 1), &masks).front();
}

ForwardTrace forward_trace(const RouterModel& model, std::span<const double> standardized) {
    const RoutingFeatures row(standardized.begin(), standardized.end());
    const Weights w(model);
    BatchCache cache =
        run_forward(model, w, to_matrix(std::span<const RoutingFeatures>(&row, 1), model.input_size()), nullptr);
    ForwardTrace trace;
    trace.normalized1.assign(cache.layer1.normalized.data(),
                             cache.layer1.normalized.data() + cache.layer1.normalized.size());
    trace.normalized2.assign(cache.layer2.normalized.data(),
                             cache.layer2.normalized.data() + cache.layer2.normalized.size());
    trace.logit = cache.logits(0);
    return trace;
}

BatchGradient backward(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                       std::span<const double> labels, double pos_weight, const DropoutMasks* masks) {
    check_labels(standardized.size(), labels);
    const Weights w(model);
    const BatchCache cache = run_forward(model, w, to_matrix(standardized, model.input_size()), masks);

    const auto batch = static_cast<Eigen::Index>(standardized.size());
    const double inv_batch = 1.0 / static_cast<double>(batch);
    BatchGradient out;
    out.grad.assign(model.parameters().size(), 0.0);
    auto grad_vec = [&](std::string_view name) {
        const ParamBlock& b = model.block(name);
        return VectorMap(out.grad.data() + b.offset, static_cast<Eigen::Index>(b.size));
    };
    auto grad_mat = [&](std::string_view name, Eigen::Index rows, Eigen::Index cols) {
        return MatrixMap(out.grad.data() + model.block(name).offset, rows, cols);
    };

    RowVector d_logit(batch);
    double loss = 0.0;
    for (Eigen::Index c = 0; c < batch; ++c) {
        const double z = cache.logits(c);
        const double y = labels[static_cast<std::size_t>(c)];
        loss += loss_bce_logits(z, y, pos_weight);
        d_logit(c) = (pos_weight * y * (sigmoid(z) - 1.0) + (1.0 - y) * sigmoid(z)) * inv_batch;
    }
    out.loss = loss * inv_batch;

    grad_vec("w3") = cache.layer2.output * d_logit.transpose();
    out.grad[model.block("b3").offset] = d_logit.sum();

    const auto h1 = static_cast<Eigen::Index>(model.shape().hidden1);
    const auto h2 = static_cast<Eigen::Index>(model.shape().hidden2);
    const auto in = static_cast<Eigen::Index>(model.input_size());

    Matrix d_out2 = w.w3 * d_logit;
    Matrix d_pre2 = hidden_layer_backward(cache.layer2, std::move(d_out2), w.g2, masks ? &masks->hidden2 : nullptr,
                                          grad_vec("gain2"), grad_vec("bias2"));
    grad_mat("W2", h2, h1) = d_pre2 * cache.layer1.output.transpose();
    grad_vec("b2") = d_pre2.rowwise().sum();

    Matrix d_out1 = w.W2.transpose() * d_pre2;
    Matrix d_pre1 = hidden_layer_backward(cache.layer1, std::move(d_out1), w.g1, masks ? &masks->hidden1 : nullptr,
                                          grad_vec("gain1"), grad_vec("bias1"));
    grad_mat("W1", h1, in) = d_pre1 * cache.input.transpose();
    grad_vec("b1") = d_pre1.rowwise().sum();
    return out;
}

double batch_loss(const RouterModel& model, std::span<const RoutingFeatures> standardized,
                  std::span<const double> labels, double pos_weight, const DropoutMasks* masks) {
    check_labels(standardized.size(), labels);
    const std::vector<double> logits = forward_batch(model, standardized, masks);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) loss += loss_bce_logits(logits[i], labels[i], pos_weight);
    return loss / static_cast<double>(logits.size());
}

std::vector<double> predict_batch(const RouterModel& model, std::span<const RoutingFeatures> raw_rows) {
    if (raw_rows.empty()) return {};
    const std::size_t width = model.input_size();
    Matrix x = to_matrix(raw_rows, width);
    const ConstVectorMap mean(model.scaler.mean.data(), static_cast<Eigen::Index>(width));
    const ConstVectorMap stddev(model.scaler.stddev.data(), static_cast<Eigen::Index>(width));
    x = (x.colwise() - mean).array().colwise() / stddev.array();
    const Weights w(model);
    const BatchCache cache = run_forward(model, w, std::move(x), nullptr);
    std::vector<double> probs(raw_rows.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = sigmoid(cache.logits(static_cast<Eigen::Index>(i)));
    return probs;
}

}  // namespace fedvec
