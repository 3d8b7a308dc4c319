#include <algorithm>
#include <string>

#include "binary_stream.hpp"
#include "fedvec/error.hpp"
#include "fedvec/router_model.hpp"

namespace fedvec {

namespace {
constexpr char kModelMagic[4] = {'R', 'R', 'M', '1'};
}

std::vector<std::uint8_t> serialize(const RouterModel& model) {
    ByteWriter out;
    out.bytes(kModelMagic, 4);
    out.u32(kRouterFormatVersion);
    out.u32(static_cast<std::uint32_t>(model.dimension()));
    out.u32(static_cast<std::uint32_t>(model.input_size()));
    out.u32(static_cast<std::uint32_t>(model.shape().hidden1));
    out.u32(static_cast<std::uint32_t>(model.shape().hidden2));
    out.u32(static_cast<std::uint32_t>(model.distance_kind));
    out.f64(model.dropout_rate);
    out.f64(model.threshold);
    out.u64(model.seed);
    for (double v : model.scaler.mean) out.f64(v);
    for (double v : model.scaler.stddev) out.f64(v);
    out.u64(model.parameters().size());
    for (double v : model.parameters()) out.f64(v);
    std::vector<std::uint8_t> bytes = out.buffer();
    const std::uint32_t crc = crc32(bytes);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    return bytes;
}

RouterModel deserialize(std::span<const std::uint8_t> bytes, const std::string& source) {
    ByteReader in(bytes, source);
    char magic[4];
    in.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kModelMagic)) {
        throw Error(ErrorCode::kVersionMismatch, source + ": not a router model (bad magic)");
    }
    const std::uint32_t version = in.u32();
    if (version != kRouterFormatVersion) {
        throw Error(ErrorCode::kVersionMismatch,
                    source + ": unsupported router format version " + std::to_string(version));
    }
    if (bytes.size() < 4) throw Error(ErrorCode::kMalformed, source + ": truncated");
    const std::size_t body = bytes.size() - 4;
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(bytes[body]) |
                                     static_cast<std::uint32_t>(bytes[body + 1]) << 8 |
                                     static_cast<std::uint32_t>(bytes[body + 2]) << 16 |
                                     static_cast<std::uint32_t>(bytes[body + 3]) << 24;

    const std::uint32_t dimension = in.u32();
    const std::uint32_t input = in.u32();
    RouterShape shape;
    shape.hidden1 = in.u32();
    shape.hidden2 = in.u32();
    const std::uint32_t distance = in.u32();
    if (dimension == 0 || input != feature_length(dimension) || shape.hidden1 == 0 || shape.hidden2 == 0 ||
        distance > 1 || shape.hidden1 > (1U << 20) || shape.hidden2 > (1U << 20)) {
        throw Error(ErrorCode::kMalformed, source + ": inconsistent layer shapes");
    }
    // Reject a truncated body before allocating anything sized by the header.
    const std::size_t expected_params =
        shape.hidden1 * input + 3 * shape.hidden1 + shape.hidden2 * shape.hidden1 + 4 * shape.hidden2 + 1;
    const std::size_t expected_size = 4 + 4 * 6 + 8 * 3 + 16 * std::size_t{input} + 8 + 8 * expected_params + 4;
    if (bytes.size() != expected_size) {
        throw Error(ErrorCode::kMalformed, source + ": size " + std::to_string(bytes.size()) + " does not match header (" +
                                               std::to_string(expected_size) + ")");
    }
    if (crc32(bytes.first(body)) != stored_crc) {
        throw Error(ErrorCode::kChecksumMismatch, source + ": CRC-32 mismatch");
    }

    RouterModel model(dimension, shape);
    model.distance_kind = static_cast<DistanceKind>(distance);
    model.dropout_rate = in.f64();
    model.threshold = in.f64();
    model.seed = in.u64();
    for (double& v : model.scaler.mean) v = in.f64();
    for (double& v : model.scaler.stddev) v = in.f64();
    const std::uint64_t count = in.u64();
    if (count != model.parameters().size()) {
        throw Error(ErrorCode::kMalformed, source + ": parameter count mismatch");
    }
    for (double& v : model.parameters()) v = in.f64();
    return model;
}

void save(const RouterModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, serialize(model));
}

RouterModel load(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return deserialize(bytes, path.string());
}

}  // namespace fedvec
