#include "fedvec/vector_io.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "binary_stream.hpp"
#include "fedvec/error.hpp"

namespace fedvec {

namespace {
constexpr char kVectorMagic[4] = {'F', 'V', 'R', '1'};
}

void write_vector_file(const std::filesystem::path& path, const VectorSet& vectors) {
    ByteWriter out;
    out.bytes(kVectorMagic, 4);
    out.u32(static_cast<std::uint32_t>(vectors.dimension));
    out.u64(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        out.u64(vectors.ids[i]);
        for (float v : vectors.row(i)) out.f32(v);
    }
    write_file_bytes(path, out.buffer());
}

VectorSet read_vector_file(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> data = read_file_bytes(path);
    ByteReader in(data, path.string());
    char magic[4];
    in.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kVectorMagic)) {
        throw Error(ErrorCode::kMalformed, path.string() + ": bad magic, expected FVR1");
    }
    VectorSet vs;
    vs.dimension = in.u32();
    const std::uint64_t count = in.u64();
    if (vs.dimension == 0) throw Error(ErrorCode::kMalformed, path.string() + ": dimension is 0");
    const std::uint64_t record = 8 + 4ULL * vs.dimension;
    if (count > in.remaining() / record || in.remaining() != count * record) {
        throw Error(ErrorCode::kMalformed, path.string() + ": header count " + std::to_string(count) +
                                               " does not match file size");
    }
    vs.ids.reserve(count);
    vs.values.reserve(count * vs.dimension);
    for (std::uint64_t i = 0; i < count; ++i) {
        vs.ids.push_back(in.u64());
        for (std::size_t j = 0; j < vs.dimension; ++j) vs.values.push_back(in.f32());
    }
    return vs;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    nlohmann::ordered_json doc;
    doc["dimension"] = manifest.dimension;
    doc["shards"] = nlohmann::ordered_json::array();
    for (const auto& entry : manifest.shards) {
        doc["shards"].push_back({{"shard_id", entry.shard_id}, {"path", entry.path.generic_string()}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
    }
    Manifest manifest;
    try {
        manifest.dimension = doc.at("dimension").get<std::size_t>();
        const auto base = path.parent_path();
        for (const auto& entry : doc.at("shards")) {
            std::filesystem::path p = entry.at("path").get<std::string>();
            if (p.is_relative()) p = base / p;
            manifest.shards.push_back({entry.at("shard_id").get<ShardId>(), p});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
    }
    return manifest;
}

}  // namespace fedvec
