#include "fedvec/trace.hpp"

#include <fstream>

#include <json.hpp>

#include "binary_stream.hpp"
#include "fedvec/error.hpp"

namespace fedvec {

std::string trace_to_json_line(const QueryTrace& t) {
    nlohmann::ordered_json j;
    j["query_id"] = t.query_id;
    j["probabilities"] = t.probabilities;
    j["selected"] = t.selected;
    j["m"] = t.m;
    j["recall"] = t.recall;
    j["bytes_moved"] = t.bytes_moved;
    j["latency_ns"] = t.latency_ns;
    j["fallback_used"] = t.fallback_used;
    j["relevant"] = t.relevant;
    j["shard_recall"] = t.shard_recall;
    j["naive_m"] = t.naive_m;
    j["naive_bytes"] = t.naive_bytes;
    j["oracle_m"] = t.oracle_m;
    j["oracle_bytes"] = t.oracle_bytes;
    j["oracle_recall"] = t.oracle_recall;
    return j.dump();
}

QueryTrace trace_from_json_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        QueryTrace t;
        t.query_id = j.at("query_id").get<QueryId>();
        t.probabilities = j.at("probabilities").get<std::vector<double>>();
        t.selected = j.at("selected").get<std::vector<bool>>();
        t.m = j.at("m").get<std::size_t>();
        t.recall = j.at("recall").get<double>();
        t.bytes_moved = j.at("bytes_moved").get<std::uint64_t>();
        t.latency_ns = j.at("latency_ns").get<std::uint64_t>();
        t.fallback_used = j.value("fallback_used", false);
        t.relevant = j.value("relevant", std::vector<bool>{});
        t.shard_recall = j.value("shard_recall", std::vector<double>{});
        t.naive_m = j.value("naive_m", std::size_t{0});
        t.naive_bytes = j.value("naive_bytes", std::uint64_t{0});
        t.oracle_m = j.value("oracle_m", std::size_t{0});
        t.oracle_bytes = j.value("oracle_bytes", std::uint64_t{0});
        t.oracle_recall = j.value("oracle_recall", 0.0);
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMalformed, std::string("bad trace record: ") + e.what());
    }
}

void write_traces(const std::filesystem::path& path, std::span<const QueryTrace> traces) {
    std::string text;
    for (const auto& t : traces) {
        text += trace_to_json_line(t);
        text += '\n';
    }
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<QueryTrace> read_traces(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::vector<QueryTrace> traces;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) traces.push_back(trace_from_json_line(line));
    }
    return traces;
}

}  // namespace fedvec
