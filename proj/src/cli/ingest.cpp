#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "dlflow/cli/ingest.hpp"

namespace dlflow::cli {

namespace {

std::ifstream open(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("{}: cannot open", path));
    return in;
}

std::int64_t parse_id(const std::string& tok, const std::string& where) {
    std::uint64_t v = 0;
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end || v > static_cast<std::uint64_t>(INT64_MAX))
        throw InputError(fmt::format("{}: '{}' is not an unsigned integer id", where, tok));
    return static_cast<std::int64_t>(v);
}

double parse_real(const std::string& tok, const std::string& where) {
    double v = 0;
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end) throw InputError(fmt::format("{}: '{}' is not a number", where, tok));
    return v;
}

}  // namespace

tasks::Graph read_graph(const std::string& path) {
    auto in = open(path);
    tasks::Graph g;
    std::set<std::int64_t> seen;
    std::string line;
    std::int64_t top = -1;
    for (int no = 1; std::getline(in, line); ++no) {
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        const std::string where = fmt::format("{}:{}", path, no);
        const std::int64_t src = parse_id(tok, where);
        if (!seen.insert(src).second) throw InputError(fmt::format("{}: duplicate source id {}", where, src));
        std::vector<std::int64_t> dests;
        while (ss >> tok) dests.push_back(parse_id(tok, where));
        top = std::max(top, src);
        for (auto d : dests) top = std::max(top, d);
        if (g.size() <= static_cast<std::size_t>(top)) g.resize(static_cast<std::size_t>(top) + 1);
        g[static_cast<std::size_t>(src)] = std::move(dests);
    }
    return g;
}

runtime::PartitionedDataset ingest_graph(const std::string& path, int partitions) {
    return tasks::pagerank_input(read_graph(path), partitions);
}

std::vector<tasks::SparsePoint> read_points(const std::string& path, std::size_t* dim) {
    auto in = open(path);
    std::vector<tasks::SparsePoint> out;
    std::size_t d = 0;
    std::string line;
    for (int no = 1; std::getline(in, line); ++no) {
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        const std::string where = fmt::format("{}:{}", path, no);
        tasks::SparsePoint p;
        if (tok == "+1" || tok == "1") p.y = 1.0;
        else if (tok == "-1") p.y = -1.0;
        else throw InputError(fmt::format("{}: label '{}' is not +1 or -1", where, tok));
        while (ss >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw InputError(fmt::format("{}: '{}' is not idx:val", where, tok));
            const auto idx = parse_id(tok.substr(0, colon), where);
            if (!p.idx.empty() && idx <= p.idx.back())
                throw InputError(fmt::format("{}: index {} does not ascend after {}", where, idx, p.idx.back()));
            p.idx.push_back(idx);
            p.val.push_back(parse_real(tok.substr(colon + 1), where));
            d = std::max(d, static_cast<std::size_t>(idx) + 1);
        }
        out.push_back(std::move(p));
    }
    if (dim) *dim = d;
    return out;
}

runtime::PartitionedDataset ingest_points(const std::string& path, int partitions) {
    return tasks::bgd_input(read_points(path), partitions);
}

}  // namespace dlflow::cli
