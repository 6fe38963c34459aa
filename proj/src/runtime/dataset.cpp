#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>

#include <fmt/format.h>
#include <unistd.h>

#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/udf.hpp"

namespace dlflow::runtime {

namespace {

std::string spill_path() {
    static std::atomic<std::uint64_t> counter{0};
    const char* dir = std::getenv("DLFLOW_SPILL_DIR");
    const std::filesystem::path base = dir && *dir ? std::filesystem::path(dir) : std::filesystem::temp_directory_path();
    return (base / fmt::format("dlflow-spill-{}-{}.bin", ::getpid(), counter++)).string();
}

}  // namespace

SpillableRun::SpillableRun(SpillableRun&& o) noexcept
    : mem_(std::move(o.mem_)),
      mem_bytes_(o.mem_bytes_),
      budget_(o.budget_),
      count_(o.count_),
      bytes_(o.bytes_),
      path_(std::move(o.path_)) {
    o.path_.clear();
    o.count_ = o.bytes_ = o.mem_bytes_ = 0;
}

SpillableRun& SpillableRun::operator=(SpillableRun&& o) noexcept {
    if (this != &o) {
        if (!path_.empty()) std::remove(path_.c_str());
        mem_ = std::move(o.mem_);
        mem_bytes_ = o.mem_bytes_;
        budget_ = o.budget_;
        count_ = o.count_;
        bytes_ = o.bytes_;
        path_ = std::move(o.path_);
        o.path_.clear();
        o.count_ = o.bytes_ = o.mem_bytes_ = 0;
    }
    return *this;
}

SpillableRun::~SpillableRun() {
    if (!path_.empty()) std::remove(path_.c_str());
}

void SpillableRun::append(Tuple t) {
    const std::size_t b = encoded_size(t);
    bytes_ += b;
    mem_bytes_ += b;
    ++count_;
    mem_.push_back(std::move(t));
    if (mem_bytes_ > budget_) spill();
}

void SpillableRun::spill() {
    if (path_.empty()) path_ = spill_path();
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open spill file " + path_);
    std::string buf;
    for (const auto& t : mem_) {
        buf.clear();
        encode_tuple(t, buf);
        const auto len = static_cast<std::uint32_t>(buf.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("write to spill file " + path_ + " failed");
    mem_.clear();
    mem_.shrink_to_fit();
    mem_bytes_ = 0;
}

void SpillableRun::replay(const std::function<void(const Tuple&)>& f) const {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw std::runtime_error("cannot reopen spill file " + path_);
    std::string buf;
    std::uint32_t len = 0;
    while (in.read(reinterpret_cast<char*>(&len), sizeof len)) {
        buf.resize(len);
        if (!in.read(buf.data(), len)) throw std::runtime_error("truncated spill file " + path_);
        std::string_view view(buf);
        f(decode_tuple(view));
    }
}

std::vector<Tuple> SpillableRun::to_vector() const {
    std::vector<Tuple> out;
    out.reserve(count_);
    for_each([&](const Tuple& t) { out.push_back(t); });
    return out;
}

RunPtr make_run(std::vector<Tuple> tuples, std::size_t budget) {
    auto run = std::make_shared<SpillableRun>(budget);
    for (auto& t : tuples) run->append(std::move(t));
    return run;
}

int partition_of(const Tuple& t, const std::vector<int>& positions, int n) {
    return static_cast<int>(hash_columns(t, positions) % static_cast<std::size_t>(n));
}

std::size_t PartitionedDataset::size() const {
    std::size_t n = 0;
    for (const auto& p : partitions) n += p.size();
    return n;
}

std::vector<Tuple> PartitionedDataset::flatten() const {
    std::vector<Tuple> out;
    out.reserve(size());
    for (const auto& p : partitions) out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::vector<std::vector<Tuple>> PartitionedDataset::split(int n) const {
    if (static_cast<int>(partitions.size()) == n) return partitions;
    std::vector<std::vector<Tuple>> out(static_cast<std::size_t>(n));
    std::size_t i = 0;
    for (const auto& p : partitions)
        for (const auto& t : p) out[i++ % out.size()].push_back(t);
    return out;
}

void PartitionedDataset::check() const {
    const int n = static_cast<int>(partitions.size());
    auto less = [&](const Tuple& a, const Tuple& b) {
        for (int c : sorted_positions) {
            const auto i = static_cast<std::size_t>(c);
            if (a.at(i) < b.at(i)) return true;
            if (b.at(i) < a.at(i)) return false;
        }
        return false;
    };
    for (int p = 0; p < n; ++p) {
        const auto& part = partitions[static_cast<std::size_t>(p)];
        for (std::size_t i = 0; i < part.size(); ++i) {
            if (!hash_positions.empty() && partition_of(part[i], hash_positions, n) != p)
                throw PropertyViolation(fmt::format("tuple {} sits in partition {} but hashes elsewhere",
                                                    tuple_to_string(part[i]), p));
            if (i > 0 && !sorted_positions.empty() && less(part[i], part[i - 1]))
                throw PropertyViolation(fmt::format("partition {} is out of order at tuple {}", p, i));
        }
    }
}

PartitionedDataset PartitionedDataset::hash_partitioned(std::vector<Tuple> tuples, std::vector<int> key_positions,
                                                        int partitions) {
    PartitionedDataset d;
    d.partitions.resize(static_cast<std::size_t>(partitions));
    for (auto& t : tuples) {
        const int p = partition_of(t, key_positions, partitions);
        d.partitions[static_cast<std::size_t>(p)].push_back(std::move(t));
    }
    d.hash_positions = std::move(key_positions);
    return d;
}

PartitionedDataset PartitionedDataset::round_robin(std::vector<Tuple> tuples, int partitions) {
    PartitionedDataset d;
    d.partitions.resize(static_cast<std::size_t>(partitions));
    std::size_t i = 0;
    for (auto& t : tuples) d.partitions[i++ % d.partitions.size()].push_back(std::move(t));
    return d;
}

}  // namespace dlflow::runtime
