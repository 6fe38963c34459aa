#include <algorithm>
#include <deque>
#include <mutex>
#include <queue>
#include <stdexcept>

#include <fmt/format.h>

#include "dlflow/runtime/exchange.hpp"
#include "dlflow/runtime/udf.hpp"

namespace dlflow::runtime {

using physical::ConnectorKind;

namespace {

std::vector<int> positions_of(const std::vector<std::string>& names, const std::vector<std::string>& schema) {
    std::vector<int> out;
    for (const auto& n : names) {
        auto it = std::find(schema.begin(), schema.end(), n);
        if (it == schema.end())
            throw std::invalid_argument(fmt::format("connector key {} not in schema ({})", n, fmt::join(schema, ", ")));
        out.push_back(static_cast<int>(it - schema.begin()));
    }
    return out;
}

bool less_on(const Tuple& a, const Tuple& b, const std::vector<int>& cols) {
    for (int c : cols) {
        const auto i = static_cast<std::size_t>(c);
        if (a[i] < b[i]) return true;
        if (b[i] < a[i]) return false;
    }
    return false;
}

struct Batch {
    int sender = 0;
    std::vector<Tuple> tuples;
};

// Receiver side of a connector: a bounded batch queue plus one run per
// sender. A sender facing a full queue drains it into the runs itself before
// pushing, so it cannot run ahead of the receiver by more than the capacity.
class BoundedQueue {
public:
    BoundedQueue(int senders, std::size_t capacity, std::size_t budget) : capacity_(std::max<std::size_t>(capacity, 1)) {
        for (int i = 0; i < senders; ++i) runs_.push_back(std::make_shared<SpillableRun>(budget));
    }

    void push(Batch b) {
        std::lock_guard<std::mutex> g(mu_);
        if (queue_.size() >= capacity_) drain_locked();
        queue_.push_back(std::move(b));
    }

    std::vector<std::shared_ptr<SpillableRun>> finish() {
        std::lock_guard<std::mutex> g(mu_);
        drain_locked();
        return runs_;
    }

private:
    void drain_locked() {
        for (auto& b : queue_) {
            auto& run = *runs_[static_cast<std::size_t>(b.sender)];
            for (auto& t : b.tuples) run.append(std::move(t));
        }
        queue_.clear();
    }

    std::mutex mu_;
    std::deque<Batch> queue_;
    std::size_t capacity_;
    std::vector<std::shared_ptr<SpillableRun>> runs_;
};

RunPtr merge_runs(const std::vector<std::shared_ptr<SpillableRun>>& runs, const std::vector<int>& cols, int receiver,
                  std::size_t budget) {
    std::vector<std::vector<Tuple>> inputs;
    for (const auto& r : runs) inputs.push_back(r->to_vector());
    using Head = std::pair<std::size_t, std::size_t>;  // sender, index
    auto later = [&](const Head& a, const Head& b) {
        const Tuple& x = inputs[a.first][a.second];
        const Tuple& y = inputs[b.first][b.second];
        if (less_on(y, x, cols)) return true;
        if (less_on(x, y, cols)) return false;
        return a.first > b.first;
    };
    std::priority_queue<Head, std::vector<Head>, decltype(later)> heap(later);
    for (std::size_t s = 0; s < inputs.size(); ++s)
        if (!inputs[s].empty()) heap.push({s, 0});
    auto out = std::make_shared<SpillableRun>(budget);
    Tuple prev;
    bool first = true;
    while (!heap.empty()) {
        auto [s, i] = heap.top();
        heap.pop();
        Tuple& t = inputs[s][i];
        if (!first && less_on(t, prev, cols))
            throw PropertyViolation(
                fmt::format("m_to_n_hash_merge receiver {}: sender {} run is not sorted on its merge keys", receiver, s));
        prev = t;
        first = false;
        out->append(std::move(t));
        if (i + 1 < inputs[s].size()) heap.push({s, i + 1});
    }
    return out;
}

}  // namespace

std::vector<Tuple> collect(const Stream& s) {
    std::vector<Tuple> out;
    for (const auto& r : s) r->for_each([&](const Tuple& t) { out.push_back(t); });
    return out;
}

std::size_t stream_size(const Stream& s) {
    std::size_t n = 0;
    for (const auto& r : s) n += r->size();
    return n;
}

std::vector<Stream> exchange(const physical::Connector& c, const std::vector<std::string>& schema,
                             const std::vector<Stream>& senders, int receivers, WorkerPool& pool,
                             const ExchangeOptions& opts, ConnectorMetrics* metrics) {
    const int n_send = static_cast<int>(senders.size());
    if (receivers < 1) throw std::invalid_argument("connector needs at least one receiver");
    auto count_all = [&](std::uint64_t times) {
        if (!metrics) return;
        for (const auto& s : senders)
            for (const auto& r : s) {
                metrics->tuples += r->size() * times;
                metrics->bytes += r->bytes() * times;
            }
    };
    switch (c.kind) {
        case ConnectorKind::none: throw std::logic_error("connector of kind none cannot move data");
        case ConnectorKind::one_to_one:
            if (n_send != receivers)
                throw std::logic_error(
                    fmt::format("one_to_one connector from {} to {} partitions", n_send, receivers));
            count_all(1);
            return senders;
        case ConnectorKind::broadcast: {
            Stream all;
            for (const auto& s : senders) all.insert(all.end(), s.begin(), s.end());
            count_all(static_cast<std::uint64_t>(receivers));
            return std::vector<Stream>(static_cast<std::size_t>(receivers), all);
        }
        default: break;
    }

    std::vector<int> keys;
    if (c.kind == ConnectorKind::m_to_n_hash || c.kind == ConnectorKind::m_to_n_hash_merge)
        keys = positions_of(c.keys, schema);
    std::vector<int> sort_cols;
    if (c.kind == ConnectorKind::m_to_n_hash_merge) sort_cols = positions_of(c.sort_keys, schema);

    auto route = [&](int sender, const Tuple& t) -> int {
        switch (c.kind) {
            case ConnectorKind::aggregate_to_one: return 0;
            case ConnectorKind::fan_in: return sender * receivers / n_send;
            default: return partition_of(t, keys, receivers);
        }
    };

    std::vector<std::unique_ptr<BoundedQueue>> queues;
    for (int r = 0; r < receivers; ++r)
        queues.push_back(std::make_unique<BoundedQueue>(n_send, opts.queue_capacity, opts.spill_budget));
    std::vector<ConnectorMetrics> local(static_cast<std::size_t>(n_send));
    const std::size_t batch = std::max<std::size_t>(opts.batch_size, 1);

    for (int s = 0; s < n_send; ++s) {
        pool.submit(physical::worker_of(s, n_send, pool.size()), [&, s] {
            std::vector<std::vector<Tuple>> out(static_cast<std::size_t>(receivers));
            auto& m = local[static_cast<std::size_t>(s)];
            for (const auto& run : senders[static_cast<std::size_t>(s)]) {
                m.tuples += run->size();
                m.bytes += run->bytes();
                run->for_each([&](const Tuple& t) {
                    const auto r = static_cast<std::size_t>(route(s, t));
                    out[r].push_back(t);
                    if (out[r].size() >= batch) {
                        queues[r]->push({s, std::move(out[r])});
                        out[r].clear();
                    }
                });
            }
            for (std::size_t r = 0; r < out.size(); ++r)
                if (!out[r].empty()) queues[r]->push({s, std::move(out[r])});
        });
    }
    pool.wait();
    if (metrics)
        for (const auto& m : local) {
            metrics->tuples += m.tuples;
            metrics->bytes += m.bytes;
        }

    std::vector<Stream> result(static_cast<std::size_t>(receivers));
    for (int r = 0; r < receivers; ++r) {
        pool.submit(physical::worker_of(r, receivers, pool.size()), [&, r] {
            auto runs = queues[static_cast<std::size_t>(r)]->finish();
            auto& dst = result[static_cast<std::size_t>(r)];
            if (c.kind == ConnectorKind::m_to_n_hash_merge) {
                dst.push_back(merge_runs(runs, sort_cols, r, opts.spill_budget));
                return;
            }
            for (auto& run : runs)
                if (!run->empty()) dst.push_back(std::move(run));
        });
    }
    pool.wait();
    return result;
}

std::vector<std::vector<Tuple>> run_connector(const physical::Connector& c, const std::vector<std::string>& schema,
                                              const std::vector<std::vector<Tuple>>& senders, int receivers,
                                              ConnectorMetrics* metrics) {
    std::vector<Stream> in;
    for (const auto& s : senders) in.push_back({make_run(s)});
    WorkerPool pool(std::max(1, std::min<int>(4, static_cast<int>(senders.size()))));
    ExchangeOptions opts;
    opts.batch_size = 16;
    opts.queue_capacity = 4;
    auto out = exchange(c, schema, in, receivers, pool, opts, metrics);
    std::vector<std::vector<Tuple>> res;
    for (const auto& s : out) res.push_back(collect(s));
    return res;
}

}  // namespace dlflow::runtime
