#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <memory>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "dlflow/runtime/execute.hpp"
#include "dlflow/runtime/vertex_store.hpp"
#include "kernel.hpp"

namespace dlflow::runtime {

using physical::ConnectorKind;
using physical::Dataflow;
using physical::OpKind;
using physical::PhysicalOperator;
using Version = logical::DatasetRef::Version;

std::string IterationMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["iter"] = iter;
    j["wall_ms"] = wall_ms;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [label, m] : connectors) c[label] = {{"tuples", m.tuples}, {"bytes", m.bytes}};
    j["connectors"] = c;
    nlohmann::ordered_json u = nlohmann::ordered_json::object();
    for (const auto& [name, n] : udf_calls) u[name] = n;
    j["udf_calls"] = u;
    if (active_count) j["active_count"] = *active_count;
    if (model_delta) j["model_delta"] = *model_delta;
    j["tuples_written"] = tuples_written;
    return j.dump();
}

std::string RunResult::metrics_jsonl() const {
    std::string out;
    for (const auto& m : iterations) out += m.to_json() + "\n";
    return out;
}

namespace {

using Parts = std::vector<Stream>;
constexpr std::int64_t unversioned = INT64_MIN;

std::size_t parts_size(const Parts& p) {
    std::size_t n = 0;
    for (const auto& s : p) n += stream_size(s);
    return n;
}

std::vector<std::vector<Tuple>> parts_tuples(const Parts& p) {
    std::vector<std::vector<Tuple>> out;
    for (const auto& s : p) out.push_back(collect(s));
    return out;
}

class Engine {
public:
    Engine(const physical::PhysicalPlan& pp, const Catalog& catalog, const UdfRegistry& udfs, const ExecOptions& opts)
        : pp_(pp), catalog_(catalog), udfs_(udfs), opts_(opts), pool_(pp.config.workers) {
        xopts_.batch_size = opts.batch_size;
        xopts_.queue_capacity = opts.queue_capacity;
        xopts_.spill_budget = opts.spill_budget_bytes;
        for (const Dataflow* df : {&pp.init, &pp.step})
            for (const auto& o : df->ops) {
                if (o.kind != OpKind::dataset_read) continue;
                if (o.dataset.version == Version::history) history_.insert(o.dataset.name);
                if (o.dataset.version == Version::constant) pinned_.insert({o.dataset.name, o.dataset.state});
            }
        for (const auto& o : pp.step.ops)
            if (o.kind == OpKind::dataset_write && o.dataset.version == Version::next)
                step_writes_.insert(o.dataset.name);
    }

    RunResult run();

private:
    std::int64_t state_of(const logical::DatasetRef& d, std::int64_t j) const {
        switch (d.version) {
            case Version::none: return unversioned;
            case Version::constant: return static_cast<std::int64_t>(d.state);
            case Version::current: return j;
            case Version::next: return j + 1;
            case Version::history: break;
        }
        throw std::logic_error("history state of " + d.name + " has no single state number");
    }

    const Parts* lookup(const std::string& name, std::int64_t state) const {
        auto p = pending_.find({name, state});
        if (p != pending_.end()) return &p->second;
        auto d = states_.find(name);
        if (d == states_.end()) return nullptr;
        auto s = d->second.find(state);
        return s == d->second.end() ? nullptr : &s->second;
    }

    std::size_t size_of(const std::string& name, std::int64_t state) const {
        const Parts* p = lookup(name, state);
        return p ? parts_size(*p) : 0;
    }

    Parts fit(const Parts& in, int n) const {
        if (static_cast<int>(in.size()) == n) return in;
        std::vector<Tuple> all;
        for (const auto& s : in) {
            auto t = collect(s);
            all.insert(all.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
        }
        Parts out;
        for (auto& part : PartitionedDataset::round_robin(std::move(all), n).partitions)
            out.push_back({make_run(std::move(part), opts_.spill_budget_bytes)});
        return out;
    }

    Parts read(const PhysicalOperator& o, std::int64_t j) const {
        const int n = o.partitions;
        if (o.dataset.version == Version::history) {
            std::vector<std::vector<Tuple>> rows(static_cast<std::size_t>(n));
            auto it = states_.find(o.dataset.name);
            if (it != states_.end())
                for (const auto& [state, parts] : it->second)
                    for (std::size_t p = 0; p < parts.size(); ++p)
                        for (const auto& t : collect(parts[p])) {
                            Tuple r{Value(state)};
                            r.insert(r.end(), t.begin(), t.end());
                            rows[p % rows.size()].push_back(std::move(r));
                        }
            Parts out;
            for (auto& r : rows) out.push_back({make_run(std::move(r), opts_.spill_budget_bytes)});
            return out;
        }
        const Parts* p = lookup(o.dataset.name, state_of(o.dataset, j));
        if (!p) return Parts(static_cast<std::size_t>(n));
        return fit(*p, n);
    }

    Parts scan(const PhysicalOperator& o) const {
        auto it = catalog_.find(o.dataset.name);
        if (it == catalog_.end()) throw std::invalid_argument("catalog has no dataset '" + o.dataset.name + "'");
        Parts out;
        for (auto& part : it->second.split(o.partitions))
            out.push_back({make_run(std::move(part), opts_.spill_budget_bytes)});
        return out;
    }

    VertexStore* store_for(const PhysicalOperator& o, const std::vector<std::string>& main_schema) {
        if (o.kind == OpKind::btree_bulk_load) {
            const auto in = o.input_schema(main_schema);
            const int key = detail::positions_in(o.keys, in, o.name()).at(0);
            auto s = std::make_unique<VertexStore>(o.dataset.name, o.partitions, key);
            VertexStore* raw = s.get();
            stores_[o.dataset.name] = std::move(s);
            return raw;
        }
        if (o.kind != OpKind::btree_index_join && o.kind != OpKind::btree_update) return nullptr;
        auto it = stores_.find(o.dataset.name);
        if (it == stores_.end()) throw std::logic_error(o.name() + " uses btree " + o.dataset.name + " before its load");
        return it->second.get();
    }

    void run_flow(const Dataflow& df, std::int64_t j, IterationMetrics& m);
    void commit();
    void prune(std::int64_t j);
    std::uint64_t pending_count() const {
        std::uint64_t n = 0;
        for (const auto& [k, p] : pending_) n += parts_size(p);
        for (const auto& [k, s] : stores_) n += s->staged();
        return n;
    }
    std::optional<double> model_delta(std::int64_t j) const;
    std::map<std::string, std::vector<Tuple>> results() const;

    const physical::PhysicalPlan& pp_;
    const Catalog& catalog_;
    const UdfRegistry& udfs_;
    ExecOptions opts_;
    ExchangeOptions xopts_;
    WorkerPool pool_;
    std::set<std::string> history_;
    std::set<std::pair<std::string, std::uint64_t>> pinned_;
    std::set<std::string> step_writes_;
    std::map<std::string, std::map<std::int64_t, Parts>> states_;
    std::map<std::pair<std::string, std::int64_t>, Parts> pending_;
    std::map<std::string, std::unique_ptr<VertexStore>> stores_;
};

void Engine::run_flow(const Dataflow& df, std::int64_t j, IterationMetrics& m) {
    std::vector<Parts> outputs(df.ops.size());
    for (int id : df.topological_order()) {
        const PhysicalOperator& o = df.op(id);
        Parts& result = outputs[static_cast<std::size_t>(id)];
        if (o.kind == OpKind::file_scan) {
            result = scan(o);
            continue;
        }
        if (o.kind == OpKind::dataset_read) {
            result = read(o, j);
            continue;
        }

        std::vector<std::string> main_schema, right_schema, side_schema;
        Parts main, right;
        std::vector<std::shared_ptr<const std::vector<Tuple>>> side;
        bool has_main = false, has_side = false;
        for (const auto& in : o.inputs) {
            const PhysicalOperator& from = df.op(in.op);
            ConnectorMetrics* cm = nullptr;
            if (in.connector.kind != ConnectorKind::one_to_one) cm = &m.connectors[from.name() + "->" + o.name()];
            Parts moved = exchange(in.connector, from.schema, outputs[static_cast<std::size_t>(in.op)], o.partitions,
                                   pool_, xopts_, cm);
            if (in.side) {
                has_side = true;
                side_schema = from.schema;
                std::shared_ptr<const std::vector<Tuple>> shared;
                for (std::size_t p = 0; p < moved.size(); ++p) {
                    if (p > 0 && in.connector.kind == ConnectorKind::broadcast) {
                        side.push_back(shared);
                        continue;
                    }
                    shared = std::make_shared<const std::vector<Tuple>>(collect(moved[p]));
                    side.push_back(shared);
                }
            } else if (!has_main) {
                has_main = true;
                main_schema = from.schema;
                main = std::move(moved);
            } else {
                right_schema = from.schema;
                right = std::move(moved);
            }
        }

        VertexStore* store = store_for(o, main_schema);
        detail::Kernel kernel(o, main_schema, right_schema, side_schema, udfs_, store, opts_.limits.float_tolerance);
        const auto n = static_cast<std::size_t>(o.partitions);
        std::vector<std::shared_ptr<SpillableRun>> outs(n);
        std::vector<detail::UdfCalls> calls(n);
        for (std::size_t p = 0; p < n; ++p) {
            outs[p] = std::make_shared<SpillableRun>(opts_.spill_budget_bytes);
            pool_.submit(physical::worker_of(static_cast<int>(p), o.partitions, pool_.size()), [&, p] {
                detail::KernelIO io;
                io.main = has_main ? &main.at(p) : nullptr;
                io.right = right.empty() ? nullptr : &right.at(p);
                io.side = has_side ? side.at(p).get() : nullptr;
                io.partition = static_cast<int>(p);
                io.iteration = j;
                io.calls = &calls[p];
                io.out = outs[p].get();
                kernel.run(io);
            });
        }
        pool_.wait();
        for (const auto& c : calls)
            for (const auto& [name, count] : c) m.udf_calls[name] += count;
        for (auto& r : outs) result.push_back({std::move(r)});

        if (o.kind == OpKind::dataset_write) {
            Parts& dst = pending_[{o.dataset.name, state_of(o.dataset, j)}];
            if (dst.empty()) {
                dst = result;
            } else {
                if (dst.size() != result.size())
                    throw std::logic_error("writes of " + o.dataset.to_string() + " disagree on partitions");
                for (std::size_t p = 0; p < dst.size(); ++p) dst[p].insert(dst[p].end(), result[p].begin(), result[p].end());
            }
        }
    }
}

void Engine::commit() {
    for (auto& [key, parts] : pending_) states_[key.first][key.second] = std::move(parts);
    pending_.clear();
    for (auto& [name, s] : stores_) s->apply_staged();
}

void Engine::prune(std::int64_t j) {
    for (auto& [name, states] : states_) {
        if (history_.count(name)) continue;
        for (auto it = states.begin(); it != states.end();) {
            const bool old = it->first != unversioned && it->first < j;
            const bool keep = it->first >= 0 && pinned_.count({name, static_cast<std::uint64_t>(it->first)});
            if (old && !keep) it = states.erase(it);
            else ++it;
        }
    }
}

std::optional<double> Engine::model_delta(std::int64_t j) const {
    std::optional<double> out;
    for (const auto& name : step_writes_) {
        // A model state is a single row ending in a vector.
        auto row = [&](std::int64_t state) -> std::optional<Value> {
            const Parts* p = lookup(name, state);
            if (!p || parts_size(*p) != 1) return std::nullopt;
            for (const auto& s : *p)
                for (const auto& t : collect(s))
                    if (!t.empty() && t.back().is_vector()) return t.back();
            return std::nullopt;
        };
        const auto before = row(j);
        if (!before) continue;
        double d = 0.0;
        if (size_of(name, j + 1) > 0) {
            const auto after = row(j + 1);
            if (!after || after->as_vector().size() != before->as_vector().size()) continue;
            const auto& x = after->as_vector();
            const auto& y = before->as_vector();
            for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::fabs(x[i] - y[i]));
        }
        out = std::max(out.value_or(0.0), d);
    }
    return out;
}

std::map<std::string, std::vector<Tuple>> Engine::results() const {
    std::map<std::string, std::vector<Tuple>> out;
    for (const auto& [name, states] : states_) {
        auto& dst = out[name];
        for (auto it = states.rbegin(); it != states.rend(); ++it) {
            if (parts_size(it->second) == 0) continue;
            for (const auto& p : it->second)
                for (auto& t : collect(p)) dst.push_back(std::move(t));
            break;
        }
    }
    for (const auto& [name, s] : stores_) out[name] = s->contents();
    return out;
}

RunResult Engine::run() {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
    RunResult res;
    const auto& halt = pp_.halt;

    auto t0 = clock::now();
    run_flow(pp_.init, 0, res.init_metrics);
    res.init_metrics.tuples_written = pending_count();
    commit();
    res.init_metrics.wall_ms = ms(clock::now() - t0);

    std::int64_t j = 0;
    bool halted = halt.kind == logical::Halt::Kind::none ||
                  (halt.kind == logical::Halt::Kind::dataset_empty && size_of(halt.name, 0) == 0);
    while (!halted && j < opts_.limits.max_iters) {
        IterationMetrics m;
        m.iter = j;
        for (const auto& label : pp_.metrics_taps) m.connectors[label];
        t0 = clock::now();
        if (halt.kind == logical::Halt::Kind::dataset_empty) m.active_count = size_of(halt.name, j);
        run_flow(pp_.step, j, m);
        m.tuples_written = pending_count();
        IterationTrace tr;
        if (opts_.record_trace) {
            tr.iter = j;
            for (const auto& [key, parts] : pending_) tr.written[key.first] = parts_tuples(parts);
        }
        commit();
        if (opts_.record_trace) {
            for (const auto& [name, s] : stores_) {
                auto& dst = tr.stores[name];
                for (int p = 0; p < s->partitions(); ++p) dst.push_back(s->partition(p));
            }
            res.trace.push_back(std::move(tr));
        }
        if (halt.kind == logical::Halt::Kind::function_udf_unchanged) {
            m.model_delta = model_delta(j);
            halted = std::all_of(step_writes_.begin(), step_writes_.end(),
                                 [&](const std::string& n) { return size_of(n, j + 1) == 0; });
        } else {
            halted = size_of(halt.name, j + 1) == 0;
        }
        m.wall_ms = ms(clock::now() - t0);
        res.iterations.push_back(std::move(m));
        ++res.iterations_executed;
        prune(j);
        if (!halted) ++j;
    }
    res.halted = halted;
    res.datasets = results();

    if (halted && opts_.shadow_step && halt.kind != logical::Halt::Kind::none) {
        const std::int64_t next = res.iterations_executed == 0 ? 0 : j + 1;
        if (halt.kind == logical::Halt::Kind::function_udf_unchanged)
            for (const auto& n : step_writes_)
                if (size_of(n, next) == 0) {
                    const Parts* prev = lookup(n, next - 1);
                    if (prev) states_[n][next] = *prev;
                }
        IterationMetrics scratch;
        run_flow(pp_.step, next, scratch);
        res.shadow.ran = true;
        res.shadow.derived = pending_count();
        pending_.clear();
        for (auto& [name, s] : stores_) s->clear_staged();
    }
    return res;
}

}  // namespace

RunResult execute(const physical::PhysicalPlan& pp, const Catalog& catalog, const UdfRegistry& udfs,
                  const ExecOptions& opts) {
    const auto report = physical::validate_plan(pp);
    if (!report.ok()) throw PlanInvalid("physical plan failed validation:\n" + report.to_string());
    pp.config.check();
    Engine e(pp, catalog, udfs, opts);
    return e.run();
}

}  // namespace dlflow::runtime
