#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "dlflow/physical/plan.hpp"
#include "props.hpp"

namespace dlflow::physical {

namespace {

using logical::LogicalOperator;
using logical::ProjectionItem;
using LKind = logical::OpKind;
using Version = logical::DatasetRef::Version;
using detail::Props;
using detail::StoreMap;

template <typename T>
bool contains(const std::vector<T>& v, const T& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

int index_of(const std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

bool column_only(const LogicalOperator& o) {
    return o.kind == LKind::projection &&
           std::all_of(o.items.begin(), o.items.end(),
                       [](const ProjectionItem& it) { return it.kind == ProjectionItem::Kind::column; });
}

// Source column of `name` in a column-only projection, or "" when absent.
std::string source_of(const LogicalOperator& proj, const std::string& name) {
    for (const auto& it : proj.items)
        if (it.kind == ProjectionItem::Kind::column && it.names[0] == name) return it.source;
    return "";
}

// Output name of `source` in a column-only projection, or "".
std::string output_of(const LogicalOperator& proj, const std::string& source) {
    for (const auto& it : proj.items)
        if (it.kind == ProjectionItem::Kind::column && it.source == source) return it.names[0];
    return "";
}

// A btree probe: the latest state of a dataset, keyed by one column.
struct Latest {
    std::string dataset;
    std::string key;
    /// Stored-tuple position of each schema column.
    std::vector<int> positions;
};

// An inner join answered by probing a btree.
struct IndexJoin {
    int btree_side = 0;
    int latest = -1;
    std::vector<std::string> value_columns;
    std::vector<int> value_positions;
};

// Mutable copy of a logical dataflow. Dead operators stay in place so ids
// remain stable.
struct Work {
    std::vector<LogicalOperator> ops;
    std::vector<bool> dead;
    std::map<int, Latest> latest;

    explicit Work(const logical::Dataflow& df) : ops(df.ops), dead(df.ops.size(), false) {}

    LogicalOperator& op(int id) { return ops.at(static_cast<std::size_t>(id)); }
    const LogicalOperator& op(int id) const { return ops.at(static_cast<std::size_t>(id)); }
    bool live(int id) const { return !dead.at(static_cast<std::size_t>(id)); }

    int add(LogicalOperator o) {
        o.id = static_cast<int>(ops.size());
        ops.push_back(std::move(o));
        dead.push_back(false);
        return ops.back().id;
    }
    void kill(int id) { dead.at(static_cast<std::size_t>(id)) = true; }

    std::vector<int> live_ids() const {
        std::vector<int> out;
        for (const auto& o : ops)
            if (live(o.id)) out.push_back(o.id);
        return out;
    }
    std::vector<int> consumers(int id) const {
        std::vector<int> out;
        for (const auto& o : ops)
            if (live(o.id) && std::find(o.inputs.begin(), o.inputs.end(), id) != o.inputs.end()) out.push_back(o.id);
        return out;
    }
    void replace_uses(int from, int to) {
        for (auto& o : ops)
            if (live(o.id) && o.id != to)
                for (auto& in : o.inputs)
                    if (in == from) in = to;
    }
    bool depends_on(int id, int target) const {
        if (id == target) return true;
        for (int in : op(id).inputs)
            if (depends_on(in, target)) return true;
        return false;
    }
    // Drops operators no write depends on.
    void sweep() {
        std::vector<bool> keep(ops.size(), false);
        std::function<void(int)> mark = [&](int id) {
            if (keep[static_cast<std::size_t>(id)]) return;
            keep[static_cast<std::size_t>(id)] = true;
            for (int in : op(id).inputs) mark(in);
        };
        for (const auto& o : ops)
            if (live(o.id) && o.is_write()) mark(o.id);
        for (std::size_t i = 0; i < ops.size(); ++i)
            if (!keep[i]) dead[i] = true;
    }
};

int add_rename(Work& w, int input, const std::vector<std::string>& from, const std::vector<std::string>& to,
               const std::string& rule) {
    LogicalOperator p;
    p.kind = LKind::projection;
    p.inputs = {input};
    p.schema = to;
    p.rule = rule;
    for (std::size_t i = 0; i < to.size(); ++i) p.items.push_back(ProjectionItem::of_column(to[i], from[i]));
    return w.add(std::move(p));
}

class Optimizer {
public:
    Optimizer(const logical::LogicalPlan& lp, const ClusterConfig& cfg, const std::vector<std::string>& commutative)
        : lp_(lp), cfg_(cfg), init_(lp.init), step_(lp.step) {
        commutative_ = {"max", "min", "sum", "count"};
        commutative_.insert(commutative.begin(), commutative.end());
        for (const auto* df : {&lp.init, &lp.step})
            for (const auto& o : df->ops)
                if (o.is_write()) written_.insert(o.dataset.name);
    }

    PhysicalPlan run();

private:
    void note(const std::string& name, const std::string& detail) {
        for (const auto& r : *rules_)
            if (r.name == name && r.detail == detail) return;
        rules_->push_back({name, detail});
    }

    // storage_selection
    void select_storage();
    bool try_btree(const std::string& d);
    bool try_grouped(const std::string& d);

    // shared_scan and projection cleanup
    void share_scans(Work& w, bool init);
    void clean_projections(Work& w);

    // join_selection on the logical level: which joins probe a btree
    std::map<int, IndexJoin> find_index_joins(const Work& w) const;
    // Hash+sort requirements pushed toward the operator producing the key.
    std::map<int, std::pair<std::vector<std::string>, std::vector<std::string>>> hoist(const Work& w, bool init) const;

    Dataflow lower(const Work& w, bool init, const StoreMap& stored);

    const logical::LogicalPlan& lp_;
    ClusterConfig cfg_;
    Work init_;
    Work step_;
    std::set<std::string> commutative_;
    std::set<std::string> written_;
    std::vector<StorageDecl> storage_;
    std::vector<AppliedRule> logical_rules_;
    std::vector<AppliedRule>* rules_ = &logical_rules_;

    friend class Lowering;
};

// ---------------------------------------------------------------------------
// storage_selection

void Optimizer::select_storage() {
    std::set<std::string> names;
    for (const auto& o : step_.ops)
        if (o.is_read() && o.dataset.version != Version::none) names.insert(o.dataset.name);
    for (const auto& d : names) {
        if (try_btree(d)) continue;
        try_grouped(d);
    }
}

bool Optimizer::try_btree(const std::string& d) {
    struct Pattern {
        int r1, g, r2, n;
        std::string key, t;
    };
    std::vector<int> history;
    for (int id : step_.live_ids()) {
        const auto& o = step_.op(id);
        if (!o.is_read() || o.dataset.name != d) continue;
        if (o.dataset.version != Version::history) return false;
        history.push_back(id);
    }
    if (history.empty()) return false;
    std::vector<Pattern> found;
    std::set<int> covered;
    for (int g : step_.live_ids()) {
        const auto& go = step_.op(g);
        if (go.kind != LKind::group_by || go.udf != "max" || go.keys.size() != 1) continue;
        const int r1 = go.inputs[0];
        if (!contains(history, r1) || step_.consumers(r1).size() != 1) continue;
        if (step_.op(r1).schema.empty() || step_.op(r1).schema[0] != go.aggregate_over) continue;
        for (int n : step_.consumers(g)) {
            const auto& no = step_.op(n);
            if (no.kind != LKind::inner_join || no.keys.size() != 2) continue;
            if (!contains(no.keys, go.keys[0]) || !contains(no.keys, go.aggregate_over)) continue;
            const int r2 = no.inputs[0] == g ? no.inputs[1] : no.inputs[0];
            if (!contains(history, r2) || step_.consumers(r2).size() != 1 || r2 == r1) continue;
            found.push_back({r1, g, r2, n, go.keys[0], go.aggregate_over});
            covered.insert(r1);
            covered.insert(r2);
            break;
        }
    }
    if (covered.size() != history.size()) return false;

    // Every pattern must expose the same key position and feed only
    // key-preserving projections into joins on that key.
    int key_pos = -1;
    std::size_t arity = 0;
    for (const auto& p : found) {
        const auto& r2 = step_.op(p.r2).schema;
        const int k = index_of(r2, p.key) - 1;
        if (k < 0 || (key_pos >= 0 && key_pos != k)) return false;
        key_pos = k;
        arity = r2.size() - 1;
        for (int c : step_.consumers(p.n)) {
            const auto& co = step_.op(c);
            if (!column_only(co)) return false;
            for (const auto& it : co.items)
                if (it.source == p.t) return false;
            const std::string k_out = output_of(co, p.key);
            if (k_out.empty()) return false;
            for (int j : step_.consumers(c)) {
                const auto& jo = step_.op(j);
                if (jo.kind != LKind::inner_join || jo.keys != std::vector<std::string>{k_out}) return false;
            }
        }
    }
    bool init_write = false, step_write = false;
    for (const auto& o : init_.ops)
        if (o.is_write() && o.dataset.name == d) {
            if (o.dataset.version != Version::constant || o.dataset.state != 0 || o.schema.size() != arity) return false;
            init_write = true;
        }
    for (const auto& o : step_.ops)
        if (o.is_write() && o.dataset.name == d) {
            if (o.dataset.version != Version::next || o.schema.size() != arity) return false;
            step_write = true;
        }
    if (!init_write || !step_write) return false;
    // Init may only read what its own writer produced; that read is shared.
    for (const auto& o : init_.ops)
        if (o.is_read() && o.dataset.name == d && o.dataset.version != Version::constant) return false;

    std::string key_name;
    for (const auto& p : found) {
        const LogicalOperator no = step_.op(p.n);
        const std::vector<std::string> r2 = step_.op(p.r2).schema;
        LogicalOperator l;
        l.kind = LKind::dataset;
        l.dataset = {d, Version::history, 0};
        l.rule = no.rule;
        Latest info{d, p.key, {}};
        for (const auto& c : no.schema) {
            if (c == p.t) continue;
            l.schema.push_back(c);
            info.positions.push_back(index_of(r2, c) - 1);
        }
        const int lid = step_.add(std::move(l));
        step_.latest[lid] = info;
        step_.replace_uses(p.n, lid);
        for (int x : {p.n, p.g, p.r1, p.r2}) step_.kill(x);
        key_name = p.key;
        note("storage_selection",
             fmt::format("rules {}, {}: latest {} by max state then join replaced by a btree on {}",
                         step_.op(p.g).rule, no.rule, d, p.key));
    }
    StorageDecl s;
    s.kind = StorageDecl::Kind::btree;
    s.dataset = d;
    s.key_positions = {key_pos};
    s.key_names = {key_name};
    storage_.push_back(s);
    return true;
}

bool Optimizer::try_grouped(const std::string& d) {
    std::vector<std::pair<Work*, int>> reads;
    for (Work* w : {&init_, &step_})
        for (int id : w->live_ids()) {
            const auto& o = w->op(id);
            if (o.is_read() && o.dataset.name == d) reads.push_back({w, id});
        }
    if (reads.empty()) return false;
    std::vector<std::string> agg_keys;
    std::string agg, rule;
    std::size_t arity = 0;
    std::vector<std::pair<Work*, int>> groups;
    for (auto [w, r] : reads) {
        const auto& ro = w->op(r);
        if (w == &step_ && ro.dataset.version != Version::current) return false;
        if (w == &init_) return false;
        const auto cs = w->consumers(r);
        if (cs.size() != 1) return false;
        const auto& g = w->op(cs[0]);
        if (g.kind != LKind::group_by || g.schema != ro.schema) return false;
        if (!agg.empty() && agg != g.udf) return false;
        agg = g.udf;
        rule = g.rule;
        arity = ro.schema.size();
        groups.push_back({w, g.id});
    }
    std::vector<std::pair<Work*, int>> writes;
    for (Work* w : {&init_, &step_})
        for (int id : w->live_ids())
            if (w->op(id).is_write() && w->op(id).dataset.name == d) {
                if (w->op(id).schema.size() != arity) return false;
                writes.push_back({w, id});
            }
    if (writes.empty()) return false;

    for (auto [w, g] : groups) {
        w->replace_uses(g, w->op(g).inputs[0]);
        w->kill(g);
    }
    for (auto [w, wr] : writes) {
        const auto& in = w->op(w->op(wr).inputs[0]);
        LogicalOperator g;
        g.kind = LKind::group_by;
        g.inputs = {in.id};
        g.schema = in.schema;
        g.keys.assign(in.schema.begin(), in.schema.end() - 1);
        g.udf = agg;
        g.aggregate_over = in.schema.back();
        g.rule = rule;
        const int gid = w->add(std::move(g));
        w->op(wr).inputs[0] = gid;
    }
    StorageDecl s;
    s.kind = StorageDecl::Kind::grouped;
    s.dataset = d;
    for (std::size_t i = 0; i + 1 < arity; ++i) {
        s.key_positions.push_back(static_cast<int>(i));
        s.key_names.push_back(reads[0].first->op(reads[0].second).schema[i]);
    }
    s.aggregate = agg;
    s.value_position = static_cast<int>(arity) - 1;
    storage_.push_back(s);
    note("storage_selection", fmt::format("{} stored grouped by {}; rule {} group-by moved before its writers", d,
                                          agg, rule));
    return true;
}


// ---------------------------------------------------------------------------
// shared_scan

void Optimizer::share_scans(Work& w, bool init) {
    // A read of a state this dataflow also writes takes the writer's input.
    for (int id : w.live_ids()) {
        const LogicalOperator r = w.op(id);
        if (!r.is_read() || w.latest.count(id)) continue;
        std::vector<int> writers;
        for (int x : w.live_ids())
            if (w.op(x).is_write() && w.op(x).dataset == r.dataset) writers.push_back(x);
        if (writers.size() != 1) continue;
        const LogicalOperator wr = w.op(writers[0]);
        const int src = wr.inputs[0];
        if (w.depends_on(src, id) || w.op(src).schema.size() != r.schema.size()) continue;
        const int p = add_rename(w, src, w.op(src).schema, r.schema, r.rule);
        w.replace_uses(id, p);
        w.kill(id);
        note("shared_scan", fmt::format("rule {}: {} taken from the output of rule {}", r.rule, r.dataset.to_string(),
                                        wr.rule));
    }
    // Reads of the same state collapse into one scan.
    std::map<std::string, int> first;
    for (int id : w.live_ids()) {
        const LogicalOperator r = w.op(id);
        if (!r.is_read() || w.latest.count(id)) continue;
        const std::string key = r.dataset.to_string();
        auto it = first.find(key);
        if (it == first.end()) {
            first.emplace(key, id);
            continue;
        }
        const LogicalOperator keep = w.op(it->second);
        if (keep.schema.size() != r.schema.size()) continue;
        const int to = keep.schema == r.schema ? keep.id : add_rename(w, keep.id, keep.schema, r.schema, r.rule);
        w.replace_uses(id, to);
        w.kill(id);
        note("shared_scan", fmt::format("rules {}, {}: one scan of {}", keep.rule, r.rule, key));
    }
    (void)init;
    w.sweep();
}

void Optimizer::clean_projections(Work& w) {
    for (bool changed = true; changed;) {
        changed = false;
        for (int id : w.live_ids()) {
            LogicalOperator& o = w.op(id);
            if (o.kind != LKind::projection || o.inputs.empty()) continue;
            const LogicalOperator& in = w.op(o.inputs[0]);
            bool identity = o.schema == in.schema;
            for (const auto& it : o.items)
                identity = identity && it.kind == ProjectionItem::Kind::column && it.names[0] == it.source;
            if (identity) {
                w.replace_uses(id, in.id);
                w.kill(id);
                changed = true;
                continue;
            }
            if (in.kind != LKind::projection || in.inputs.empty()) continue;
            auto producer = [&](const std::string& col) -> const ProjectionItem* {
                for (const auto& q : in.items)
                    if (contains(q.names, col)) return &q;
                return nullptr;
            };
            std::vector<ProjectionItem> composed;
            bool ok = true;
            for (const auto& it : o.items) {
                if (it.kind == ProjectionItem::Kind::constant) {
                    composed.push_back(it);
                    continue;
                }
                const ProjectionItem* q = producer(it.source);
                if (!q || q->kind == ProjectionItem::Kind::unnest) {
                    ok = false;
                    break;
                }
                if (it.kind == ProjectionItem::Kind::unnest) {
                    if (q->kind != ProjectionItem::Kind::column) {
                        ok = false;
                        break;
                    }
                    composed.push_back(ProjectionItem::of_unnest(q->source, it.names));
                } else if (q->kind == ProjectionItem::Kind::column) {
                    composed.push_back(ProjectionItem::of_column(it.names[0], q->source));
                } else {
                    composed.push_back(ProjectionItem::of_constant(it.names[0], q->constant));
                }
            }
            if (!ok) continue;
            o.items = std::move(composed);
            o.inputs = in.inputs;
            changed = true;
        }
    }
    w.sweep();
}

// ---------------------------------------------------------------------------
// join_selection and requirement placement

std::map<int, IndexJoin> Optimizer::find_index_joins(const Work& w) const {
    std::map<int, IndexJoin> out;
    for (int n : w.live_ids()) {
        const auto& no = w.op(n);
        if (no.kind != LKind::inner_join || no.keys.size() != 1) continue;
        for (int side = 0; side < 2; ++side) {
            std::vector<int> chain;
            int cur = no.inputs[static_cast<std::size_t>(side)];
            while (column_only(w.op(cur))) {
                chain.push_back(cur);
                cur = w.op(cur).inputs[0];
            }
            auto l = w.latest.find(cur);
            if (l == w.latest.end()) continue;
            auto trace = [&](std::string name) {
                for (int c : chain) {
                    name = source_of(w.op(c), name);
                    if (name.empty()) break;
                }
                return name;
            };
            if (trace(no.keys[0]) != l->second.key) continue;
            IndexJoin ij;
            ij.btree_side = side;
            ij.latest = cur;
            for (const auto& c : w.op(no.inputs[static_cast<std::size_t>(side)]).schema) {
                if (c == no.keys[0]) continue;
                const int at = index_of(w.op(cur).schema, trace(c));
                ij.value_columns.push_back(c);
                ij.value_positions.push_back(l->second.positions.at(static_cast<std::size_t>(at)));
            }
            out.emplace(n, ij);
            break;
        }
    }
    return out;
}

using Requirement = std::pair<std::vector<std::string>, std::vector<std::string>>;

std::map<int, Requirement> Optimizer::hoist(const Work& w, bool init) const {
    std::map<int, Requirement> out;
    std::function<void(int, Requirement)> push = [&](int id, Requirement r) {
        const auto& o = w.op(id);
        std::vector<std::string> cols = r.first;
        cols.insert(cols.end(), r.second.begin(), r.second.end());
        if (o.kind == LKind::projection && !o.inputs.empty()) {
            Requirement m;
            bool ok = true;
            for (auto* part : {&r.first, &r.second})
                for (const auto& c : *part) {
                    const std::string s = source_of(o, c);
                    ok = ok && !s.empty();
                    (part == &r.first ? m.first : m.second).push_back(s);
                }
            if (ok) {
                push(o.inputs[0], m);
                return;
            }
        }
        if ((o.kind == LKind::selection || o.kind == LKind::function_apply) && !o.inputs.empty()) {
            const auto& in = w.op(o.inputs[0]).schema;
            if (std::all_of(cols.begin(), cols.end(), [&](const std::string& c) { return contains(in, c); })) {
                push(o.inputs[0], r);
                return;
            }
        }
        out.emplace(id, r);
    };
    for (int id : w.live_ids()) {
        const auto& o = w.op(id);
        if (!o.is_write() || !init) continue;
        for (const auto& s : storage_)
            if (s.kind == StorageDecl::Kind::btree && s.dataset == o.dataset.name) {
                const auto& in = w.op(o.inputs[0]).schema;
                const std::string k = in.at(static_cast<std::size_t>(s.key_positions[0]));
                push(o.inputs[0], {{k}, {k}});
            }
    }
    for (const auto& [n, ij] : find_index_joins(w)) {
        const auto& no = w.op(n);
        push(no.inputs[static_cast<std::size_t>(1 - ij.btree_side)], {no.keys, no.keys});
    }
    return out;
}

// ---------------------------------------------------------------------------
// lowering

Connector conn(ConnectorKind k, std::vector<std::string> keys = {}, std::vector<std::string> sort_keys = {}) {
    Connector c;
    c.kind = k;
    c.keys = std::move(keys);
    c.sort_keys = std::move(sort_keys);
    if (k == ConnectorKind::m_to_n_hash_merge || k == ConnectorKind::broadcast)
        c.materialization = Materialization::blocking;
    return c;
}

struct Stream {
    int op = -1;
    std::vector<std::string> schema;
    Props props;
};

struct Edge {
    Stream from;
    Connector connector;
};

std::string list(const std::vector<std::string>& v) { return fmt::format("[{}]", fmt::join(v, ", ")); }

class Lowering {
public:
    Lowering(Optimizer& opt, const Work& w, bool init, const StoreMap& stored)
        : opt_(opt), w_(w), init_(init), stored_(stored), parts_(opt.cfg_.partitions()) {
        joins_ = opt.find_index_joins(w);
        hoisted_ = opt.hoist(w, init);
        for (const auto& [name, s] : stored) write_parts_[name] = s.partitions;
    }

    Dataflow run() {
        for (int id : w_.live_ids())
            if (w_.op(id).is_write()) get(id);
        return std::move(out_);
    }

private:
    int emit(PhysicalOperator o) {
        o.id = static_cast<int>(out_.ops.size());
        out_.ops.push_back(std::move(o));
        return out_.ops.back().id;
    }

    bool scan(const Stream& s) const { return out_.op(s.op).kind == OpKind::file_scan; }

    Stream stream(int id, Props p) { return Stream{id, out_.op(id).schema, std::move(p)}; }

    static PhysInput input(const Stream& s, Connector c, bool side = false) { return PhysInput{s.op, std::move(c), side}; }

    PhysicalOperator base(OpKind k, const std::string& rule, int partitions) {
        PhysicalOperator o;
        o.kind = k;
        o.rule = rule;
        o.partitions = partitions;
        return o;
    }

    Stream sort(const Stream& s, const Connector& c, const std::vector<std::string>& keys, const std::string& rule) {
        const int n = c.kind == ConnectorKind::one_to_one ? s.props.partitions : parts_;
        auto o = base(OpKind::sort, rule, n);
        o.inputs = {input(s, c)};
        o.schema = s.schema;
        o.keys = keys;
        Props p = detail::across(s.props, c, n);
        p.sorted_by = keys;
        return stream(emit(std::move(o)), p);
    }

    // Connects `s` so that the receiver is partitioned by hash(keys) over all
    // partitions and, when `sort_keys` is non-empty, sorted by them.
    Edge ensure(const Stream& s, const std::vector<std::string>& keys, const std::vector<std::string>& sort_keys,
                const std::string& rule) {
        const Connector one = conn(ConnectorKind::one_to_one);
        if (detail::hashed_as(s.props, keys, parts_)) {
            if (sort_keys.empty() || detail::sorted_on(s.props, sort_keys)) return {s, one};
            return {sort(s, one, sort_keys, rule), one};
        }
        const Connector h = conn(ConnectorKind::m_to_n_hash, keys);
        if (sort_keys.empty()) return {s, h};
        return {sort(s, h, sort_keys, rule), one};
    }

    Stream get(int lid) {
        auto it = memo_.find(lid);
        if (it != memo_.end()) return it->second;
        Stream s = lower(lid);
        auto h = hoisted_.find(lid);
        if (h != hoisted_.end() && !h->second.second.empty()) {
            const auto& [keys, sort_keys] = h->second;
            const bool satisfied = detail::hashed_as(s.props, keys, parts_) && detail::sorted_on(s.props, sort_keys);
            if (!satisfied) {
                Edge e = ensure(s, keys, sort_keys, w_.op(lid).rule);
                if (e.connector.kind == ConnectorKind::one_to_one) {
                    s = e.from;
                    opt_.note("order_property", fmt::format("rule {}: hash partitioning and sort on {} placed right after {}",
                                                            w_.op(lid).rule, list(keys), w_.op(lid).label()));
                }
            }
        }
        memo_.emplace(lid, s);
        return s;
    }

    Stream lower(int lid) {
        const LogicalOperator& o = w_.op(lid);
        switch (o.kind) {
            case LKind::dataset: return o.is_read() ? lower_read(o) : lower_write(o);
            case LKind::projection: {
                if (o.inputs.empty()) {
                    auto p = base(OpKind::projection_fn, o.rule, 1);
                    p.items = o.items;
                    p.schema = o.schema;
                    return stream(emit(std::move(p)), Props{});
                }
                Stream s = get(o.inputs[0]);
                auto p = base(OpKind::projection_fn, o.rule, s.props.partitions);
                p.inputs = {input(s, conn(ConnectorKind::one_to_one))};
                p.items = o.items;
                p.schema = o.schema;
                return stream(emit(std::move(p)), detail::map_through(s.props, o.items));
            }
            case LKind::selection: {
                Stream s = get(o.inputs[0]);
                auto p = base(OpKind::selection, o.rule, s.props.partitions);
                p.inputs = {input(s, conn(ConnectorKind::one_to_one))};
                p.predicate = o.predicate;
                p.schema = o.schema;
                return stream(emit(std::move(p)), s.props);
            }
            case LKind::function_apply: return lower_function(o);
            case LKind::cross_product: return lower_cross(o);
            case LKind::inner_join: return lower_join(o);
            case LKind::group_by: return lower_group_by(o);
            case LKind::group_all: return lower_group_all(o);
        }
        throw std::logic_error("unknown logical operator");
    }

    Stream lower_read(const LogicalOperator& o) {
        if (w_.latest.count(o.id)) throw std::logic_error("btree probe of " + o.dataset.name + " outside its join");
        if (o.dataset.version == Version::none && !opt_.written_.count(o.dataset.name)) {
            auto p = base(OpKind::file_scan, o.rule, parts_);
            p.dataset = o.dataset;
            p.schema = o.schema;
            return stream(emit(std::move(p)), Props{parts_, {}, {}});
        }
        auto sit = stored_.find(o.dataset.name);
        const int n = sit == stored_.end() ? parts_ : sit->second.partitions;
        auto p = base(OpKind::dataset_read, o.rule, n);
        p.dataset = o.dataset;
        p.schema = o.schema;
        Props props{n, {}, {}};
        if (sit != stored_.end() && o.dataset.version != Version::history)
            props = detail::from_stored(sit->second, o.schema);
        return stream(emit(std::move(p)), props);
    }

    Stream lower_write(const LogicalOperator& o) {
        Stream s = get(o.inputs[0]);
        const StorageDecl* decl = nullptr;
        for (const auto& d : opt_.storage_)
            if (d.kind == StorageDecl::Kind::btree && d.dataset == o.dataset.name) decl = &d;
        if (decl) {
            const std::string k = s.schema.at(static_cast<std::size_t>(decl->key_positions[0]));
            const bool load = o.dataset.version == Version::constant;
            Edge e = ensure(s, {k}, load ? std::vector<std::string>{k} : std::vector<std::string>{}, o.rule);
            auto p = base(load ? OpKind::btree_bulk_load : OpKind::btree_update, o.rule, parts_);
            p.inputs = {input(e.from, e.connector)};
            p.dataset = o.dataset;
            p.keys = {k};
            p.schema = s.schema;
            return stream(emit(std::move(p)), detail::across(e.from.props, e.connector, parts_));
        }
        auto wp = write_parts_.find(o.dataset.name);
        int n = s.props.partitions;
        Connector c = conn(ConnectorKind::one_to_one);
        if (wp == write_parts_.end()) {
            write_parts_[o.dataset.name] = n;
        } else if (wp->second != n) {
            n = wp->second;
            c = n == 1 ? conn(ConnectorKind::aggregate_to_one) : conn(ConnectorKind::m_to_n_hash, {s.schema.at(0)});
        }
        auto p = base(OpKind::dataset_write, o.rule, n);
        p.inputs = {input(s, c)};
        p.dataset = o.dataset;
        p.schema = s.schema;
        return stream(emit(std::move(p)), detail::across(s.props, c, n));
    }

    Stream lower_function(const LogicalOperator& o) {
        if (o.inputs.empty()) {
            auto p = base(OpKind::function_call, o.rule, 1);
            p.udf = o.udf;
            p.args = o.args;
            p.schema = o.schema;
            return stream(emit(std::move(p)), Props{});
        }
        const LogicalOperator& in = w_.op(o.inputs[0]);
        if (in.kind == LKind::cross_product && w_.consumers(in.id).size() == 1) {
            Stream a = get(in.inputs[0]);
            Stream b = get(in.inputs[1]);
            if (a.props.partitions == 1 && b.props.partitions == 1 && !scan(a) && !scan(b)) {
                auto p = base(OpKind::function_call, o.rule, 1);
                p.inputs = {input(a, conn(ConnectorKind::one_to_one)), input(b, conn(ConnectorKind::broadcast), true)};
                p.udf = o.udf;
                p.args = o.args;
                p.schema = o.schema;
                opt_.note("join_selection", fmt::format("rule {}: single-row cross_product folded into {} as a "
                                                        "broadcast side input",
                                                        o.rule, o.udf));
                return stream(emit(std::move(p)), a.props);
            }
        }
        Stream s = get(o.inputs[0]);
        auto p = base(OpKind::function_call, o.rule, s.props.partitions);
        p.inputs = {input(s, conn(ConnectorKind::one_to_one))};
        p.udf = o.udf;
        p.args = o.args;
        p.schema = o.schema;
        return stream(emit(std::move(p)), s.props);
    }

    Stream lower_cross(const LogicalOperator& o) {
        Stream a = get(o.inputs[0]);
        Stream b = get(o.inputs[1]);
        // The wider input stays in place; on a tie a scan does, else the left.
        const bool right_main = b.props.partitions > a.props.partitions ||
                                (b.props.partitions == a.props.partitions && scan(b) && !scan(a));
        const Stream& m = right_main ? b : a;
        const Stream& side = right_main ? a : b;
        auto p = base(OpKind::cross_product, o.rule, m.props.partitions);
        p.inputs = {input(m, conn(ConnectorKind::one_to_one)), input(side, conn(ConnectorKind::broadcast), true)};
        p.side_first = right_main;
        p.schema = o.schema;
        opt_.note("join_selection", fmt::format("rule {}: cross_product broadcasts its {}-partition input", o.rule,
                                                side.props.partitions));
        return stream(emit(std::move(p)), m.props);
    }

    Stream lower_join(const LogicalOperator& o) {
        auto ij = joins_.find(o.id);
        if (ij != joins_.end()) {
            const auto& info = ij->second;
            const Latest& l = w_.latest.at(info.latest);
            Stream probe = get(o.inputs[static_cast<std::size_t>(1 - info.btree_side)]);
            Edge e = ensure(probe, o.keys, o.keys, o.rule);
            auto p = base(OpKind::btree_index_join, o.rule, parts_);
            p.inputs = {input(e.from, e.connector)};
            p.dataset.name = l.dataset;
            p.keys = o.keys;
            p.value_columns = info.value_columns;
            p.value_positions = info.value_positions;
            p.schema = probe.schema;
            p.schema.insert(p.schema.end(), info.value_columns.begin(), info.value_columns.end());
            const auto schema = p.schema;
            Stream s = stream(emit(std::move(p)), detail::across(e.from.props, e.connector, parts_));
            opt_.note("join_selection",
                      fmt::format("rule {}: inner_join on {} probes the {} btree", o.rule, list(o.keys), l.dataset));
            if (schema == o.schema) return s;
            auto r = base(OpKind::projection_fn, o.rule, parts_);
            r.inputs = {input(s, conn(ConnectorKind::one_to_one))};
            for (const auto& c : o.schema) r.items.push_back(ProjectionItem::of_column(c, c));
            r.schema = o.schema;
            return stream(emit(std::move(r)), detail::map_through(s.props, r.items));
        }
        Stream a = get(o.inputs[0]);
        Stream b = get(o.inputs[1]);
        Edge ea = ensure(a, o.keys, {}, o.rule);
        Edge eb = ensure(b, o.keys, {}, o.rule);
        auto p = base(OpKind::hash_join, o.rule, parts_);
        p.inputs = {input(ea.from, ea.connector), input(eb.from, eb.connector)};
        p.keys = o.keys;
        p.schema = o.schema;
        opt_.note("join_selection", fmt::format("rule {}: inner_join on {} as a hash join", o.rule, list(o.keys)));
        Props props = detail::across(ea.from.props, ea.connector, parts_);
        props.sorted_by.clear();
        return stream(emit(std::move(p)), props);
    }

    Stream group_op(const LogicalOperator& g, OpKind k, AggPhase phase, const Stream& s, const Connector& c, int n) {
        auto p = base(k, g.rule, n);
        p.inputs = {input(s, c)};
        p.keys = g.keys;
        p.udf = g.udf;
        p.aggregate_over = g.aggregate_over;
        p.phase = phase;
        p.schema = g.schema;
        Props props = detail::across(s.props, c, n);
        if (k == OpKind::group_all) {
            props = Props{n, {}, {}};
        } else {
            if (!detail::clustered_by(props, g.keys)) props.hash_keys.clear();
            props.sorted_by = g.keys;
        }
        return stream(emit(std::move(p)), props);
    }

    Stream lower_group_by(const LogicalOperator& g) {
        Stream s = get(g.inputs[0]);
        const Connector one = conn(ConnectorKind::one_to_one);
        if (detail::clustered_by(s.props, g.keys) && (s.props.partitions == parts_ || s.props.partitions == 1)) {
            if (!detail::sorted_on(s.props, g.keys)) {
                s = sort(s, one, g.keys, g.rule);
            } else {
                opt_.note("order_property",
                          fmt::format("rule {}: {}<{}> runs in place on input already clustered by {}", g.rule,
                                      g.udf, g.aggregate_over, list(g.keys)));
            }
            return group_op(g, OpKind::preclustered_group_by, AggPhase::complete, s, one, s.props.partitions);
        }
        const bool early = opt_.cfg_.combiner_enabled && opt_.commutative_.count(g.udf);
        const bool merge = opt_.cfg_.connector_choice == ConnectorChoice::hash_merge;
        if (early || merge) {
            if (!detail::sorted_on(s.props, g.keys)) s = sort(s, one, g.keys, g.rule);
        }
        if (early) {
            s = group_op(g, OpKind::preclustered_group_by, AggPhase::partial, s, one, s.props.partitions);
            opt_.note("early_grouping", fmt::format("rule {}: {}<{}> split into partial and final phases around the "
                                                    "exchange",
                                                    g.rule, g.udf, g.aggregate_over));
        }
        const AggPhase last = early ? AggPhase::final : AggPhase::complete;
        if (merge) {
            opt_.note("connector_selection", fmt::format("rule {}: m_to_n_hash_merge on {}", g.rule, list(g.keys)));
            opt_.note("order_property",
                      fmt::format("rule {}: merged exchange keeps {} sorted for the receiving group-by", g.rule,
                                  list(g.keys)));
            return group_op(g, OpKind::preclustered_group_by, last, s,
                            conn(ConnectorKind::m_to_n_hash_merge, g.keys, g.keys), parts_);
        }
        opt_.note("connector_selection", fmt::format("rule {}: m_to_n_hash on {} then sort", g.rule, list(g.keys)));
        s = sort(s, conn(ConnectorKind::m_to_n_hash, g.keys), g.keys, g.rule);
        return group_op(g, OpKind::preclustered_group_by, last, s, one, parts_);
    }

    Stream lower_group_all(const LogicalOperator& g) {
        Stream s = get(g.inputs[0]);
        const Connector one = conn(ConnectorKind::one_to_one);
        if (s.props.partitions == 1) return group_op(g, OpKind::group_all, AggPhase::complete, s, one, 1);
        const bool early = opt_.cfg_.combiner_enabled && opt_.commutative_.count(g.udf);
        if (!early) return group_op(g, OpKind::group_all, AggPhase::complete, s, conn(ConnectorKind::aggregate_to_one), 1);
        std::vector<int> layers;
        const int senders = s.props.partitions;
        if (opt_.cfg_.agg_tree == AggTree::sqrt_layer) {
            const int l = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(senders))));
            if (l > 1 && l < senders) layers.push_back(l);
        } else if (opt_.cfg_.agg_tree == AggTree::fanin) {
            for (int c = senders; c > opt_.cfg_.fanin;) {
                c = (c + opt_.cfg_.fanin - 1) / opt_.cfg_.fanin;
                layers.push_back(c);
            }
        }
        s = group_op(g, OpKind::group_all, AggPhase::partial, s, one, senders);
        std::vector<std::string> shape{std::to_string(senders)};
        for (int l : layers) {
            s = group_op(g, OpKind::group_all, AggPhase::intermediate, s, conn(ConnectorKind::fan_in), l);
            shape.push_back(std::to_string(l));
        }
        shape.push_back("1");
        opt_.note("early_grouping",
                  fmt::format("rule {}: {}<{}> pre-aggregated in every partition", g.rule, g.udf, g.aggregate_over));
        opt_.note("aggregation_tree", fmt::format("rule {}: {}<{}> combined over {} partitions", g.rule, g.udf,
                                                  g.aggregate_over, fmt::join(shape, " -> ")));
        return group_op(g, OpKind::group_all, AggPhase::final, s, conn(ConnectorKind::aggregate_to_one), 1);
    }

    Optimizer& opt_;
    const Work& w_;
    bool init_;
    const StoreMap& stored_;
    int parts_;
    Dataflow out_;
    std::map<int, Stream> memo_;
    std::map<int, IndexJoin> joins_;
    std::map<int, Requirement> hoisted_;
    std::map<std::string, int> write_parts_;
};

// ---------------------------------------------------------------------------
// cleanup and numbering

bool accepts_input_map(OpKind k) {
    return k == OpKind::sort || k == OpKind::dataset_write || k == OpKind::btree_update ||
           k == OpKind::btree_bulk_load;
}

// Moves projections into the input maps of the operators consuming them.
void fold_projections(Dataflow& df, std::vector<bool>& dead) {
    for (auto& x : df.ops) {
        if (x.kind != OpKind::projection_fn || x.inputs.size() != 1) continue;
        const auto cs = df.consumers(x.id);
        if (cs.empty()) continue;
        bool ok = true;
        for (int c : cs) {
            const auto& co = df.op(c);
            ok = ok && accepts_input_map(co.kind) && co.input_map.empty();
            for (const auto& in : co.inputs)
                if (in.op == x.id) ok = ok && !in.side && in.connector.kind == ConnectorKind::one_to_one;
        }
        if (!ok) continue;
        for (int c : cs) {
            auto& co = df.op(c);
            co.input_map = x.items;
            for (auto& in : co.inputs)
                if (in.op == x.id) in = x.inputs[0];
        }
        dead[static_cast<std::size_t>(x.id)] = true;
    }
}

// Renumbers depth-first from the sinks, inputs before consumers.
Dataflow renumber(const Dataflow& df, const std::vector<bool>& dead) {
    std::vector<int> roots;
    for (const auto& o : df.ops)
        if (!dead[static_cast<std::size_t>(o.id)] && (o.is_sink() || df.consumers(o.id).empty())) roots.push_back(o.id);
    std::stable_sort(roots.begin(), roots.end(), [&](int a, int b) {
        const auto& x = df.op(a);
        const auto& y = df.op(b);
        if (x.rule != y.rule) return logical::natural_less(x.rule, y.rule);
        return x.label() < y.label();
    });
    std::vector<int> order;
    std::vector<bool> seen(df.ops.size(), false);
    std::function<void(int)> visit = [&](int id) {
        if (seen[static_cast<std::size_t>(id)]) return;
        seen[static_cast<std::size_t>(id)] = true;
        for (const auto& in : df.op(id).inputs) visit(in.op);
        order.push_back(id);
    };
    for (int r : roots) visit(r);
    std::map<int, int> remap;
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<int>(i);
    Dataflow out;
    for (int old : order) {
        PhysicalOperator o = df.op(old);
        o.id = remap.at(old);
        for (auto& in : o.inputs) in.op = remap.at(in.op);
        std::vector<int> after;
        for (int a : o.after)
            if (remap.count(a)) after.push_back(remap.at(a));
        o.after = std::move(after);
        out.ops.push_back(std::move(o));
    }
    return out;
}

Dataflow finish(Dataflow df) {
    std::vector<bool> dead(df.ops.size(), false);
    fold_projections(df, dead);
    for (auto& r : df.ops) {
        if (r.kind != OpKind::dataset_read) continue;
        for (const auto& w : df.ops)
            if (w.kind == OpKind::dataset_write && !dead[static_cast<std::size_t>(w.id)] && w.dataset == r.dataset)
                r.after.push_back(w.id);
    }
    return renumber(df, dead);
}

Dataflow Optimizer::lower(const Work& w, bool init, const StoreMap& stored) {
    return finish(Lowering(*this, w, init, stored).run());
}

PhysicalPlan Optimizer::run() {
    cfg_.check();
    select_storage();
    share_scans(init_, true);
    share_scans(step_, false);
    clean_projections(init_);
    clean_projections(step_);

    PhysicalPlan pp;
    pp.config = cfg_;
    pp.halt = lp_.halt;
    pp.recursive_datasets = lp_.recursive_datasets;
    pp.storage = storage_;

    std::vector<AppliedRule> init_rules, step_rules;
    rules_ = &init_rules;
    pp.init = lower(init_, true, {});
    const StoreMap base = detail::written(pp.init, detail::derive(pp.init, {}));
    StoreMap cur = base;
    for (int round = 0; round < 8; ++round) {
        step_rules.clear();
        rules_ = &step_rules;
        pp.step = lower(step_, false, cur);
        StoreMap next = detail::merge_store(base, detail::written(pp.step, detail::derive(pp.step, cur)));
        if (next == cur) break;
        cur = std::move(next);
    }

    pp.metrics_taps = metrics_taps(pp.step);

    static const std::vector<std::string> order{"storage_selection", "shared_scan",   "early_grouping",
                                                "join_selection",    "order_property", "aggregation_tree",
                                                "connector_selection"};
    for (const auto* src : {&logical_rules_, &init_rules, &step_rules})
        for (const auto& r : *src) {
            bool dup = false;
            for (const auto& q : pp.rules) dup = dup || (q.name == r.name && q.detail == r.detail);
            if (!dup) pp.rules.push_back(r);
        }
    std::stable_sort(pp.rules.begin(), pp.rules.end(), [&](const AppliedRule& a, const AppliedRule& b) {
        return index_of(order, a.name) < index_of(order, b.name);
    });
    return pp;
}

}  // namespace

PhysicalPlan optimize(const logical::LogicalPlan& lp, const ClusterConfig& cfg,
                      const std::vector<std::string>& commutative) {
    return Optimizer(lp, cfg, commutative).run();
}

PhysicalPlan optimize(const logical::LogicalPlan& lp, const ClusterConfig& cfg, const datalog::Program& p) {
    std::vector<std::string> commutative;
    for (const auto& u : p.udf_decls)
        if (u.is_aggregate && u.is_commutative_associative) commutative.push_back(u.name);
    return optimize(lp, cfg, commutative);
}

}  // namespace dlflow::physical
