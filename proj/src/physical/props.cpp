#include "props.hpp"

#include <algorithm>
#include <map>

namespace dlflow::physical::detail {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

int index_of(const std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

}  // namespace

bool clustered_by(const Props& p, const std::vector<std::string>& keys) {
    if (p.partitions == 1) return true;
    if (p.hash_keys.empty()) return false;
    return std::all_of(p.hash_keys.begin(), p.hash_keys.end(), [&](const std::string& k) { return contains(keys, k); });
}

bool sorted_on(const Props& p, const std::vector<std::string>& keys) {
    if (p.sorted_by.size() < keys.size()) return false;
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (!contains(keys, p.sorted_by[i])) return false;
    return true;
}

bool hashed_as(const Props& p, const std::vector<std::string>& keys, int partitions) {
    if (p.partitions != partitions) return false;
    return partitions == 1 || p.hash_keys == keys;
}

Props map_through(const Props& p, const std::vector<logical::ProjectionItem>& items) {
    // Column items rename; the first output naming a source wins.
    std::map<std::string, std::string> renamed;
    for (const auto& it : items)
        if (it.kind == logical::ProjectionItem::Kind::column && !renamed.count(it.source))
            renamed[it.source] = it.names[0];
    Props out;
    out.partitions = p.partitions;
    bool all = !p.hash_keys.empty();
    for (const auto& k : p.hash_keys) {
        auto r = renamed.find(k);
        if (r == renamed.end()) {
            all = false;
            break;
        }
        out.hash_keys.push_back(r->second);
    }
    if (!all) out.hash_keys.clear();
    for (const auto& k : p.sorted_by) {
        auto r = renamed.find(k);
        if (r == renamed.end()) break;
        out.sorted_by.push_back(r->second);
    }
    return out;
}

Props across(const Props& sender, const Connector& c, int receivers) {
    Props out;
    out.partitions = receivers;
    switch (c.kind) {
        case ConnectorKind::one_to_one:
        case ConnectorKind::none: return sender;
        case ConnectorKind::m_to_n_hash: out.hash_keys = c.keys; break;
        case ConnectorKind::m_to_n_hash_merge:
            out.hash_keys = c.keys;
            if (sorted_on(sender, c.sort_keys)) out.sorted_by = c.sort_keys;
            break;
        case ConnectorKind::aggregate_to_one:
        case ConnectorKind::broadcast:
        case ConnectorKind::fan_in: break;
    }
    if (receivers == 1 && sender.partitions == 1) out.sorted_by = sender.sorted_by;
    return out;
}

StoredProps to_stored(const Props& p, const std::vector<std::string>& schema) {
    StoredProps s;
    s.partitions = p.partitions;
    s.hash_known = p.partitions == 1 || !p.hash_keys.empty();
    for (const auto& k : p.hash_keys) {
        int i = index_of(schema, k);
        if (i < 0) {
            s.hash_positions.clear();
            s.hash_known = p.partitions == 1;
            break;
        }
        s.hash_positions.push_back(i);
    }
    for (const auto& k : p.sorted_by) {
        int i = index_of(schema, k);
        if (i < 0) break;
        s.sorted_positions.push_back(i);
    }
    return s;
}

Props from_stored(const StoredProps& s, const std::vector<std::string>& schema) {
    Props p;
    p.partitions = s.partitions;
    for (int i : s.hash_positions) {
        if (i >= static_cast<int>(schema.size())) {
            p.hash_keys.clear();
            break;
        }
        p.hash_keys.push_back(schema[static_cast<std::size_t>(i)]);
    }
    for (int i : s.sorted_positions) {
        if (i >= static_cast<int>(schema.size())) break;
        p.sorted_by.push_back(schema[static_cast<std::size_t>(i)]);
    }
    return p;
}

StoredProps meet(const StoredProps& a, const StoredProps& b) {
    StoredProps out;
    out.partitions = a.partitions;
    if (a.partitions != b.partitions) return out;
    if (a.hash_known && b.hash_known && a.hash_positions == b.hash_positions) {
        out.hash_known = true;
        out.hash_positions = a.hash_positions;
    }
    for (std::size_t i = 0; i < std::min(a.sorted_positions.size(), b.sorted_positions.size()); ++i) {
        if (a.sorted_positions[i] != b.sorted_positions[i]) break;
        out.sorted_positions.push_back(a.sorted_positions[i]);
    }
    return out;
}

bool operator==(const StoredProps& a, const StoredProps& b) {
    return a.partitions == b.partitions && a.hash_known == b.hash_known && a.hash_positions == b.hash_positions &&
           a.sorted_positions == b.sorted_positions;
}

std::vector<Props> derive(const Dataflow& df, const StoreMap& stored) {
    std::vector<Props> props(df.ops.size());
    auto main_input = [&](const PhysicalOperator& o) -> const PhysInput* {
        for (const auto& in : o.inputs)
            if (!in.side) return &in;
        return nullptr;
    };
    for (int id : df.topological_order()) {
        const auto& o = df.op(id);
        Props in;
        in.partitions = o.partitions;
        if (const PhysInput* m = main_input(o)) {
            in = across(props[static_cast<std::size_t>(m->op)], m->connector, o.partitions);
            if (!o.input_map.empty()) in = map_through(in, o.input_map);
        }
        Props out = in;
        out.partitions = o.partitions;
        switch (o.kind) {
            case OpKind::file_scan:
                out = Props{o.partitions, {}, {}};
                break;
            case OpKind::dataset_read: {
                out = Props{o.partitions, {}, {}};
                if (o.dataset.version == logical::DatasetRef::Version::history) break;
                auto s = stored.find(o.dataset.name);
                if (s != stored.end() && s->second.partitions == o.partitions) out = from_stored(s->second, o.schema);
                break;
            }
            case OpKind::sort:
                out.sorted_by = o.keys;
                break;
            case OpKind::projection_fn:
                out = map_through(in, o.items);
                break;
            case OpKind::preclustered_group_by:
                if (!clustered_by(in, o.keys) || o.partitions != in.partitions) out.hash_keys.clear();
                out.sorted_by = o.keys;
                break;
            case OpKind::group_all:
                out = Props{o.partitions, {}, {}};
                break;
            case OpKind::hash_join:
            case OpKind::btree_index_join:
                // Output streams probe-side order with appended columns.
                break;
            default:
                break;
        }
        props[static_cast<std::size_t>(id)] = out;
    }
    return props;
}

StoreMap written(const Dataflow& df, const std::vector<Props>& props) {
    StoreMap out;
    for (const auto& o : df.ops) {
        if (o.kind != OpKind::dataset_write) continue;
        StoredProps s = to_stored(props[static_cast<std::size_t>(o.id)], o.schema);
        auto it = out.find(o.dataset.name);
        if (it == out.end())
            out.emplace(o.dataset.name, s);
        else
            it->second = meet(it->second, s);
    }
    return out;
}

StoreMap merge_store(const StoreMap& base, const StoreMap& more) {
    StoreMap out = base;
    for (const auto& [name, s] : more) {
        auto it = out.find(name);
        if (it == out.end())
            out.emplace(name, s);
        else
            it->second = meet(it->second, s);
    }
    return out;
}

StoreMap plan_store(const PhysicalPlan& pp) {
    const StoreMap init = written(pp.init, derive(pp.init, {}));
    StoreMap cur = init;
    for (int round = 0; round < 8; ++round) {
        StoreMap next = merge_store(init, written(pp.step, derive(pp.step, cur)));
        if (next == cur) break;
        cur = std::move(next);
    }
    return cur;
}

}  // namespace dlflow::physical::detail
