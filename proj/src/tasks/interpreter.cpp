#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/runtime/operators.hpp"
#include "dlflow/strat/strat.hpp"
#include "dlflow/tasks/interpreter.hpp"

namespace dlflow::tasks {

using datalog::Atom;
using datalog::AtomRole;
using datalog::Program;
using datalog::Rule;
using datalog::Term;

namespace {

using Index = std::unordered_map<Tuple, std::vector<const Tuple*>, TupleHash>;

// Relations with an insertion log so lookup indexes grow incrementally
// instead of being rebuilt for every rule firing.
class Store {
public:
    bool insert(const std::string& name, Tuple t) {
        auto& r = rels_[name];
        auto [it, fresh] = r.rows.insert(std::move(t));
        if (fresh) r.log.push_back(&*it);
        return fresh;
    }

    void clear(const std::string& name) { rels_[name] = {}; }

    // Facts of `name` with the given arity, keyed on the values at `keys`.
    const Index& index(const std::string& name, const std::vector<std::size_t>& keys, std::size_t arity) {
        auto& r = rels_[name];
        auto& [done, idx] = r.indexes[{keys, arity}];
        for (; done < r.log.size(); ++done) {
            const Tuple& f = *r.log[done];
            if (f.size() != arity) continue;
            Tuple k;
            for (auto i : keys) k.push_back(f[i]);
            idx[std::move(k)].push_back(&f);
        }
        return idx;
    }

    std::map<std::string, std::set<Tuple>> take() {
        std::map<std::string, std::set<Tuple>> out;
        for (auto& [name, r] : rels_) out.emplace(name, std::move(r.rows));
        return out;
    }

private:
    struct Relation {
        std::set<Tuple> rows;
        std::vector<const Tuple*> log;
        std::map<std::pair<std::vector<std::size_t>, std::size_t>, std::pair<std::size_t, Index>> indexes;
    };
    std::map<std::string, Relation> rels_;
};

struct Env {
    std::vector<Value> v;
    std::vector<char> bound;
};

class RuleEval {
public:
    RuleEval(const Program& p, const Rule& r, const runtime::UdfRegistry& udfs, double tol, Store& store)
        : p_(p), r_(r), udfs_(udfs), tol_(tol), store_(store) {
        std::vector<std::string> names;
        r.head.args.size();
        for (const auto& t : r.head.args) t.collect_variables(names);
        if (r.aggregate.present) r.aggregate.over.collect_variables(names);
        for (const auto& a : r.body)
            for (const auto& t : a.args) t.collect_variables(names);
        for (const auto& n : names) var_.emplace(n, static_cast<int>(var_.size()));
    }

    std::vector<Tuple> fire(std::int64_t j) {
        Env init;
        init.v.resize(var_.size());
        init.bound.assign(var_.size(), 0);
        std::set<int> bound;
        const auto& tmp = r_.temporal;
        if (tmp && !tmp->head_untimed && !tmp->constant_state && var_.count(tmp->var)) {
            const int i = var_.at(tmp->var);
            init.v[static_cast<std::size_t>(i)] = Value(j);
            init.bound[static_cast<std::size_t>(i)] = 1;
            bound.insert(i);
        }
        std::vector<Env> envs{init};
        for (const Atom* a : plan(bound)) {
            envs = apply(*a, envs);
            if (envs.empty()) break;
        }
        return head(envs);
    }

private:
    int idx(const std::string& n) const { return var_.at(n); }

    std::set<int> vars_of(const Term& t) const {
        std::vector<std::string> names;
        t.collect_variables(names);
        std::set<int> out;
        for (const auto& n : names) out.insert(idx(n));
        return out;
    }

    bool all_bound(const std::vector<Term>& ts, const std::set<int>& bound) const {
        for (const auto& t : ts)
            for (int v : vars_of(t))
                if (!bound.count(v)) return false;
        return true;
    }

    std::size_t input_arity(const Atom& a) const {
        const auto* u = p_.find_udf(a.predicate);
        if (!u) throw std::invalid_argument("no declaration for function " + a.predicate);
        return u->input_arity;
    }

    // Body order: ready filters first, then ready functions, then relational
    // atoms in source order; negation once its variables are bound.
    std::vector<const Atom*> plan(std::set<int> bound) {
        std::vector<const Atom*> rest, out;
        for (const auto& a : r_.body) rest.push_back(&a);
        while (!rest.empty()) {
            auto pick = rest.end();
            for (auto it = rest.begin(); it != rest.end() && pick == rest.end(); ++it)
                if ((*it)->role == AtomRole::comparison && all_bound((*it)->args, bound)) pick = it;
            for (auto it = rest.begin(); it != rest.end() && pick == rest.end(); ++it)
                if ((*it)->role == AtomRole::function) {
                    const auto n = input_arity(**it);
                    if (all_bound({(*it)->args.begin(), (*it)->args.begin() + static_cast<std::ptrdiff_t>(n)}, bound))
                        pick = it;
                }
            for (auto it = rest.begin(); it != rest.end() && pick == rest.end(); ++it)
                if ((*it)->role != AtomRole::function && (*it)->role != AtomRole::comparison && !(*it)->negated)
                    pick = it;
            for (auto it = rest.begin(); it != rest.end() && pick == rest.end(); ++it)
                if ((*it)->negated && all_bound((*it)->args, bound)) pick = it;
            if (pick == rest.end())
                throw std::invalid_argument(fmt::format("rule {}: body cannot be evaluated left to right", r_.label));
            for (const auto& t : (*pick)->args)
                for (int v : vars_of(t)) bound.insert(v);
            out.push_back(*pick);
            rest.erase(pick);
        }
        return out;
    }

    Value eval(const Term& t, const Env& e) const {
        switch (t.kind) {
            case Term::Kind::constant: return t.value;
            case Term::Kind::variable: {
                const auto i = static_cast<std::size_t>(idx(t.name));
                if (!e.bound[i]) throw std::logic_error("unbound variable " + t.name + " in rule " + r_.label);
                if (t.offset == 0) return e.v[i];
                return Value(e.v[i].as_int() + t.offset);
            }
            case Term::Kind::tuple_of: {
                ValueList l;
                for (const auto& it : t.items) l.push_back(eval(it, e));
                return Value(std::move(l));
            }
            default: throw std::logic_error("term cannot be evaluated in rule " + r_.label);
        }
    }

    void match(const Term& t, const Value& v, const Env& e, std::vector<Env>& out) const {
        switch (t.kind) {
            case Term::Kind::wildcard: out.push_back(e); return;
            case Term::Kind::constant:
                if (t.value == v) out.push_back(e);
                return;
            case Term::Kind::variable: {
                const auto i = static_cast<std::size_t>(idx(t.name));
                if (e.bound[i]) {
                    if (eval(t, e) == v) out.push_back(e);
                    return;
                }
                Env n = e;
                if (t.offset != 0) {
                    if (!v.is_int()) return;
                    n.v[i] = Value(v.as_int() - t.offset);
                } else {
                    n.v[i] = v;
                }
                n.bound[i] = 1;
                out.push_back(std::move(n));
                return;
            }
            case Term::Kind::tuple_of:
                if (!v.is_list() || v.as_list().size() != t.items.size()) return;
                match_args(t.items, v.as_list(), 0, e, out);
                return;
            case Term::Kind::set_of:
                if (!v.is_list()) return;
                for (const auto& x : v.as_list()) match(t.items.at(0), x, e, out);
                return;
        }
    }

    void match_args(const std::vector<Term>& ts, const std::vector<Value>& vs, std::size_t i, const Env& e,
                    std::vector<Env>& out) const {
        if (i == ts.size()) {
            out.push_back(e);
            return;
        }
        std::vector<Env> here;
        match(ts[i], vs[i], e, here);
        for (const auto& h : here) match_args(ts, vs, i + 1, h, out);
    }

    std::vector<Env> apply(const Atom& a, const std::vector<Env>& envs) {
        std::vector<Env> out;
        if (a.role == AtomRole::comparison) {
            for (const auto& e : envs)
                if (runtime::compare_values(a.predicate, eval(a.args.at(0), e), eval(a.args.at(1), e), udfs_, tol_))
                    out.push_back(e);
            return out;
        }
        if (a.role == AtomRole::function) {
            const auto n = input_arity(a);
            const std::vector<Term> outs(a.args.begin() + static_cast<std::ptrdiff_t>(n), a.args.end());
            const auto& fn = udfs_.function(a.predicate);
            for (const auto& e : envs) {
                Tuple in;
                for (std::size_t i = 0; i < n; ++i) in.push_back(eval(a.args[i], e));
                for (const auto& res : fn(in)) {
                    if (res.size() != outs.size())
                        throw runtime::UdfError(fmt::format("{} returned {} values, expected {}", a.predicate,
                                                            res.size(), outs.size()));
                    match_args(outs, res, 0, e, out);
                }
            }
            return out;
        }
        // Index on positions already bound for every environment.
        std::vector<std::size_t> keys;
        const Env& first = envs.front();
        for (std::size_t i = 0; i < a.args.size(); ++i) {
            const Term& t = a.args[i];
            if (t.kind == Term::Kind::constant ||
                (t.kind == Term::Kind::variable && first.bound[static_cast<std::size_t>(idx(t.name))]))
                keys.push_back(i);
        }
        const Index& index = store_.index(a.predicate, keys, a.args.size());
        for (const auto& e : envs) {
            Tuple k;
            for (auto i : keys) k.push_back(eval(a.args[i], e));
            auto it = index.find(k);
            if (a.negated) {
                bool any = false;
                if (it != index.end())
                    for (const Tuple* f : it->second) {
                        std::vector<Env> m;
                        match_args(a.args, *f, 0, e, m);
                        if (!m.empty()) {
                            any = true;
                            break;
                        }
                    }
                if (!any) out.push_back(e);
                continue;
            }
            if (it == index.end()) continue;
            for (const Tuple* f : it->second) match_args(a.args, *f, 0, e, out);
        }
        return out;
    }

    std::vector<Tuple> head(const std::vector<Env>& envs) const {
        std::vector<Tuple> out;
        const auto& h = r_.head;
        if (!r_.aggregate.present) {
            for (const auto& e : envs) {
                Tuple t;
                for (const auto& a : h.args) t.push_back(eval(a, e));
                out.push_back(std::move(t));
            }
            return out;
        }
        const auto& agg = udfs_.aggregate(r_.aggregate.name);
        const std::size_t pos = r_.aggregate.position;
        std::set<std::vector<Value>> seen;
        std::map<Tuple, Value> groups;
        for (const auto& e : envs) {
            if (!seen.insert(e.v).second) continue;
            Tuple key;
            for (std::size_t i = 0; i < h.args.size(); ++i)
                if (i != pos) key.push_back(eval(h.args[i], e));
            Value x = agg.lift(eval(r_.aggregate.over, e));
            auto it = groups.find(key);
            if (it == groups.end()) groups.emplace(std::move(key), std::move(x));
            else it->second = agg.merge(it->second, x);
        }
        for (auto& [key, state] : groups) {
            Tuple t = key;
            t.insert(t.begin() + static_cast<std::ptrdiff_t>(std::min(pos, t.size())), agg.finalize(state));
            out.push_back(std::move(t));
        }
        return out;
    }

    const Program& p_;
    const Rule& r_;
    const runtime::UdfRegistry& udfs_;
    double tol_;
    Store& store_;
    std::map<std::string, int> var_;
};

}  // namespace

Interpretation interpret_program(const Program& program, const std::map<std::string, std::vector<Tuple>>& edb,
                                 const runtime::UdfRegistry& udfs, const InterpretLimits& limits) {
    Program p = program;
    datalog::annotate_temporal(p);
    const strat::XYVerdict v = strat::check_xy(p);
    if (!v.stratified) throw strat::IllFormedProgram(v.reason);
    const datalog::ProgramInfo info = datalog::analyze_program(p);

    Interpretation res;
    Store store;
    for (const auto& [name, rows] : edb)
        for (const auto& t : rows) store.insert(name, t);

    auto fire = [&](std::size_t i, std::int64_t j) {
        const Rule& r = p.rules[i];
        RuleEval ev(p, r, udfs, limits.float_tolerance, store);
        auto derived = ev.fire(j);
        std::size_t added = 0;
        for (auto& t : derived) added += store.insert(r.head.predicate, std::move(t)) ? 1 : 0;
        return added;
    };

    for (std::size_t i : v.schedule.init) fire(i, 0);
    if (v.schedule.step.empty()) {
        res.facts = store.take();
        return res;
    }

    std::set<std::string> views;
    for (std::size_t i : v.schedule.step)
        if (info.is_view(p.rules[i].head.predicate)) views.insert(p.rules[i].head.predicate);

    for (std::int64_t j = 0;; ++j) {
        if (j >= limits.max_iters)
            throw LimitExceeded(fmt::format("no fixpoint after {} iterations", limits.max_iters));
        for (const auto& name : views) store.clear(name);
        std::size_t added = 0;
        for (std::size_t i : v.schedule.step) {
            const std::size_t n = fire(i, j);
            if (!views.count(p.rules[i].head.predicate)) added += n;
        }
        ++res.iterations;
        if (added == 0) break;
    }
    res.facts = store.take();
    return res;
}

}  // namespace dlflow::tasks
