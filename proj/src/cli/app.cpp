#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "dlflow/cli/app.hpp"
#include "dlflow/cli/ingest.hpp"
#include "dlflow/cli/run.hpp"
#include "dlflow/datalog/analysis.hpp"
#include "dlflow/datalog/parser.hpp"
#include "dlflow/logical/plan.hpp"
#include "dlflow/strat/strat.hpp"
#include "dlflow/tasks/registry.hpp"

namespace dlflow::cli {

namespace {

using nlohmann::ordered_json;

const std::map<std::string, physical::ConnectorChoice> connector_names{
    {"merge", physical::ConnectorChoice::hash_merge}, {"hash-sort", physical::ConnectorChoice::hash_then_sort}};

struct ClusterFlags {
    std::string connector = "merge";
    std::string agg_tree = "sqrt";
    std::string combiner = "on";

    void add(CLI::App& sub, physical::ClusterConfig& c, bool with_workers) {
        if (with_workers) sub.add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
        sub.add_option("--partitions-per-worker", c.partitions_per_worker, "partitions per worker")
            ->check(CLI::PositiveNumber);
        sub.add_option("--connector", connector, "merge or hash-sort")->check(CLI::IsMember({"merge", "hash-sort"}));
        sub.add_option("--agg-tree", agg_tree, "flat, sqrt or fanin:k");
        sub.add_option("--combiner", combiner, "on or off")->check(CLI::IsMember({"on", "off"}));
    }

    void apply(physical::ClusterConfig& c) const {
        c.connector_choice = connector_names.at(connector);
        physical::parse_agg_tree(agg_tree, c);
        c.combiner_enabled = combiner == "on";
        c.check();
    }
};

void add_run_flags(CLI::App& sub, RunSpec& s) {
    sub.add_option("task", s.task, "pagerank or bgd-logistic")->required();
    sub.add_option("--input", s.inputs, "input data file")->required();
    sub.add_option("--max-iters", s.limits.max_iters, "step iteration limit");
    sub.add_option("--tolerance", s.limits.float_tolerance, "vector equality tolerance in selections");
    sub.add_flag("--deterministic,!--fast", s.deterministic, "exact, order independent sums (default)");
    sub.add_option("--supersteps", s.supersteps, "pagerank supersteps");
    sub.add_option("--dim", s.dim, "bgd model dimension (default: from data)");
    sub.add_option("--lambda", s.lambda, "bgd L2 weight");
    sub.add_option("--eta", s.eta, "bgd step size");
    sub.add_option("--tol", s.tol, "bgd convergence tolerance");
    sub.add_option("--task-iters", s.task_iters, "bgd updates before the model is kept");
}

datalog::Program load_program(const std::string& target) {
    for (const auto& t : tasks::task_list())
        if (t.name == target || t.template_name == target) return tasks::task_program(t);
    std::ifstream in(target);
    if (!in) throw std::invalid_argument("'" + target + "' is neither a task nor a readable program file");
    std::stringstream ss;
    ss << in.rdbuf();
    return datalog::parse_program(ss.str());
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

}  // namespace

int run_app(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Datalog-planned iterative dataflows"};
    app.require_subcommand(1);

    int partitions = 1;
    std::string path, dump;
    auto* ig = app.add_subcommand("ingest-graph", "check an adjacency file and report its partitions");
    ig->add_option("path", path)->required();
    ig->add_option("--partitions", partitions)->check(CLI::PositiveNumber);
    ig->add_option("--dump", dump, "write partition<TAB>tuple lines here");
    auto* ip = app.add_subcommand("ingest-points", "check a sparse point file and report its partitions");
    ip->add_option("path", path)->required();
    ip->add_option("--partitions", partitions)->check(CLI::PositiveNumber);
    ip->add_option("--dump", dump, "write partition<TAB>tuple lines here");

    std::string target;
    physical::ClusterConfig plan_cluster;
    ClusterFlags plan_flags;
    auto* pl = app.add_subcommand("plan", "print a program's plans or stratification verdict");
    auto* mode = pl->add_option_group("mode");
    bool logical = false, physical_plan = false, check = false;
    mode->add_flag("--logical", logical);
    mode->add_flag("--physical", physical_plan);
    mode->add_flag("--check-strat", check);
    mode->require_option(1);
    pl->add_option("target", target, "task name, template name or .dl file")->required();
    plan_flags.add(*pl, plan_cluster, true);

    RunSpec run_spec;
    ClusterFlags run_flags;
    auto* rn = app.add_subcommand("run", "run a task");
    add_run_flags(*rn, run_spec);
    run_flags.add(*rn, run_spec.cluster, true);
    rn->add_option("--out", run_spec.out_dir, "output directory");

    BenchSpec bench_spec;
    ClusterFlags bench_flags;
    std::string workers_list = "1", connectors_list = "merge", trees_list = "sqrt", combiner_list = "on",
                format = "jsonl";
    auto* bn = app.add_subcommand("bench", "run a task over a configuration matrix");
    add_run_flags(*bn, bench_spec.base);
    bench_flags.add(*bn, bench_spec.base.cluster, false);
    bn->add_option("--workers", workers_list, "comma separated worker counts");
    bn->add_option("--connectors", connectors_list, "comma separated: merge, hash-sort");
    bn->add_option("--agg-trees", trees_list, "comma separated: flat, sqrt, fanin:k");
    bn->add_option("--combiners", combiner_list, "comma separated: on, off");
    bn->add_option("--repeat", bench_spec.repeat, "runs per configuration")->check(CLI::PositiveNumber);
    bn->add_option("--format", format, "jsonl or table")->check(CLI::IsMember({"jsonl", "table"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (ig->parsed() || ip->parsed()) {
            const auto ds = ig->parsed() ? ingest_graph(path, partitions) : ingest_points(path, partitions);
            ordered_json j;
            j["tuples"] = ds.size();
            if (ig->parsed()) {
                const auto g = read_graph(path);
                std::size_t edges = 0, dangling = 0;
                for (const auto& d : g) {
                    edges += d.size();
                    dangling += d.empty() ? 1 : 0;
                }
                j["vertices"] = g.size();
                j["edges"] = edges;
                j["dangling"] = dangling;
            } else {
                std::size_t dim = 0, nnz = 0;
                for (const auto& p : read_points(path, &dim)) nnz += p.idx.size();
                j["dim"] = dim;
                j["nonzeros"] = nnz;
            }
            j["partitions"] = ordered_json::array();
            for (const auto& p : ds.partitions) j["partitions"].push_back(p.size());
            out << j.dump() << "\n";
            if (!dump.empty()) {
                std::ofstream f(dump);
                if (!f) throw std::runtime_error("cannot write " + dump);
                for (std::size_t p = 0; p < ds.partitions.size(); ++p)
                    for (const auto& t : ds.partitions[p]) f << p << "\t" << tuple_to_string(t) << "\n";
            }
            return 0;
        }
        if (pl->parsed()) {
            plan_flags.apply(plan_cluster);
            auto p = load_program(target);
            datalog::annotate_temporal(p);
            const auto v = strat::check_xy(p);
            if (check) {
                out << strat::format_verdict(p, v);
                return v.stratified ? 0 : 1;
            }
            if (!v.stratified) {
                err << "error: " << v.reason << "\n";
                return 1;
            }
            const auto lp = logical::compile_logical(p, v);
            out << (logical ? logical::canonical_serialize(lp) : physical::format_plan(physical::optimize(lp, plan_cluster, p)));
            return 0;
        }
        if (rn->parsed()) {
            run_flags.apply(run_spec.cluster);
            const auto r = run_task(run_spec);
            out << r.summary.to_json() << "\n";
            return r.summary.halted ? 0 : 3;
        }
        if (bn->parsed()) {
            bench_flags.apply(bench_spec.base.cluster);
            bench_spec.workers.clear();
            for (const auto& w : split(workers_list)) bench_spec.workers.push_back(std::stoi(w));
            bench_spec.connectors.clear();
            for (const auto& c : split(connectors_list)) {
                auto it = connector_names.find(c);
                if (it == connector_names.end()) throw std::invalid_argument("unknown connector '" + c + "'");
                bench_spec.connectors.push_back(it->second);
            }
            bench_spec.agg_trees = split(trees_list);
            bench_spec.combiner.clear();
            for (const auto& c : split(combiner_list)) {
                if (c != "on" && c != "off") throw std::invalid_argument("combiner must be on or off, got '" + c + "'");
                bench_spec.combiner.push_back(c == "on");
            }
            const auto rows = bench(bench_spec);
            if (format == "table") out << format_bench_table(rows);
            else
                for (const auto& r : rows) out << r.to_json() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace dlflow::cli
