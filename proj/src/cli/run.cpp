#include <chrono>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "dlflow/cli/ingest.hpp"
#include "dlflow/cli/run.hpp"
#include "dlflow/tasks/bgd.hpp"
#include "dlflow/tasks/pagerank.hpp"
#include "dlflow/tasks/registry.hpp"

namespace dlflow::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void RunSpec::check() const {
    tasks::find_task(task);
    if (inputs.size() != 1) throw std::invalid_argument(fmt::format("{} takes exactly one input file", task));
    for (const auto& p : inputs)
        if (!fs::exists(p)) throw std::invalid_argument("input file '" + p + "' does not exist");
    cluster.check();
    if (limits.max_iters < 1) throw std::invalid_argument("max-iters must be at least 1");
    if (limits.float_tolerance < 0) throw std::invalid_argument("tolerance must not be negative");
}

std::string RunSummary::to_json() const {
    ordered_json j{{"task", task},
                   {"iterations", iterations},
                   {"halted", halted},
                   {"total_wall_ms", total_wall_ms},
                   {"avg_iter_ms", avg_iter_ms},
                   {"workers", workers},
                   {"worker_seconds", worker_seconds},
                   {"shuffled_tuples", shuffled_tuples},
                   {"shuffled_bytes", shuffled_bytes}};
    return j.dump();
}

namespace {

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

void add_shuffle(const runtime::IterationMetrics& m, RunSummary& s) {
    for (const auto& [label, c] : m.connectors) {
        s.shuffled_tuples += c.tuples;
        s.shuffled_bytes += c.bytes;
    }
}

}  // namespace

RunOutput run_task(const RunSpec& spec) {
    spec.check();
    const auto& info = tasks::find_task(spec.task);
    const auto pp = tasks::plan_program(tasks::task_program(info), spec.cluster);
    const int parts = spec.cluster.partitions();

    runtime::Catalog cat;
    runtime::UdfRegistry udfs;
    std::int64_t vertices = 0;
    if (info.name == "pagerank") {
        const auto g = read_graph(spec.inputs[0]);
        vertices = static_cast<std::int64_t>(g.size());
        tasks::PageRankConfig c;
        c.vertices = vertices;
        c.supersteps = spec.supersteps;
        c.deterministic = spec.deterministic;
        udfs = tasks::pagerank_udfs(c);
        cat.emplace("data", tasks::pagerank_input(g, parts));
    } else {
        std::size_t dim = 0;
        const auto pts = read_points(spec.inputs[0], &dim);
        if (spec.dim != 0 && spec.dim < dim)
            throw std::invalid_argument(fmt::format("data has index {} beyond dimension {}", dim - 1, spec.dim));
        tasks::BgdConfig c;
        c.dim = spec.dim != 0 ? spec.dim : std::max<std::size_t>(dim, 1);
        c.lambda = spec.lambda;
        c.eta = spec.eta;
        c.tol = spec.tol;
        c.max_iters = spec.task_iters;
        c.deterministic = spec.deterministic;
        udfs = tasks::bgd_udfs(c);
        cat.emplace("training_data", tasks::bgd_input(pts, parts));
    }

    runtime::ExecOptions opts;
    opts.limits = spec.limits;
    const auto t0 = std::chrono::steady_clock::now();
    RunOutput out{{}, runtime::execute(pp, cat, udfs, opts)};
    const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    auto& s = out.summary;
    const auto& r = out.result;
    s.task = info.name;
    s.iterations = r.iterations_executed;
    s.halted = r.halted;
    s.total_wall_ms = wall;
    for (const auto& m : r.iterations) s.avg_iter_ms += m.wall_ms;
    if (!r.iterations.empty()) s.avg_iter_ms /= static_cast<double>(r.iterations.size());
    s.workers = spec.cluster.workers;
    s.worker_seconds = spec.cluster.workers * wall / 1000.0;
    add_shuffle(r.init_metrics, s);
    for (const auto& m : r.iterations) add_shuffle(m, s);

    if (!spec.out_dir.empty()) {
        const fs::path dir(spec.out_dir);
        fs::create_directories(dir);
        std::string text;
        if (info.name == "pagerank") {
            const auto ranks = tasks::ranks_from(r.datasets.at("vertex"), vertices);
            for (std::size_t v = 0; v < ranks.size(); ++v) text += fmt::format("{} {:.17g}\n", v, ranks[v]);
            write_file(dir / "ranks.txt", text);
        } else {
            for (double w : tasks::model_from(r.datasets.at("model"))) text += fmt::format("{:.17g}\n", w);
            write_file(dir / "model.txt", text);
        }
        write_file(dir / "metrics.jsonl", r.metrics_jsonl());
        write_file(dir / "summary.json", s.to_json() + "\n");
    }
    return out;
}

std::string BenchRow::to_json() const {
    auto j = ordered_json::parse(summary.to_json());
    j["partitions"] = cluster.partitions();
    j["connector"] = cluster.connector_choice == physical::ConnectorChoice::hash_merge ? "merge" : "hash-sort";
    j["agg_tree"] = cluster.agg_tree == physical::AggTree::flat         ? "flat"
                    : cluster.agg_tree == physical::AggTree::sqrt_layer ? "sqrt"
                                                                        : fmt::format("fanin:{}", cluster.fanin);
    j["combiner"] = cluster.combiner_enabled;
    return j.dump();
}

std::vector<BenchRow> bench(const BenchSpec& spec) {
    if (spec.repeat < 1) throw std::invalid_argument("repeat must be at least 1");
    std::vector<BenchRow> rows;
    for (int w : spec.workers)
        for (auto conn : spec.connectors)
            for (const auto& tree : spec.agg_trees)
                for (bool comb : spec.combiner) {
                    RunSpec rs = spec.base;
                    rs.out_dir.clear();
                    rs.cluster.workers = w;
                    rs.cluster.connector_choice = conn;
                    physical::parse_agg_tree(tree, rs.cluster);
                    rs.cluster.combiner_enabled = comb;
                    BenchRow row{rs.cluster, {}};
                    for (int k = 0; k < spec.repeat; ++k) {
                        auto s = run_task(rs).summary;
                        if (k == 0 || s.avg_iter_ms < row.summary.avg_iter_ms) row.summary = s;
                    }
                    rows.push_back(row);
                }
    return rows;
}

std::string format_bench_table(const std::vector<BenchRow>& rows) {
    std::string out = fmt::format("{:>7} {:>10} {:>9} {:>8} {:>8} {:>5} {:>12} {:>14} {:>15} {:>14}\n", "workers",
                                  "partitions", "connector", "agg_tree", "combiner", "iters", "avg_iter_ms",
                                  "worker_seconds", "shuffled_tuples", "shuffled_bytes");
    for (const auto& r : rows) {
        const auto j = nlohmann::json::parse(r.to_json());
        out += fmt::format("{:>7} {:>10} {:>9} {:>8} {:>8} {:>5} {:>12.3f} {:>14.4f} {:>15} {:>14}\n", r.cluster.workers,
                           r.cluster.partitions(), j["connector"].get<std::string>(),
                           j["agg_tree"].get<std::string>(), r.cluster.combiner_enabled ? "on" : "off",
                           r.summary.iterations, r.summary.avg_iter_ms, r.summary.worker_seconds,
                           r.summary.shuffled_tuples, r.summary.shuffled_bytes);
    }
    return out;
}

}  // namespace dlflow::cli
