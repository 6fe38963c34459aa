#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <fmt/format.h>
#include <mpfr.h>

#include "dlflow/exact_sum.hpp"
#include "dlflow/tasks/bgd.hpp"

namespace dlflow::tasks {

namespace {

double dot(const std::vector<double>& w, const SparsePoint& p) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.idx.size(); ++k) {
        const auto i = p.idx[k];
        if (i < 0 || static_cast<std::size_t>(i) >= w.size())
            throw std::invalid_argument(fmt::format("feature index {} outside model dimension {}", i, w.size()));
        s += w[static_cast<std::size_t>(i)] * p.val[k];
    }
    return s;
}

// log(1 + exp(-z)) without overflow for large |z|.
double softplus_neg(double z) { return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

// Statistic of one record: Vector[loss, gradient...].
DenseVector statistic(const DenseVector& w, const SparsePoint& p) {
    const double z = p.y * dot(w, p);
    DenseVector s(w.size() + 1, 0.0);
    s[0] = softplus_neg(z);
    const double coef = -p.y / (1.0 + std::exp(z));
    for (std::size_t k = 0; k < p.idx.size(); ++k) s[static_cast<std::size_t>(p.idx[k]) + 1] = coef * p.val[k];
    return s;
}

DenseVector step(const DenseVector& w, const DenseVector& g, const BgdConfig& cfg) {
    DenseVector out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - cfg.eta * (cfg.lambda * w[i] + g[i]);
    return out;
}

// Exact reduce state: one list of partials per statistic component.
struct Reduce {
    bool exact;

    Value lift(const Value& s) const {
        if (!exact || s.is_list()) return s;
        ValueList parts;
        for (double x : s.as_vector()) parts.push_back(Value(DenseVector{x}));
        return Value(std::move(parts));
    }

    Value merge(const Value& a, const Value& b) const {
        if (!exact) {
            const auto& x = a.as_vector();
            const auto& y = b.as_vector();
            if (x.size() != y.size()) throw std::invalid_argument("statistics of different dimension");
            DenseVector out(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
            return Value(std::move(out));
        }
        const auto& x = a.as_list();
        const auto& y = b.as_list();
        if (x.size() != y.size()) throw std::invalid_argument("statistics of different dimension");
        ValueList out;
        for (std::size_t i = 0; i < x.size(); ++i) {
            ExactSum s(x[i].as_vector());
            s.merge(ExactSum(y[i].as_vector()));
            out.push_back(Value(s.partials()));
        }
        return Value(std::move(out));
    }

    Value finalize(const Value& s) const {
        if (!exact || s.is_vector()) return s;
        DenseVector out;
        for (const auto& c : s.as_list()) out.push_back(ExactSum(c.as_vector()).value());
        return Value(std::move(out));
    }
};

}  // namespace

Value encode_point(const SparsePoint& p) {
    ValueList idx;
    for (auto i : p.idx) idx.push_back(Value(i));
    return Value(ValueList{Value(p.y), Value(std::move(idx)), Value(p.val)});
}

SparsePoint decode_point(const Value& v) {
    const auto& l = v.as_list();
    SparsePoint p;
    p.y = l.at(0).as_number();
    for (const auto& i : l.at(1).as_list()) p.idx.push_back(i.as_int());
    p.val = l.at(2).as_vector();
    if (p.idx.size() != p.val.size()) throw std::invalid_argument("record has unequal index and value counts");
    return p;
}

runtime::UdfRegistry bgd_udfs(const BgdConfig& cfg) {
    if (cfg.dim < 1) throw std::invalid_argument("bgd needs dim >= 1");
    if (!(cfg.eta > 0)) throw std::invalid_argument("bgd needs eta > 0");
    if (!(cfg.tol >= 0)) throw std::invalid_argument("bgd needs tol >= 0");
    runtime::UdfRegistry r;
    r.add_function("init_model", [cfg](const Tuple&) -> std::vector<Tuple> {
        return {{Value(DenseVector(cfg.dim, 0.0))}};
    });
    r.add_function("map", [cfg](const Tuple& a) -> std::vector<Tuple> {
        const DenseVector& w = a.at(1).as_vector();
        if (w.size() != cfg.dim)
            throw std::invalid_argument(fmt::format("model has dimension {}, expected {}", w.size(), cfg.dim));
        return {{Value(statistic(w, decode_point(a.at(0))))}};
    });
    r.add_function("update", [cfg](const Tuple& a) -> std::vector<Tuple> {
        const std::int64_t j = a.at(0).as_int();
        const Value& m = a.at(1);
        if (j >= cfg.max_iters) return {{m}};
        const DenseVector& w = m.as_vector();
        const DenseVector& s = a.at(2).as_vector();
        if (s.size() != w.size() + 1)
            throw std::invalid_argument(fmt::format("statistic has {} components for a {}-dimensional model", s.size(),
                                                    w.size()));
        const DenseVector g(s.begin() + 1, s.end());
        return {{Value(step(w, g, cfg))}};
    });
    const Reduce red{cfg.deterministic};
    r.add_aggregate("reduce", {[red](const Value& v) { return red.lift(v); },
                               [red](const Value& a, const Value& b) { return red.merge(a, b); },
                               [red](const Value& s) { return red.finalize(s); }, true});
    const double tol = cfg.tol;
    r.set_equality([tol](const Value& a, const Value& b) {
        if (!a.is_vector() || !b.is_vector()) return a == b;
        const auto& x = a.as_vector();
        const auto& y = b.as_vector();
        if (x.size() != y.size()) return false;
        double d = 0.0;
        bool same = true;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) same = false;
            d = std::max(d, std::fabs(x[i] - y[i]));
        }
        return same || (tol > 0 && d < tol);
    });
    return r;
}

runtime::PartitionedDataset bgd_input(const std::vector<SparsePoint>& points, int partitions) {
    std::vector<Tuple> rows;
    for (std::size_t i = 0; i < points.size(); ++i)
        rows.push_back({Value(static_cast<std::int64_t>(i)), encode_point(points[i])});
    return runtime::PartitionedDataset::round_robin(std::move(rows), partitions);
}

double logistic_loss(const std::vector<double>& w, const SparsePoint& p) { return softplus_neg(p.y * dot(w, p)); }

std::vector<double> logistic_gradient(const std::vector<double>& w, const SparsePoint& p) {
    auto s = statistic(w, p);
    return {s.begin() + 1, s.end()};
}

double prediction(const std::vector<double>& w, const std::vector<double>& x) {
    if (w.size() != x.size())
        throw std::invalid_argument(fmt::format("model dimension {} does not match input dimension {}", w.size(),
                                                x.size()));
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
    return 1.0 / (1.0 + std::exp(-z));
}

std::vector<std::vector<double>> bgd_trajectory(const std::vector<SparsePoint>& points, const BgdConfig& cfg,
                                                int iterations) {
    std::vector<std::vector<double>> out{std::vector<double>(cfg.dim, 0.0)};
    // Per component: every record's gradient entry, summed once in MPFR and
    // rounded to nearest.
    std::vector<__mpfr_struct> terms(points.size());
    for (auto& t : terms) mpfr_init2(&t, 53);
    mpfr_t total;
    mpfr_init2(total, 53);
    std::vector<mpfr_ptr> ptrs;
    for (auto& t : terms) ptrs.push_back(&t);
    for (int it = 0; it < iterations; ++it) {
        const auto& w = out.back();
        std::vector<std::vector<double>> grads;
        for (const auto& p : points) {
            const double z = p.y * dot(w, p);
            const double coef = -p.y / (1.0 + std::exp(z));
            std::vector<double> g(cfg.dim, 0.0);
            for (std::size_t k = 0; k < p.idx.size(); ++k) g[static_cast<std::size_t>(p.idx[k])] = coef * p.val[k];
            grads.push_back(std::move(g));
        }
        std::vector<double> sum(cfg.dim, 0.0);
        for (std::size_t i = 0; i < cfg.dim; ++i) {
            for (std::size_t r = 0; r < points.size(); ++r) mpfr_set_d(&terms[r], grads[r][i], MPFR_RNDN);
            mpfr_sum(total, ptrs.data(), ptrs.size(), MPFR_RNDN);
            sum[i] = mpfr_get_d(total, MPFR_RNDN);
        }
        std::vector<double> next(cfg.dim);
        for (std::size_t i = 0; i < cfg.dim; ++i) next[i] = w[i] - cfg.eta * (cfg.lambda * w[i] + sum[i]);
        out.push_back(std::move(next));
    }
    for (auto& t : terms) mpfr_clear(&t);
    mpfr_clear(total);
    return out;
}

std::vector<double> model_from(const std::vector<Tuple>& model) {
    if (model.size() != 1) throw std::invalid_argument(fmt::format("expected one model row, got {}", model.size()));
    return model[0].back().as_vector();
}

}  // namespace dlflow::tasks
