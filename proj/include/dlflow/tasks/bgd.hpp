#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/value.hpp"

namespace dlflow::tasks {

/// A labelled sparse feature vector; indices ascending.
struct SparsePoint {
    double y = 1.0;
    std::vector<std::int64_t> idx;
    std::vector<double> val;
};

struct BgdConfig {
    std::size_t dim = 1;
    double lambda = 0.0;
    double eta = 0.1;
    /// From this iteration on, update returns the model unchanged.
    int max_iters = 10;
    /// Models closer than this (max norm) compare equal; 0 means bitwise.
    double tol = 0.0;
    /// Reduce with exact per-component sums, independent of merge order.
    bool deterministic = true;
};

/// Record encoding: List[y, List[idx...], Vector[val...]].
Value encode_point(const SparsePoint& p);
SparsePoint decode_point(const Value& v);

/// init_model, map, reduce and update for the IMRU template plus the model
/// equality hook. A statistic is Vector[loss, gradient...].
/// Throws std::invalid_argument on dim < 1, eta <= 0 or tol < 0.
runtime::UdfRegistry bgd_udfs(const BgdConfig& cfg);

/// (Id, R) tuples dealt round robin.
runtime::PartitionedDataset bgd_input(const std::vector<SparsePoint>& points, int partitions);

/// log(1 + exp(-y <w, x>)).
double logistic_loss(const std::vector<double>& w, const SparsePoint& p);
/// Dense gradient of logistic_loss in w.
std::vector<double> logistic_gradient(const std::vector<double>& w, const SparsePoint& p);

/// 1 / (1 + exp(-<w, x>)); throws std::invalid_argument on a size mismatch.
double prediction(const std::vector<double>& w, const std::vector<double>& x);

/// Single-threaded gradient descent from w = 0 with correctly rounded
/// gradient sums; element k is the model after k updates.
std::vector<std::vector<double>> bgd_trajectory(const std::vector<SparsePoint>& points, const BgdConfig& cfg,
                                                int iterations);

/// Model vector held by a one-row model dataset.
std::vector<double> model_from(const std::vector<Tuple>& model);

}  // namespace dlflow::tasks
