#pragma once

#include <vector>

namespace dlflow {

/// Order-independent floating-point summation. Keeps the running sum as a
/// list of non-overlapping partials (Shewchuk), so value() is the correctly
/// rounded sum of everything added regardless of the order of add/merge calls.
class ExactSum {
public:
    ExactSum() = default;
    explicit ExactSum(std::vector<double> partials) : partials_(std::move(partials)) {}

    void add(double x);
    void merge(const ExactSum& other);
    double value() const;

    const std::vector<double>& partials() const { return partials_; }

private:
    std::vector<double> partials_;
    // Non-finite inputs are tracked out of band so the partials stay finite.
    double special_ = 0.0;
    bool has_special_ = false;
};

}  // namespace dlflow
