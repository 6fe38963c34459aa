#include "dlflow/exact_sum.hpp"

#include <cmath>
#include <limits>

namespace dlflow {

void ExactSum::add(double x) {
    if (!std::isfinite(x)) {
        special_ = has_special_ ? special_ + x : x;
        has_special_ = true;
        return;
    }
    std::size_t i = 0;
    for (double y : partials_) {
        if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
        const double hi = x + y;
        const double lo = y - (hi - x);
        if (lo != 0.0) partials_[i++] = lo;
        x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
}

void ExactSum::merge(const ExactSum& other) {
    for (double p : other.partials_) add(p);
    if (other.has_special_) add(other.special_);
}

double ExactSum::value() const {
    if (has_special_) return special_;
    if (partials_.empty()) return 0.0;
    // Sum from the top partial down, then correct the final rounding when the
    // remainder sits exactly on a half-way point (same approach as Python's fsum).
    std::size_t n = partials_.size();
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
        const double x = hi;
        const double y = partials_[--n];
        hi = x + y;
        const double yr = hi - x;
        lo = y - yr;
        if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
        const double y = lo * 2.0;
        const double x = hi + y;
        const double yr = x - hi;
        if (y == yr) hi = x;
    }
    return hi;
}

}  // namespace dlflow
