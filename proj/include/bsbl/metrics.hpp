#pragma once

#include <algorithm>
#include <chrono>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bsbl/errors.hpp"

namespace bsbl {

/// Percentage root-mean-square distortion, 100 * ||x - x_hat|| / ||x||.
inline double prd(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
    if (x.size() != x_hat.size())
        throw dimension_error("prd: length mismatch");
    const double ref = x.norm();
    if (ref == 0.0)
        throw dimension_error("prd: zero reference norm");
    return 100.0 * (x - x_hat).norm() / ref;
}

/// Runs a callable and reports (result, wall seconds) from a monotonic clock.
template <typename F>
auto time_op(F&& thunk) -> std::pair<decltype(thunk()), double> {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = thunk();
    const auto t1 = std::chrono::steady_clock::now();
    return {std::move(result), std::chrono::duration<double>(t1 - t0).count()};
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace bsbl
