#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbl/errors.hpp"

namespace bsbl {

namespace detail {

/// Uniform draw in [0, bound) by rejection. mt19937_64 output is fixed by
/// the standard, so matrices regenerated from (m, n, k, seed) are identical
/// across platforms.
inline std::uint64_t bounded_uniform(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % bound;
}

} // namespace detail

/// M x N sensing operator with k ones per column, stored as the k row
/// indices of each column. Regenerable from (m, n, k, seed).
class SparseBinaryMatrix {
public:
    static constexpr int format_version = 1;

    static SparseBinaryMatrix generate(int m, int n, int k, std::uint64_t seed) {
        if (k < 1 || k > m)
            throw dimension_error("need 1 <= k <= m");
        if (m >= n)
            throw dimension_error("sensing matrix must be compressive (m < n)");
        SparseBinaryMatrix phi;
        phi.m_ = m;
        phi.n_ = n;
        phi.k_ = k;
        phi.seed_ = seed;
        phi.cols_.resize(static_cast<std::size_t>(n));
        std::mt19937_64 rng(seed);
        std::vector<int> pool(static_cast<std::size_t>(m));
        for (auto& col : phi.cols_) {
            // partial Fisher-Yates: first k entries of a shuffled [0, m)
            for (int i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
            col.resize(static_cast<std::size_t>(k));
            for (int j = 0; j < k; ++j) {
                const auto pick = static_cast<std::size_t>(
                    j + static_cast<int>(detail::bounded_uniform(
                            rng, static_cast<std::uint64_t>(m - j))));
                std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
                col[static_cast<std::size_t>(j)] = pool[static_cast<std::size_t>(j)];
            }
            std::sort(col.begin(), col.end());
        }
        return phi;
    }

    int rows() const noexcept { return m_; }
    int cols() const noexcept { return n_; }
    int ones_per_column() const noexcept { return k_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Row indices of the ones in column i.
    const std::vector<int>& column(int i) const {
        return cols_.at(static_cast<std::size_t>(i));
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m_, n_);
        for (int c = 0; c < n_; ++c)
            for (int r : cols_[static_cast<std::size_t>(c)])
                d(r, c) = 1.0;
        return d;
    }

private:
    int m_ = 0, n_ = 0, k_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::vector<int>> cols_;
};

/// One compressed packet.
struct Measurement {
    Eigen::VectorXd values;
    std::size_t packet_index = 0;
};

/// On-the-fly encoder: starting from y = 0, each sample x_i is accumulated
/// into the k row positions of column i. Equals dense(phi) * x bit-exactly.
inline Eigen::VectorXd encode_stream(const SparseBinaryMatrix& phi,
                                     const Eigen::VectorXd& x) {
    if (x.size() != phi.cols())
        throw dimension_error("encode_stream: signal length " +
                              std::to_string(x.size()) + " != matrix columns " +
                              std::to_string(phi.cols()));
    Eigen::VectorXd y = Eigen::VectorXd::Zero(phi.rows());
    for (int i = 0; i < phi.cols(); ++i)
        for (int p : phi.column(i))
            y(p) += x(i);
    return y;
}

/// CR = (n - m) / n.
inline double compression_ratio(int n, int m) {
    if (m < 1 || m > n)
        throw dimension_error("compression_ratio: need 0 < m <= n");
    return static_cast<double>(n - m) / static_cast<double>(n);
}

/// Nearest-integer row count for a requested CR; the achieved CR is
/// reported back through compression_ratio.
inline int rows_for_cr(int n, double cr) {
    if (cr < 0.0 || cr >= 1.0)
        throw dimension_error("compression ratio must lie in [0, 1)");
    int m = static_cast<int>(std::lround(static_cast<double>(n) * (1.0 - cr)));
    return std::clamp(m, 1, n);
}

} // namespace bsbl
