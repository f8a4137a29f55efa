#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "bsbl/errors.hpp"
#include "bsbl/sensing.hpp"

namespace bsbl {

/// Orthonormal DCT-II synthesis basis; columns are the atoms, x = D * theta.
struct DctDictionary {
    Eigen::MatrixXd matrix;

    int n() const { return static_cast<int>(matrix.rows()); }
};

inline DctDictionary dct_dictionary(int n) {
    if (n < 1)
        throw dimension_error("dictionary dimension must be positive");
    Eigen::MatrixXd d(n, n);
    const double dn = static_cast<double>(n);
    for (int j = 0; j < n; ++j) {
        const double scale = (j == 0) ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
        for (int t = 0; t < n; ++t)
            d(t, j) = scale * std::cos(M_PI * (t + 0.5) * j / dn);
    }
    return DctDictionary{std::move(d)};
}

/// Dense effective operator Phi * D. Each output row is the sum of the k
/// dictionary rows selected by that measurement row.
inline Eigen::MatrixXd effective_operator(const SparseBinaryMatrix& phi,
                                          const DctDictionary& dict) {
    if (phi.cols() != dict.n())
        throw dimension_error("effective_operator: matrix columns != dictionary size");
    Eigen::MatrixXd op = Eigen::MatrixXd::Zero(phi.rows(), dict.n());
    for (int c = 0; c < phi.cols(); ++c)
        for (int r : phi.column(c))
            op.row(r) += dict.matrix.row(c);
    return op;
}

} // namespace bsbl
