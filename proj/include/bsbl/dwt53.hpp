#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "bsbl/errors.hpp"

namespace bsbl {

using IntSignal = std::vector<std::int32_t>;

namespace detail {

inline std::int32_t floordiv(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return static_cast<std::int32_t>(q);
}

} // namespace detail

/// Multi-stage CDF 5/3 coefficients: low-pass band of the coarsest stage
/// first, then high-pass bands from coarsest to finest. All integer, so the
/// transform round-trips exactly.
struct LiftingCoefficients {
    int n = 0;
    int stages = 0;
    std::vector<IntSignal> bands;

    /// Bands concatenated in band-major order.
    IntSignal flatten() const {
        IntSignal out;
        out.reserve(static_cast<std::size_t>(n));
        for (const auto& b : bands) out.insert(out.end(), b.begin(), b.end());
        return out;
    }
};

/// One lifting stage. Odd-indexed samples (0-based) are the high-pass
/// targets; boundaries use whole-sample mirror extension.
inline std::pair<IntSignal, IntSignal> forward_stage(const IntSignal& x) {
    const std::size_t n = x.size();
    if (n < 2 || n % 2 != 0)
        throw dimension_error("forward_stage: length must be even and >= 2");
    const std::size_t half = n / 2;
    IntSignal high(half), low(half);
    for (std::size_t j = 0; j < half; ++j) {
        const std::int64_t a = x[2 * j];
        const std::int64_t b = (2 * j + 2 < n) ? x[2 * j + 2] : x[n - 2];
        high[j] = x[2 * j + 1] + detail::floordiv(-(a + b), 2);
    }
    for (std::size_t j = 0; j < half; ++j) {
        const std::int64_t hl = (j > 0) ? high[j - 1] : high[0];
        low[j] = x[2 * j] + detail::floordiv(hl + high[j] + 2, 4);
    }
    return {std::move(low), std::move(high)};
}

inline IntSignal inverse_stage(const IntSignal& low, const IntSignal& high) {
    if (low.size() != high.size())
        throw dimension_error("inverse_stage: band size mismatch");
    const std::size_t half = low.size();
    const std::size_t n = 2 * half;
    IntSignal x(n);
    for (std::size_t j = 0; j < half; ++j) {
        const std::int64_t hl = (j > 0) ? high[j - 1] : high[0];
        x[2 * j] = low[j] - detail::floordiv(hl + high[j] + 2, 4);
    }
    for (std::size_t j = 0; j < half; ++j) {
        const std::int64_t a = x[2 * j];
        const std::int64_t b = (2 * j + 2 < n) ? x[2 * j + 2] : x[n - 2];
        x[2 * j + 1] = high[j] - detail::floordiv(-(a + b), 2);
    }
    return x;
}

/// Recursive decomposition of the low band, `stages` times.
inline LiftingCoefficients forward(const IntSignal& x, int stages) {
    if (stages < 0)
        throw dimension_error("forward: stages must be >= 0");
    const auto n = x.size();
    if (stages > 0 && (n == 0 || n % (std::size_t{1} << stages) != 0))
        throw dimension_error("forward: length not divisible by 2^stages");
    LiftingCoefficients out;
    out.n = static_cast<int>(n);
    out.stages = stages;
    std::vector<IntSignal> highs;
    IntSignal low = x;
    for (int s = 0; s < stages; ++s) {
        auto [l, h] = forward_stage(low);
        highs.push_back(std::move(h));
        low = std::move(l);
    }
    out.bands.push_back(std::move(low));
    for (auto it = highs.rbegin(); it != highs.rend(); ++it)
        out.bands.push_back(std::move(*it));
    return out;
}

/// Exact inverse of forward.
inline IntSignal inverse(const LiftingCoefficients& c) {
    if (c.bands.size() != static_cast<std::size_t>(c.stages) + 1)
        throw dimension_error("inverse: band count does not match stages");
    std::size_t total = 0;
    for (const auto& b : c.bands) total += b.size();
    if (total != static_cast<std::size_t>(c.n))
        throw dimension_error("inverse: coefficient count does not match n");
    IntSignal low = c.bands[0];
    for (int s = 0; s < c.stages; ++s) {
        const auto& high = c.bands[static_cast<std::size_t>(s) + 1];
        low = inverse_stage(low, high);
    }
    return low;
}

/// Survivors of threshold testing: coefficients with |v| >= 2^T plus their
/// positions in the flattened band-major layout.
struct ThresholdedStream {
    int n = 0;
    int stages = 0;
    int t = 0;
    std::vector<std::int32_t> values;
    std::vector<std::uint32_t> locations; // strictly increasing
};

inline ThresholdedStream threshold_compress(const LiftingCoefficients& c, int t) {
    if (t < 0)
        throw dimension_error("threshold exponent must be >= 0");
    ThresholdedStream out;
    out.n = c.n;
    out.stages = c.stages;
    out.t = t;
    const std::int64_t cutoff = std::int64_t{1} << t;
    std::uint32_t pos = 0;
    for (const auto& band : c.bands) {
        for (std::int32_t v : band) {
            if (std::abs(static_cast<std::int64_t>(v)) >= cutoff) {
                out.values.push_back(v);
                out.locations.push_back(pos);
            }
            ++pos;
        }
    }
    return out;
}

/// Re-expands a thresholded stream into full bands with zeros at the
/// discarded positions.
inline LiftingCoefficients expand(const ThresholdedStream& s) {
    if (s.values.size() != s.locations.size())
        throw io_error("expand: value/location count mismatch");
    IntSignal flat(static_cast<std::size_t>(s.n), 0);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (s.locations[i] >= static_cast<std::uint32_t>(s.n))
            throw io_error("expand: location out of range");
        if (i > 0 && s.locations[i] <= s.locations[i - 1])
            throw io_error("expand: locations not strictly increasing");
        flat[s.locations[i]] = s.values[i];
    }
    LiftingCoefficients c;
    c.n = s.n;
    c.stages = s.stages;
    std::size_t len = static_cast<std::size_t>(s.n) >> s.stages;
    std::size_t off = 0;
    c.bands.emplace_back(flat.begin(), flat.begin() + static_cast<long>(len));
    off += len;
    for (int st = 0; st < s.stages; ++st) {
        c.bands.emplace_back(flat.begin() + static_cast<long>(off),
                             flat.begin() + static_cast<long>(off + len));
        off += len;
        len *= 2;
    }
    return c;
}

} // namespace bsbl
