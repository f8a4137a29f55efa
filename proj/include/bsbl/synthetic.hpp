#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bsbl/sensing.hpp"
#include "bsbl/signal_model.hpp"

namespace bsbl {

namespace detail {

/// Portable standard normal draw (Box-Muller over mt19937_64 output).
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    std::mt19937_64& engine() { return rng_; }

private:
    double uniform01() {
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace detail

struct SyntheticParams {
    int active_blocks = 3;
    double intra_r = 0.95;   // AR(1) coefficient inside active blocks
    double noise_db = 0.0;   // measurement SNR in dB; 0 = noiseless
};

/// Block-sparse signal: `active` blocks chosen without replacement, each
/// filled with a stationary AR(1) sample path.
inline Eigen::VectorXd make_block_sparse_signal(const BlockPartition& part,
                                                const SyntheticParams& p,
                                                std::uint64_t seed) {
    detail::NormalSource normal(seed);
    const int g = part.num_blocks();
    std::vector<int> ids(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (int j = 0; j < p.active_blocks && j < g; ++j) {
        const auto pick = static_cast<std::size_t>(
            j + static_cast<int>(detail::bounded_uniform(
                    normal.engine(), static_cast<std::uint64_t>(g - j))));
        std::swap(ids[static_cast<std::size_t>(j)], ids[pick]);
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(part.n());
    const double r = p.intra_r;
    const double innov = std::sqrt(std::max(1.0 - r * r, 1e-12));
    for (int j = 0; j < p.active_blocks && j < g; ++j) {
        const int blk = ids[static_cast<std::size_t>(j)];
        const int st = part.start(blk);
        const int d = part.size(blk);
        double prev = normal();
        x(st) = prev;
        for (int t = 1; t < d; ++t) {
            prev = r * prev + innov * normal();
            x(st + t) = prev;
        }
    }
    return x;
}

/// Additive white Gaussian noise at the requested SNR (dB).
inline Eigen::VectorXd add_noise(const Eigen::VectorXd& y, double snr_db,
                                 std::uint64_t seed) {
    if (snr_db <= 0.0 || y.size() == 0)
        return y;
    detail::NormalSource normal(seed);
    const double signal_power = y.squaredNorm() / static_cast<double>(y.size());
    const double noise_std = std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0));
    Eigen::VectorXd out = y;
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) += noise_std * normal();
    return out;
}

} // namespace bsbl
