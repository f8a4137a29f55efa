#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bsbl/errors.hpp"

namespace bsbl {

/// Partition of an n-length coefficient vector into g contiguous blocks.
/// Immutable after construction.
class BlockPartition {
public:
    /// Construct from explicit block sizes.
    explicit BlockPartition(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.empty())
            throw partition_error("partition must have at least one block");
        boundaries_.reserve(sizes_.size());
        int start = 0;
        for (int d : sizes_) {
            if (d < 1)
                throw partition_error("block sizes must be positive");
            boundaries_.push_back(start);
            start += d;
        }
        n_ = start;
    }

    /// g blocks of equal size; block_size must divide n.
    static BlockPartition uniform(int n, int block_size) {
        if (n < 1 || block_size < 1)
            throw partition_error("n and block_size must be positive");
        if (n % block_size != 0)
            throw partition_error("block size " + std::to_string(block_size) +
                                  " does not divide " + std::to_string(n));
        return BlockPartition(std::vector<int>(static_cast<std::size_t>(n / block_size),
                                               block_size));
    }

    int n() const noexcept { return n_; }
    int num_blocks() const noexcept { return static_cast<int>(sizes_.size()); }
    int start(int i) const { return boundaries_.at(static_cast<std::size_t>(i)); }
    int size(int i) const { return sizes_.at(static_cast<std::size_t>(i)); }
    const std::vector<int>& sizes() const noexcept { return sizes_; }
    const std::vector<int>& boundaries() const noexcept { return boundaries_; }

private:
    std::vector<int> sizes_;
    std::vector<int> boundaries_;
    int n_ = 0;
};

inline BlockPartition uniform_partition(int n, int block_size) {
    return BlockPartition::uniform(n, block_size);
}

/// One fixed-length window of samples cut from a recording.
struct Packet {
    Eigen::VectorXd samples;
    std::size_t index = 0;
    std::string source_id;
};

struct PacketizeResult {
    std::vector<Packet> packets;
    std::size_t dropped = 0; // trailing samples shorter than one packet
};

/// Cuts a stream into consecutive non-overlapping packets. The trailing
/// remainder is dropped, not padded, and its length is reported.
inline PacketizeResult packetize(const Eigen::VectorXd& stream, int packet_size,
                                 const std::string& source_id = {}) {
    if (packet_size < 1)
        throw partition_error("packet size must be positive");
    PacketizeResult out;
    const auto n = static_cast<std::size_t>(stream.size());
    const auto p = static_cast<std::size_t>(packet_size);
    const std::size_t count = n / p;
    out.packets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Packet pkt;
        pkt.samples = stream.segment(static_cast<Eigen::Index>(i * p), packet_size);
        pkt.index = i;
        pkt.source_id = source_id;
        out.packets.push_back(std::move(pkt));
    }
    out.dropped = n - count * p;
    return out;
}

} // namespace bsbl
