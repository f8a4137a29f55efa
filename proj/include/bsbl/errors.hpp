#pragma once

#include <stdexcept>
#include <string>

namespace bsbl {

/// Base class for all toolkit errors.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid block partition (non-divisible length, bad sizes).
class partition_error : public error {
public:
    using error::error;
};

/// Shape mismatch between operators, signals and measurements.
class dimension_error : public error {
public:
    using error::error;
};

/// Malformed or unreadable file.
class io_error : public error {
public:
    using error::error;
};

/// Numerical degeneracy inside the solver; carries the offending block id
/// (-1 when the failure is not attributable to a single block).
class degeneracy_error : public error {
public:
    degeneracy_error(const std::string& what, int block = -1)
        : error(what), block_(block) {}

    int block() const noexcept { return block_; }

private:
    int block_;
};

} // namespace bsbl
