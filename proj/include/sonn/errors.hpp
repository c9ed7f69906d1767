#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sonn {

// Malformed or truncated on-disk data. `offset` is the byte (binary
// formats) or line (text formats) where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(std::string message, std::uint64_t offset)
        : std::runtime_error(message + " (at offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

// A backward pass was asked to use a cache that does not belong to the
// parameters (or was never produced by a train-mode forward).
class InvalidStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace sonn
