#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voxrl {

// Malformed or truncated binary file. Carries the byte offset at which the
// problem was detected.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::uint64_t byte_offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// Non-finite loss or gradient during training. Names the offending tensor.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace voxrl
