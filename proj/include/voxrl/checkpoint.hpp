#pragma once

#include <string>
#include <utility>
#include <vector>

#include "voxrl/tensor.hpp"

namespace voxrl {

// Single-file parameter container:
//   magic (4 bytes) | u32le version | u32le group count,
// then per group: u32le name length | name | u32le rank | u32le dims |
// float32le data. All multi-byte fields little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const char magic[4],
                     const std::vector<std::pair<std::string, const nn::Tensor*>>& groups);

// Group names and shapes must match the save order exactly; throws
// FormatError with the byte offset on magic/truncation/shape problems.
void load_checkpoint(const std::string& path, const char magic[4],
                     const std::vector<std::pair<std::string, nn::Tensor*>>& groups);

}  // namespace voxrl
