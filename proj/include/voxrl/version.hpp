#pragma once

namespace voxrl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace voxrl
