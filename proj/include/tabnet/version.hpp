#pragma once

namespace tabnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tabnet
