#pragma once

namespace tmeig {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tmeig
