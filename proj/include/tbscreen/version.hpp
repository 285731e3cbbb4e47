#pragma once

namespace tbs {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace tbs
