#pragma once

namespace strategist {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace strategist
