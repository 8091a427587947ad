#pragma once

namespace kolambert {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace kolambert
