#pragma once

namespace diffquant {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kVersionString = "0.1.0";

}  // namespace diffquant
