#pragma once

namespace carbonwatch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace carbonwatch
