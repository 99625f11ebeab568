#pragma once

namespace denfield {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace denfield
