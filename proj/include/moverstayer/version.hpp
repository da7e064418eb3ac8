#pragma once

namespace moverstayer {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace moverstayer
