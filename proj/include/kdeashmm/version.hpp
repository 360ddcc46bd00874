#pragma once

namespace kdeas {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace kdeas
