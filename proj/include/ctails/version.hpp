#pragma once

namespace ctails {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ctails
