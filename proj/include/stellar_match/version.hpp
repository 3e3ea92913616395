#pragma once

namespace stellar_match {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stellar_match
