#pragma once

namespace qcw {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qcw
