#pragma once

namespace scm {

inline constexpr const char* kToolName = "synthctl";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace scm
