#pragma once

namespace meanmatch {
inline constexpr const char* kVersion = "0.1.0";
}
