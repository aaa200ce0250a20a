#pragma once

namespace engage {
inline constexpr const char* kVersion = "0.1.0";
}
