#pragma once

#include <cstdio>
#include <string>

namespace pcstyle {

/// Shortest round-trip-safe decimal for report cells; identical across runs and platforms with IEEE doubles.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace pcstyle
