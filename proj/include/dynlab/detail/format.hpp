#pragma once

#include <charconv>
#include <string>

namespace dynlab::detail {

// shortest round-trip decimal form
inline std::string fmt(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

}  // namespace dynlab::detail
