#pragma once

#include <iostream>
#include <string_view>

namespace ctxenc::log {

inline void info(std::string_view message) { std::cerr << "[info] " << message << '\n'; }
inline void warn(std::string_view message) { std::cerr << "[warn] " << message << '\n'; }

}  // namespace ctxenc::log
