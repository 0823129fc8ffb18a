#pragma once

#include <cstdio>
#include <string>

namespace gsc::detail {

// 17 significant digits; relies on the default "C" numeric locale for '.'.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace gsc::detail
