#pragma once

#include <cstdio>
#include <string>

namespace dosa {

// Canonical number formatting for CSV/report output: %.17g round-trips
// doubles exactly and is locale-independent, so files are byte-stable
// across runs and machines.
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace dosa
