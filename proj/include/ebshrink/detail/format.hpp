#ifndef EBSHRINK_DETAIL_FORMAT_HPP
#define EBSHRINK_DETAIL_FORMAT_HPP

#include <cstdio>
#include <string>

namespace ebshrink::detail {

/// 17 significant digits: enough to round-trip any double.
inline std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace ebshrink::detail

#endif
