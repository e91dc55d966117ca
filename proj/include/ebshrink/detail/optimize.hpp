#ifndef EBSHRINK_DETAIL_OPTIMIZE_HPP
#define EBSHRINK_DETAIL_OPTIMIZE_HPP

#include <cmath>
#include <utility>

namespace ebshrink::detail {

struct LineMax {
  double x;
  double value;
};

/// Golden-section search for the maximum of f on [lo, hi]. Returns the best
/// interior point evaluated; f is assumed unimodal on the bracket.
template <class F>
LineMax golden_section_max(F&& f, double lo, double hi, double tol, int max_iter = 200) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < max_iter && (hi - lo) > tol; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return fc >= fd ? LineMax{c, fc} : LineMax{d, fd};
}

}  // namespace ebshrink::detail

#endif
