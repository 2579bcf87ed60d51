#pragma once

#include <string>
#include <string_view>

namespace fpc {

// Closed accuracy interval [lo, hi]. "31/32" parses to the exact-count band
// {31/32}; "12/32:20/32" and "0.4:0.6" parse to intervals.
struct AccuracyBand {
  double lo = 31.0 / 32.0;
  double hi = 31.0 / 32.0;

  bool contains(double p) const { return p >= lo - 1e-12 && p <= hi + 1e-12; }

  static AccuracyBand parse(std::string_view text);
  std::string to_string() const;
};

}  // namespace fpc
