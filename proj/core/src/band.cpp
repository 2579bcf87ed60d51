#include "fpc/band.hpp"

#include <charconv>
#include <string>

#include "fpc/error.hpp"
#include "fpc/format.hpp"

namespace fpc {

namespace {

double parse_value(std::string_view text) {
  const auto slash = text.find('/');
  auto number = [&](std::string_view part) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw ConfigError("invalid accuracy value '" + std::string(text) + "'");
    }
    return v;
  };
  if (slash == std::string_view::npos) return number(text);
  const double den = number(text.substr(slash + 1));
  if (den <= 0.0) throw ConfigError("invalid accuracy value '" + std::string(text) + "'");
  return number(text.substr(0, slash)) / den;
}

}  // namespace

AccuracyBand AccuracyBand::parse(std::string_view text) {
  AccuracyBand band;
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    band.lo = band.hi = parse_value(text);
  } else {
    band.lo = parse_value(text.substr(0, colon));
    band.hi = parse_value(text.substr(colon + 1));
  }
  if (!(band.lo >= 0.0 && band.hi <= 1.0 && band.lo <= band.hi)) {
    throw ConfigError("accuracy band must satisfy 0 <= lo <= hi <= 1: '" +
                      std::string(text) + "'");
  }
  return band;
}

std::string AccuracyBand::to_string() const {
  if (lo == hi) return format_double(lo);
  return format_double(lo) + ":" + format_double(hi);
}

}  // namespace fpc
