#include "b2d/band.hpp"

#include "b2d/error.hpp"

namespace b2d {

std::string_view to_string(BandName n) {
  switch (n) {
    case BandName::Theta1: return "theta1";
    case BandName::Theta2: return "theta2";
    case BandName::Alpha1: return "alpha1";
    case BandName::Alpha2: return "alpha2";
  }
  return "?";
}

BandName parse_band_name(std::string_view s) {
  for (const auto& b : kBands)
    if (to_string(b.name) == s) return b.name;
  throw ConfigError("unknown band '" + std::string(s) + "' (expected theta1|theta2|alpha1|alpha2)");
}

}  // namespace b2d
