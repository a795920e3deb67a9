#pragma once

#include <array>
#include <string>
#include <string_view>

namespace b2d {

enum class BandName { Theta1, Theta2, Alpha1, Alpha2 };

// Frequency band with inclusive edges.
struct Band {
  BandName name;
  double lo_hz;
  double hi_hz;

  double center_hz() const { return 0.5 * (lo_hz + hi_hz); }
  bool operator==(const Band&) const = default;
};

inline constexpr std::array<Band, 4> kBands = {{
    {BandName::Theta1, 5.0, 6.0},
    {BandName::Theta2, 7.0, 8.0},
    {BandName::Alpha1, 9.0, 10.0},
    {BandName::Alpha2, 11.0, 12.0},
}};

inline constexpr std::size_t band_index(BandName n) { return static_cast<std::size_t>(n); }
inline constexpr const Band& band_of(BandName n) { return kBands[band_index(n)]; }

std::string_view to_string(BandName n);

// Throws ConfigError for anything other than theta1/theta2/alpha1/alpha2.
BandName parse_band_name(std::string_view s);

}  // namespace b2d
