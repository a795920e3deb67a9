#include "b2d/topomap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "b2d/error.hpp"

namespace b2d {

namespace {

constexpr double kCoincidence = 1e-9;
constexpr double kDegenerateRange = 1e-12;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::vector<Point2> electrode_xy(const Montage& m) {
  std::vector<Point2> out;
  out.reserve(m.size());
  for (const auto& e : m.entries()) {
    const double a = e.angle_deg * std::numbers::pi / 180.0;
    out.push_back({e.radius * std::sin(a), e.radius * std::cos(a)});
  }
  return out;
}

HeadGrid::HeadGrid(int resolution) : resolution_(resolution) {
  if (resolution < 1) throw std::invalid_argument("grid resolution must be >= 1");
  coords_.reserve(static_cast<std::size_t>(resolution) * resolution);
  mask_.reserve(coords_.capacity());
  for (int row = 0; row < resolution; ++row) {
    for (int col = 0; col < resolution; ++col) {
      const Point2 p{center(col), -center(row)};
      coords_.push_back(p);
      mask_.push_back(p.x * p.x + p.y * p.y <= 1.0 ? 1 : 0);
    }
  }
}

std::vector<double> interpolate_idw(std::span<const double> values, std::span<const Point2> points,
                                    const HeadGrid& grid, double power) {
  if (points.empty()) throw std::invalid_argument("interpolation needs at least one electrode");
  if (values.size() != points.size())
    throw std::invalid_argument("interpolation: " + std::to_string(values.size()) + " values for " +
                                std::to_string(points.size()) + " electrodes");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("interpolation: non-finite electrode value");

  std::vector<double> out(grid.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t px = 0; px < grid.size(); ++px) {
    if (!grid.in_mask(px)) continue;
    const auto g = grid.coord(px);
    double num = 0.0, den = 0.0;
    bool coincident = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = std::hypot(g.x - points[i].x, g.y - points[i].y);
      if (d < kCoincidence) {
        out[px] = values[i];
        coincident = true;
        break;
      }
      const double w = power == 2.0 ? 1.0 / (d * d) : std::pow(d, -power);
      num += w * values[i];
      den += w;
    }
    if (!coincident) out[px] = num / den;
  }
  return out;
}

Rgb colormap_jet(double v) {
  if (std::isnan(v)) throw std::invalid_argument("colormap: NaN input");
  v = clamp01(v);
  return {clamp01(std::min(4.0 * v - 1.5, -4.0 * v + 4.5)), clamp01(std::min(4.0 * v - 0.5, -4.0 * v + 3.5)),
          clamp01(std::min(4.0 * v + 0.5, -4.0 * v + 2.5))};
}

SpectralImage render_image(std::span<const double> band_values, std::span<const Point2> points,
                           const HeadGrid& grid, const Band& band, WindowRef ref, double idw_power) {
  // Rescale the electrodes to [0,1] first so a*v+b renders identically to v
  // whenever the rescaled inputs are exact.
  for (double v : band_values)
    if (!std::isfinite(v)) throw std::invalid_argument("render: non-finite electrode value");
  std::vector<double> unit(band_values.begin(), band_values.end());
  double emin = 0.0, erange = 0.0;
  if (!unit.empty()) {
    const auto [lo, hi] = std::minmax_element(unit.begin(), unit.end());
    emin = *lo;
    erange = *hi - *lo;
    for (double& u : unit) u = erange > 0.0 ? (u - emin) / erange : 0.0;
  }
  const auto field = interpolate_idw(unit, points, grid, idw_power);

  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  for (std::size_t px = 0; px < grid.size(); ++px) {
    if (!grid.in_mask(px)) continue;
    vmin = std::min(vmin, field[px]);
    vmax = std::max(vmax, field[px]);
  }

  SpectralImage img;
  img.band = band;
  img.window_ref = std::move(ref);
  img.vmin = emin + vmin * erange;
  img.vmax = emin + vmax * erange;
  img.pixels.assign(grid.size() * 3, 0.0f);
  const double range = vmax - vmin;
  const bool degenerate = !(range >= kDegenerateRange);
  for (std::size_t px = 0; px < grid.size(); ++px) {
    if (!grid.in_mask(px)) continue;
    const double norm = degenerate ? 0.5 : (field[px] - vmin) / range;
    const auto rgb = colormap_jet(norm);
    img.pixels[px * 3 + 0] = static_cast<float>(rgb.r);
    img.pixels[px * 3 + 1] = static_cast<float>(rgb.g);
    img.pixels[px * 3 + 2] = static_cast<float>(rgb.b);
  }
  return img;
}

SpectralImage render_image(std::span<const double> band_values, const Montage& montage, const Band& band,
                           WindowRef ref) {
  const auto points = electrode_xy(montage);
  const HeadGrid grid;
  return render_image(band_values, points, grid, band, std::move(ref));
}

std::string encode_ppm(std::span<const float> rgb, int height, int width) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3)
    throw std::invalid_argument("ppm: pixel buffer does not match dimensions");
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + rgb.size());
  for (float v : rgb) {
    const double c = std::floor(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0 + 0.5);
    out.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const float> rgb, int height, int width) {
  const auto bytes = encode_ppm(rgb, height, width);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace b2d
