#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "b2d/band.hpp"
#include "b2d/eeg_io.hpp"

namespace b2d {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// x = r sin(angle), y = r cos(angle); nose at +y, right ear at +x.
std::vector<Point2> electrode_xy(const Montage& m);

inline constexpr int kImageSize = 32;

// Square pixel grid over [-1,1]^2. Row 0 is the nose side (y > 0), column 0 the left side.
class HeadGrid {
 public:
  explicit HeadGrid(int resolution = kImageSize);

  int resolution() const { return resolution_; }
  std::size_t size() const { return coords_.size(); }
  const Point2& coord(std::size_t pixel) const { return coords_[pixel]; }
  bool in_mask(std::size_t pixel) const { return mask_[pixel] != 0; }
  double center(int i) const { return -1.0 + (i + 0.5) * 2.0 / resolution_; }

 private:
  int resolution_;
  std::vector<Point2> coords_;
  std::vector<char> mask_;
};

// Inverse-distance weighting, w_i = d^-power; a pixel within 1e-9 of an electrode
// takes that electrode's value. Out-of-mask pixels are NaN.
std::vector<double> interpolate_idw(std::span<const double> values, std::span<const Point2> points,
                                    const HeadGrid& grid, double power = 2.0);

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  bool operator==(const Rgb&) const = default;
};

// Piecewise-linear jet. Input is clamped to [0,1]; NaN throws std::invalid_argument.
Rgb colormap_jet(double v);

struct WindowRef {
  std::string subject_id;
  Condition condition = Condition::Control;
  std::size_t window_index = 0;
  bool operator==(const WindowRef&) const = default;
};

struct SpectralImage {
  std::vector<float> pixels;  // [32 x 32 x 3], row-major, channels last
  Band band{};
  WindowRef window_ref;
  double vmin = 0.0;
  double vmax = 0.0;
};

// Renders band values (ordered like `points`) to a min-max normalized jet image.
SpectralImage render_image(std::span<const double> band_values, std::span<const Point2> points,
                           const HeadGrid& grid, const Band& band, WindowRef ref, double idw_power = 2.0);
SpectralImage render_image(std::span<const double> band_values, const Montage& montage, const Band& band,
                           WindowRef ref);

// Binary PPM (P6), 8 bits per channel, rounded half-up from [0,1].
std::string encode_ppm(std::span<const float> rgb, int height, int width);
void write_ppm(const std::filesystem::path& path, std::span<const float> rgb, int height, int width);

}  // namespace b2d
