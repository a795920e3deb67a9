#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "b2d/band.hpp"
#include "b2d/eeg_io.hpp"
#include "b2d/matrix.hpp"

namespace b2d {

// Fixed-length, non-overlapping slice of a recording.
struct Window {
  Matrix data;  // [n_channels x n_samples]
  std::size_t start_sample = 0;
  double length_s = 0.0;
  std::string subject_id;
  Condition condition = Condition::Control;
};

// Tiles the recording from sample 0; the trailing remainder is discarded.
// Throws std::invalid_argument if length_s <= 0 or length_s * fs is not an integer.
std::vector<Window> extract_windows(const EegRecording& rec, double length_s);

bool is_power_of_two(std::size_t n);

// Radix-2 FFT. Forward: X[k] = sum_n x[n] e^{-2 pi i kn/N}; inverse is scaled by 1/N.
// Throws std::invalid_argument if the length is not a power of two.
void fft_inplace(std::span<std::complex<double>> x, bool inverse = false);
std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x, bool inverse = false);

enum class Taper { Hamming, Hann, Boxcar };
enum class Detrend { Mean, None };

// Periodic ("DFT-even") taper of length n.
std::vector<double> make_taper(Taper taper, std::size_t n);

struct WelchParams {
  std::size_t seg_len = 256;
  double overlap = 0.5;
  Taper taper = Taper::Hamming;
  Detrend detrend = Detrend::Mean;
};

// One-sided power spectral density, microvolt^2/Hz.
struct PsdEstimate {
  std::vector<double> freqs_hz;  // k * df, k = 0..seg_len/2
  Matrix power;                  // [n_channels x n_freqs]
  double df = 0.0;
};

// Welch's method: tapered, detrended segments with hop seg_len*(1-overlap);
// periodograms |FFT|^2 / (fs * sum(taper^2)) averaged and folded to one side.
PsdEstimate welch_psd(const Matrix& signals, double fs, const WelchParams& params = {});
inline PsdEstimate welch_psd(const Window& w, double fs, const WelchParams& params = {}) {
  return welch_psd(w.data, fs, params);
}

// Mean power over bins with lo <= f <= hi, one value per channel.
std::vector<double> band_power(const PsdEstimate& psd, const Band& band);

}  // namespace b2d
