#include "b2d/spectral.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "b2d/error.hpp"

namespace b2d {

std::vector<Window> extract_windows(const EegRecording& rec, double length_s) {
  if (!(length_s > 0.0)) throw std::invalid_argument("window length must be > 0");
  const double exact = length_s * rec.sampling_rate_hz;
  const auto win = static_cast<std::size_t>(std::llround(exact));
  if (win == 0 || std::abs(exact - static_cast<double>(win)) > 1e-9 * exact)
    throw std::invalid_argument("window length * fs must be an integer number of samples");

  std::vector<Window> out;
  const std::size_t n_windows = rec.n_samples() / win;
  out.reserve(n_windows);
  for (std::size_t k = 0; k < n_windows; ++k) {
    Window w;
    w.start_sample = k * win;
    w.length_s = length_s;
    w.subject_id = rec.subject_id;
    w.condition = rec.condition;
    w.data = Matrix(rec.n_channels(), win);
    for (std::size_t c = 0; c < rec.n_channels(); ++c) {
      const auto src = rec.data.row(c).subspan(w.start_sample, win);
      std::copy(src.begin(), src.end(), w.data.row(c).begin());
    }
    out.push_back(std::move(w));
  }
  return out;
}

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

void fft_inplace(std::span<std::complex<double>> x, bool inverse) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft length must be a power of two");
  if (n == 1) return;

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const double theta = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles evaluated directly rather than by recurrence to keep round-off at O(eps log n).
      const std::complex<double> w(std::cos(theta * static_cast<double>(k)),
                                   std::sin(theta * static_cast<double>(k)));
      for (std::size_t start = 0; start < n; start += len) {
        const auto u = x[start + k];
        const auto v = x[start + k + half] * w;
        x[start + k] = u + v;
        x[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= scale;
  }
}

std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x, bool inverse) {
  std::vector<std::complex<double>> out(x.begin(), x.end());
  fft_inplace(out, inverse);
  return out;
}

std::vector<double> make_taper(Taper taper, std::size_t n) {
  std::vector<double> w(n, 1.0);
  const double denom = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    switch (taper) {
      case Taper::Hamming: w[i] = 0.54 - 0.46 * c; break;
      case Taper::Hann: w[i] = 0.5 - 0.5 * c; break;
      case Taper::Boxcar: w[i] = 1.0; break;
    }
  }
  return w;
}

PsdEstimate welch_psd(const Matrix& signals, double fs, const WelchParams& params) {
  const std::size_t seg = params.seg_len;
  const std::size_t n = signals.cols();
  if (!is_power_of_two(seg)) throw std::invalid_argument("welch seg_len must be a power of two");
  if (seg > n) throw std::invalid_argument("welch seg_len exceeds the window length");
  if (!(params.overlap >= 0.0 && params.overlap < 1.0))
    throw std::invalid_argument("welch overlap must be in [0,1)");
  if (!(fs > 0.0)) throw std::invalid_argument("sampling rate must be > 0");

  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(seg) * (1.0 - params.overlap))));
  const std::size_t n_segments = (n - seg) / hop + 1;
  const auto taper = make_taper(params.taper, seg);
  double taper_energy = 0.0;
  for (double w : taper) taper_energy += w * w;
  const double scale = 1.0 / (fs * taper_energy * static_cast<double>(n_segments));

  const std::size_t n_freqs = seg / 2 + 1;
  PsdEstimate psd;
  psd.df = fs / static_cast<double>(seg);
  psd.freqs_hz.resize(n_freqs);
  for (std::size_t k = 0; k < n_freqs; ++k) psd.freqs_hz[k] = static_cast<double>(k) * psd.df;
  psd.power = Matrix(signals.rows(), n_freqs);

  std::vector<std::complex<double>> buf(seg);
  for (std::size_t c = 0; c < signals.rows(); ++c) {
    const auto row = signals.row(c);
    auto out = psd.power.row(c);
    for (std::size_t s = 0; s < n_segments; ++s) {
      const auto segment = row.subspan(s * hop, seg);
      double mean = 0.0;
      if (params.detrend == Detrend::Mean) {
        for (double v : segment) mean += v;
        mean /= static_cast<double>(seg);
      }
      for (std::size_t i = 0; i < seg; ++i) buf[i] = {(segment[i] - mean) * taper[i], 0.0};
      fft_inplace(buf);
      for (std::size_t k = 0; k < n_freqs; ++k) out[k] += std::norm(buf[k]);
    }
    for (std::size_t k = 0; k < n_freqs; ++k) {
      const bool edge = (k == 0) || (k == seg / 2);
      out[k] *= scale * (edge ? 1.0 : 2.0);
    }
  }
  return psd;
}

std::vector<double> band_power(const PsdEstimate& psd, const Band& band) {
  if (psd.freqs_hz.empty()) throw std::invalid_argument("empty PSD");
  const double nyquist = psd.freqs_hz.back();
  if (!(band.lo_hz <= band.hi_hz) || band.lo_hz < 0.0 || band.hi_hz > nyquist)
    throw std::invalid_argument("band " + std::string(to_string(band.name)) + " outside [0, Nyquist]");

  std::vector<std::size_t> bins;
  for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k)
    if (psd.freqs_hz[k] >= band.lo_hz && psd.freqs_hz[k] <= band.hi_hz) bins.push_back(k);
  if (bins.empty()) throw std::invalid_argument("band contains no PSD bins");

  std::vector<double> out(psd.power.rows(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c) {
    double sum = 0.0;
    for (auto k : bins) sum += psd.power(c, k);
    out[c] = sum / static_cast<double>(bins.size());
  }
  return out;
}

}  // namespace b2d
