#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "b2d/spectral.hpp"
#include "doctest.h"
#include "oracles/dft_oracle.hpp"

using namespace b2d;
using cd = std::complex<double>;

namespace {

EegRecording ramp_recording(double seconds, std::size_t n_ch = 2) {
  const auto n = static_cast<std::size_t>(seconds * 256.0);
  EegRecording r{"ramp_01", Condition::Expert, 256.0, {}, Matrix(n_ch, n)};
  for (std::size_t c = 0; c < n_ch; ++c) {
    r.channels.push_back("C" + std::to_string(c));
    for (std::size_t t = 0; t < n; ++t) r.data(c, t) = static_cast<double>(c * 100000 + t);
  }
  return r;
}

Matrix sine_rows(std::size_t n, double fs, std::initializer_list<double> freqs) {
  Matrix m(freqs.size(), n);
  std::size_t c = 0;
  for (double f : freqs) {
    for (std::size_t t = 0; t < n; ++t) m(c, t) = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / fs);
    ++c;
  }
  return m;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("window counts for a 24 s recording") {
  const auto rec = ramp_recording(24.0);
  CHECK(extract_windows(rec, 2.0).size() == 12);
  CHECK(extract_windows(rec, 4.0).size() == 6);
  CHECK(extract_windows(rec, 6.0).size() == 4);
}

TEST_CASE("windows shorter recordings and remainders") {
  CHECK(extract_windows(ramp_recording(1.0), 2.0).empty());
  const auto w = extract_windows(ramp_recording(13.5), 4.0);
  CHECK(w.size() == 3);
}

TEST_CASE("concatenated windows reproduce the recording prefix") {
  const auto rec = ramp_recording(13.0, 3);
  const auto wins = extract_windows(rec, 4.0);
  REQUIRE(wins.size() == 3);
  for (std::size_t i = 0; i < wins.size(); ++i) {
    const auto& w = wins[i];
    CHECK(w.start_sample == i * 1024);
    CHECK(w.length_s == 4.0);
    CHECK(w.subject_id == rec.subject_id);
    CHECK(w.condition == rec.condition);
    REQUIRE(w.data.rows() == 3);
    REQUIRE(w.data.cols() == 1024);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < 1024; ++t) CHECK_EQ(w.data(c, t), rec.data(c, w.start_sample + t));
  }
}

TEST_CASE("invalid window lengths") {
  const auto rec = ramp_recording(4.0);
  CHECK_THROWS_AS((void)extract_windows(rec, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)extract_windows(rec, -2.0), std::invalid_argument);
  CHECK_THROWS_AS((void)extract_windows(rec, 1.0 / 3.0), std::invalid_argument);
}

TEST_CASE("fft of an impulse is flat") {
  std::vector<cd> x(64, 0.0);
  x[0] = 1.0;
  fft_inplace(x);
  for (const auto& v : x) {
    CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(v.imag()) < 1e-14);
  }
}

TEST_CASE("fft of a constant concentrates at DC") {
  std::vector<cd> x(128, 2.5);
  fft_inplace(x);
  CHECK(std::abs(x[0] - cd(320.0, 0.0)) < 1e-12);
  for (std::size_t k = 1; k < x.size(); ++k) CHECK(std::abs(x[k]) < 1e-12);
}

TEST_CASE("fft matches the naive DFT") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (std::size_t n : {1u, 2u, 8u, 256u}) {
    std::vector<cd> x(n);
    for (auto& v : x) v = {nd(rng), nd(rng)};
    const auto got = fft(x);
    const auto ref = oracle::naive_dft(x);
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(got[k] - ref[k]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("fft is linear and round-trips") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<cd> x(256), y(256), z(256);
  const cd a(0.7, -1.3), b(-2.0, 0.25);
  for (std::size_t i = 0; i < 256; ++i) {
    x[i] = {nd(rng), nd(rng)};
    y[i] = {nd(rng), nd(rng)};
    z[i] = a * x[i] + b * y[i];
  }
  const auto fx = fft(x), fy = fft(y), fz = fft(z);
  for (std::size_t k = 0; k < 256; ++k) CHECK(std::abs(fz[k] - (a * fx[k] + b * fy[k])) < 1e-10);
  const auto back = fft(fx, true);
  for (std::size_t i = 0; i < 256; ++i) CHECK(std::abs(back[i] - x[i]) < 1e-12);
}

TEST_CASE("fft rejects lengths that are not powers of two") {
  std::vector<cd> x(100);
  CHECK_THROWS_AS(fft_inplace(x), std::invalid_argument);
  CHECK(is_power_of_two(1));
  CHECK(is_power_of_two(256));
  CHECK_FALSE(is_power_of_two(0));
  CHECK_FALSE(is_power_of_two(96));
}

TEST_CASE("periodic taper") {
  const auto h = make_taper(Taper::Hamming, 8);
  CHECK(h[0] == doctest::Approx(0.08));
  CHECK(h[4] == doctest::Approx(1.0));
  CHECK(h[2] == doctest::Approx(h[6]));
  const auto box = make_taper(Taper::Boxcar, 4);
  CHECK(box == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("welch of silence is zero") {
  const auto psd = welch_psd(Matrix(2, 1024), 256.0);
  CHECK(psd.freqs_hz.size() == 129);
  CHECK(psd.df == 1.0);
  for (double v : psd.power.values()) CHECK(v == 0.0);
}

TEST_CASE("welch peak sits at the sine frequency") {
  const auto psd = welch_psd(sine_rows(1024, 256.0, {10.0, 7.0}), 256.0);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto row = psd.power.row(c);
    const auto k = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    CHECK(psd.freqs_hz[k] == (c == 0 ? 10.0 : 7.0));
  }
}

TEST_CASE("welch integrates to the signal variance") {
  // With boxcar, no overlap and one segment, Parseval holds exactly for zero-mean input.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, 3.0);
  WelchParams p;
  p.taper = Taper::Boxcar;
  p.overlap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m(1, 256);
    double mean = 0.0;
    for (double& v : m.values()) mean += (v = nd(rng));
    mean /= 256.0;
    double var = 0.0;
    for (double v : m.values()) var += (v - mean) * (v - mean);
    var /= 256.0;
    const auto psd = welch_psd(m, 256.0, p);
    double integral = 0.0;
    for (double v : psd.power.row(0)) integral += v * psd.df;
    CHECK(integral == doctest::Approx(var).epsilon(1e-10));
  }
}

TEST_CASE("welch matches the segment-loop oracle") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (std::size_t n : {256u, 512u, 1024u, 1536u}) {
    Matrix m(3, n);
    for (double& v : m.values()) v = nd(rng) + 4.0;
    const auto psd = welch_psd(m, 256.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto row = m.row(c);
      const auto ref = oracle::welch_row(std::vector<double>(row.begin(), row.end()), 256.0, 256, 0.5);
      REQUIRE(ref.size() == psd.freqs_hz.size());
      for (std::size_t k = 0; k < ref.size(); ++k) {
        CHECK(std::abs(psd.power(c, k) - ref[k]) <= 1e-10 * std::max(1.0, ref[k]));
        CHECK(psd.power(c, k) >= 0.0);
      }
    }
  }
}

TEST_CASE("welch rejects input shorter than a segment") {
  CHECK_THROWS_AS((void)welch_psd(Matrix(1, 100), 256.0), std::invalid_argument);
}

TEST_CASE("band power is the mean over inclusive bins") {
  PsdEstimate psd;
  psd.df = 1.0;
  psd.power = Matrix(1, 129);
  for (std::size_t k = 0; k <= 128; ++k) {
    psd.freqs_hz.push_back(static_cast<double>(k));
    psd.power(0, k) = static_cast<double>(k);
  }
  CHECK(band_power(psd, band_of(BandName::Theta1))[0] == 5.5);
  CHECK(band_power(psd, band_of(BandName::Alpha2))[0] == 11.5);
  CHECK_THROWS_AS((void)band_power(psd, Band{BandName::Alpha2, 200.0, 210.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)band_power(psd, Band{BandName::Alpha2, 5.2, 5.8}), std::invalid_argument);
}

TEST_CASE("band power of a sine lands in its band") {
  const auto psd = welch_psd(sine_rows(2048, 256.0, {9.5}), 256.0);
  const double alpha1 = band_power(psd, band_of(BandName::Alpha1))[0];
  const double theta1 = band_power(psd, band_of(BandName::Theta1))[0];
  CHECK(alpha1 > 1000.0 * theta1);
}

}  // TEST_SUITE
