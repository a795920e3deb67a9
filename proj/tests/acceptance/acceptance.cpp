// Acceptance suite: one [PASS]/[FAIL] line per criterion, tolerances pinned below.
// Usage: b2d_acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "b2d/cli.hpp"
#include "b2d/nn/model.hpp"
#include "b2d/pipeline.hpp"
#include "b2d/spectral.hpp"
#include "b2d/topomap.hpp"
#include "oracles/dft_oracle.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/nn_fuzz.hpp"
#include "test_util.hpp"

using namespace b2d;

namespace {

// 1
constexpr double kWelchRelTol = 1e-10;
constexpr double kFftAbsTol = 1e-9;
constexpr int kWelchWindows = 100;
constexpr double kSpectralBudgetS = 10.0;
// 2
constexpr int kParsevalTrials = 50;
constexpr double kParsevalTol = 0.05;
// 3
constexpr double kFuzzTol = 1e-5;
constexpr int kFuzzCases = 100;
// 4
constexpr double kGradH = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kGradFloor = 1e-5;
constexpr double kGradBudgetS = 60.0;
// 5
constexpr double kVggShareLimit = 0.04;
// 6
constexpr int kE2eSubjects = 12;
constexpr double kE2eGain = 2.0;
constexpr double kE2eDurationS = 20.0;
constexpr int kE2eEpochs = 20;
constexpr double kE2eAccuracy = 0.80;
constexpr double kE2eBudgetS = 15.0 * 60.0;
// 8
constexpr double kLatencyBudgetMs = 5.0;
constexpr int kLatencyRepeats = 50;
// 9
constexpr int kAffineTrials = 100;
constexpr double kAffineRealTol = 1e-6;

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2e", v);
  return b;
}

std::string fix(double v, int d = 3) {
  char b[32];
  std::snprintf(b, sizeof b, "%.*f", d, v);
  return b;
}

const Montage& montage() {
  static const Montage m = load_montage(testutil::bundled_montage());
  return m;
}

// Spectral module against the brute-force oracles.
Result spectral_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> n_seg(1, 8), n_ch(1, 4);
  std::uniform_real_distribution<double> offset(-50.0, 50.0), scale(0.1, 30.0);
  double worst_rel = 0.0, worst_dc = 0.0;
  for (int w = 0; w < kWelchWindows; ++w) {
    const std::size_t n = 128 * static_cast<std::size_t>(n_seg(rng) + 1);
    Matrix m(static_cast<std::size_t>(n_ch(rng)), n);
    const double off = offset(rng), sc = scale(rng);
    std::normal_distribution<double> nd(off, sc);
    for (double& v : m.values()) v = nd(rng);
    const auto psd = welch_psd(m, 256.0);
    for (std::size_t c = 0; c < m.rows(); ++c) {
      const auto row = m.row(c);
      const auto ref = oracle::welch_row(std::vector<double>(row.begin(), row.end()), 256.0, 256, 0.5);
      const double peak = *std::max_element(ref.begin(), ref.end());
      // Bin 0 is zero up to roundoff after mean removal; it is compared against the row peak.
      worst_dc = std::max(worst_dc, std::abs(psd.power(c, 0) - ref[0]) / peak);
      for (std::size_t k = 1; k < ref.size(); ++k)
        worst_rel = std::max(worst_rel, std::abs(psd.power(c, k) - ref[k]) / std::abs(ref[k]));
    }
  }
  double worst_fft = 0.0;
  std::normal_distribution<double> nd;
  for (std::size_t n = 8; n <= 1024; n *= 2) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {nd(rng), nd(rng)};
    const auto got = fft(x);
    const auto ref = oracle::naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) worst_fft = std::max(worst_fft, std::abs(got[k] - ref[k]));
  }
  const double secs = seconds_since(t0);
  Result r;
  r.pass = worst_rel <= kWelchRelTol && worst_dc <= kWelchRelTol && worst_fft <= kFftAbsTol && secs < kSpectralBudgetS;
  r.detail = "welch rel " + sci(worst_rel) + " (dc/peak " + sci(worst_dc) + ") tol " + sci(kWelchRelTol) + " over " +
             std::to_string(kWelchWindows) + " windows; fft 8..1024 abs " + sci(worst_fft) + " tol " +
             sci(kFftAbsTol) + "; " + fix(secs, 2) + " s (limit " + fix(kSpectralBudgetS, 0) + " s)";
  return r;
}

// Integral of the Welch PSD of white noise against its sample variance.
Result parseval() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> sigma(0.5, 20.0);
  double sum_ratio = 0.0, worst_single = 0.0;
  for (int t = 0; t < kParsevalTrials; ++t) {
    std::normal_distribution<double> nd(0.0, sigma(rng));
    Matrix m(1, 512);
    double mean = 0.0;
    for (double& v : m.values()) mean += (v = nd(rng));
    mean /= 512.0;
    double var = 0.0;
    for (double v : m.values()) var += (v - mean) * (v - mean);
    var /= 512.0;
    const auto psd = welch_psd(m, 256.0);
    double integral = 0.0;
    for (double p : psd.power.row(0)) integral += p * psd.df;
    sum_ratio += integral / var;
    worst_single = std::max(worst_single, std::abs(integral / var - 1.0));
  }
  const double mean_ratio = sum_ratio / kParsevalTrials;
  Result r;
  r.pass = std::abs(mean_ratio - 1.0) <= kParsevalTol;
  r.detail = "mean sum(PSD)*df / variance = " + fix(mean_ratio, 4) + " over " + std::to_string(kParsevalTrials) +
             " trials of 2 s white noise (tol " + fix(kParsevalTol, 2) + "); worst single trial off by " +
             fix(worst_single, 3);
  return r;
}

Result nn_forward_oracles() {
  const std::vector<std::pair<std::string, std::function<double()>>> layers = {
      {"conv2d", [] { return oracle::fuzz_conv2d<float>(31, kFuzzCases); }},
      {"depthwise", [] { return oracle::fuzz_depthwise<float>(32, kFuzzCases); }},
      {"separable", [] { return oracle::fuzz_separable<float>(33, kFuzzCases); }},
      {"maxpool", [] { return oracle::fuzz_maxpool<float>(34, kFuzzCases); }},
      {"batchnorm", [] { return oracle::fuzz_batchnorm<float>(35, kFuzzCases); }},
      {"dense", [] { return oracle::fuzz_dense<float>(36, kFuzzCases); }},
  };
  Result r{true, ""};
  for (const auto& [name, run] : layers) {
    const double e = run();
    r.pass = r.pass && e <= kFuzzTol;
    r.detail += name + " " + sci(e) + ", ";
  }
  const int mism = oracle::separable_composition_mismatches<float>(37, kFuzzCases);
  r.pass = r.pass && mism == 0;
  r.detail += "tol " + sci(kFuzzTol) + " f32, " + std::to_string(kFuzzCases) +
              " cases each; separable vs depthwise+pointwise bit mismatches " + std::to_string(mism);
  return r;
}

Result gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = nn::reference_preset();
  cfg.input_height = cfg.input_width = 8;
  nn::Model<double> m(cfg, 5);
  const auto x = oracle::random_batch(2, 8, 8, 3, 105);
  const auto y = nn::one_hot<double>({0, 2}, 3);
  const auto res = oracle::gradcheck_model(m, x, y, kGradH, kGradTol, kGradFloor);
  const double secs = seconds_since(t0);
  const auto total = static_cast<std::size_t>(nn::count_params(cfg).total);
  Result r;
  r.pass = res.failed == 0 && res.checked == total && secs < kGradBudgetS;
  r.detail = std::to_string(res.checked) + "/" + std::to_string(total) + " parameters, " +
             std::to_string(res.failed) + " beyond " + sci(kGradTol) + " (worst " + sci(res.worst_rel) + " at " +
             res.worst_param + "), h " + sci(kGradH) + " f64; " + fix(secs, 1) + " s (limit " +
             fix(kGradBudgetS, 0) + " s)";
  return r;
}

// Trainable parameters from first principles, independent of count_params.
std::int64_t formula(const nn::LayerSpec& l, std::int64_t cin, std::int64_t flat) {
  const std::int64_t k = static_cast<std::int64_t>(l.kh) * l.kw;
  switch (l.kind) {
    case nn::LayerKind::Conv2D: return k * cin * l.filters + l.filters;
    case nn::LayerKind::DepthwiseConv2D: return k * cin + cin;
    case nn::LayerKind::SeparableConv2D: return k * cin + cin * l.filters + l.filters;
    case nn::LayerKind::BatchNorm: return 2 * cin;
    case nn::LayerKind::Dense: return flat * l.filters + l.filters;
    default: return 0;
  }
}

Result parameters() {
  Result r{true, ""};
  auto one = [](nn::LayerSpec l, int cin) {
    nn::ModelConfig c;
    c.input_channels = cin;
    c.layers = {l, nn::LayerSpec::simple(nn::LayerKind::Flatten), nn::LayerSpec::dense(3),
                nn::LayerSpec::simple(nn::LayerKind::Softmax)};
    return nn::count_params(c).layers.front().trainable;
  };
  const auto conv = one(nn::LayerSpec::conv2d(3, 64), 3);
  const auto dw = one(nn::LayerSpec::depthwise(2), 64);
  const auto sep = one(nn::LayerSpec::separable(2, 12), 64);
  r.pass = conv == 1792 && dw == 320 && sep == 1036;
  r.detail = "conv3x3 3->64 " + std::to_string(conv) + ", dw2x2/64 " + std::to_string(dw) + ", sep2x2 64->12 " +
             std::to_string(sep);

  const auto cfg = nn::reference_preset();
  const auto shapes = nn::infer_shapes(cfg);
  const auto rep = nn::count_params(cfg);
  std::int64_t sum = 0;
  int mismatched = 0;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto in = i == 0 ? nn::Shape{static_cast<std::size_t>(cfg.input_height),
                                       static_cast<std::size_t>(cfg.input_width),
                                       static_cast<std::size_t>(cfg.input_channels)}
                           : shapes[i - 1];
    std::int64_t flat = 1;
    for (auto d : in) flat *= static_cast<std::int64_t>(d);
    const auto expect = formula(cfg.layers[i], static_cast<std::int64_t>(in.back()), flat);
    mismatched += expect != rep.layers[i].trainable;
    sum += expect;
  }
  r.pass = r.pass && mismatched == 0 && sum == rep.total;

  const auto sol = nn::solve_dense_width({}, nn::kTargetParams);
  std::string solve;
  if (!sol.exact.empty()) {
    solve = std::to_string(sol.exact.size()) + " searched configurations attain " +
            std::to_string(nn::kTargetParams);
  } else {
    const auto& c = sol.nearest.front();
    solve = "no searched configuration attains " + std::to_string(nn::kTargetParams) + ", nearest " +
            std::to_string(c.total) + " (width " + std::to_string(c.dense_width) + ", delta " +
            (c.delta > 0 ? "+" : "") + std::to_string(c.delta) + ")";
  }
  const double share = static_cast<double>(rep.total) / static_cast<double>(nn::kVgg16Params);
  r.pass = r.pass && share < kVggShareLimit;
  r.detail += "; reference layers vs formula mismatches " + std::to_string(mismatched) + "; preset total " +
              std::to_string(rep.total) + " (delta " + (rep.total >= nn::kTargetParams ? "+" : "") +
              std::to_string(rep.total - nn::kTargetParams) + " vs " +
              std::to_string(nn::kTargetParams) + "); " + solve + "; " + fix(100.0 * share, 3) +
              "% of VGG16 (limit " + fix(100.0 * kVggShareLimit, 0) + "%)";
  return r;
}

// Shared synthetic dataset for criteria 6-8.
const ImageDataset& e2e_dataset() {
  static const ImageDataset ds = [] {
    SyntheticSpec s;
    s.n_subjects_per_condition = kE2eSubjects;
    s.duration_s = kE2eDurationS;
    s.class_band_gains[Condition::Expert] = {kE2eGain, 1, 1, 1};
    s.class_band_gains[Condition::NonExpert] = {kE2eGain, 1, 1, 1};
    s.class_band_gains[Condition::Control] = {1, 1, 1, 1};
    s.class_focus[Condition::Expert] = {0.0, 0.5, 0.35};
    s.class_focus[Condition::NonExpert] = {0.0, -0.5, 0.35};
    s.amplitude_jitter = 0.2;
    s.focus_jitter = 0.05;
    const auto recs = generate_synthetic(s, montage(), 7);
    return build_dataset(recs, montage(), BandName::Theta1, 2.0);
  }();
  return ds;
}

Result end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& ds = e2e_dataset();
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.batch = 30;
  h.epochs = kE2eEpochs;
  h.seed = 1;
  const int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto results = run_folds<float>(nn::reference_preset(), ds, folds, h, threads);
  double acc = 0.0, lo = 1.0;
  for (const auto& r : results) {
    acc += r.report.test.accuracy;
    lo = std::min(lo, r.report.test.accuracy);
  }
  acc /= static_cast<double>(results.size());
  const double secs = seconds_since(t0);
  Result r;
  r.pass = results.size() == 12 && acc >= kE2eAccuracy && secs < kE2eBudgetS;
  r.detail = "mean LOSO test accuracy " + fix(acc, 4) + " (min fold " + fix(lo, 3) + ") over " +
             std::to_string(results.size()) + " folds, threshold " + fix(kE2eAccuracy, 2) + "; " +
             std::to_string(ds.size()) + " theta1 2 s images, gain x" + fix(kE2eGain, 0) + ", batch 30, " +
             std::to_string(kE2eEpochs) + " epochs, " + std::to_string(threads) + " thread(s); " + fix(secs, 0) +
             " s (limit " + fix(kE2eBudgetS, 0) + " s)";
  return r;
}

Result split_integrity() {
  const auto& ds = e2e_dataset();
  const auto subjects = subjects_of(ds);
  const auto folds = loso_folds(subjects);
  std::set<std::string> all;
  for (const auto& [c, ids] : subjects) all.insert(ids.begin(), ids.end());
  int bad = 0;
  std::map<std::string, int> tested;
  for (const auto& f : folds) {
    std::set<std::string> train(f.train_subjects.begin(), f.train_subjects.end());
    std::set<std::string> test(f.test_subjects.begin(), f.test_subjects.end());
    bad += test.size() != f.test_subjects.size() || train.size() != f.train_subjects.size();
    for (const auto& t : test) bad += train.count(t) > 0;
    std::set<std::string> u = train;
    u.insert(test.begin(), test.end());
    bad += u != all;
    std::map<Condition, int> per;
    for (const auto& t : test) {
      ++tested[t];
      for (const auto& [c, ids] : subjects)
        if (std::find(ids.begin(), ids.end(), t) != ids.end()) ++per[c];
    }
    for (auto c : kConditions) bad += per[c] != 1;
    const auto idx = split_indices(ds, f);
    std::set<std::size_t> seen;
    for (const auto* part : {&idx.train, &idx.validation, &idx.test})
      for (auto i : *part) bad += !seen.insert(i).second;
    bad += seen.size() != ds.size();
    for (auto i : idx.test) bad += test.count(ds.meta[i].subject_id) == 0;
    for (const auto* part : {&idx.train, &idx.validation})
      for (auto i : *part) bad += test.count(ds.meta[i].subject_id) > 0;
  }
  for (const auto& s : all) bad += tested[s] != 1;
  Result r;
  r.pass = folds.size() == 12 && bad == 0;
  r.detail = std::to_string(folds.size()) + " folds, " + std::to_string(all.size()) +
             " subjects: violations of disjointness / one test subject per condition / coverage / sample partition = " +
             std::to_string(bad);
  return r;
}

Result timing() {
  const auto& ds = e2e_dataset();
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.epochs = 1;
  const auto res = benchmark<float>(nn::reference_preset(), ds, folds[0], h, 3, kLatencyRepeats);
  int broken = 0;
  for (const auto& t : res.runs) {
    broken += t.test_ns_per_sample() * static_cast<std::int64_t>(t.n_test) != t.test_ns;
    // The reported decimal strings carry the same identity: ms has 6 decimals, s has 9.
    const auto ms = ns_as_milliseconds(t.test_ns_per_sample());
    const auto s = ns_as_seconds(t.test_ns);
    const auto digits = [](std::string v) {
      v.erase(std::remove(v.begin(), v.end(), '.'), v.end());
      return std::stoll(v);
    };
    broken += digits(ms) * static_cast<std::int64_t>(t.n_test) != digits(s);
  }
  const double latency_ms = static_cast<double>(res.single_image_median_ns) * 1e-6;
  Result r;
  r.pass = broken == 0 && !res.runs.empty() && latency_ms <= kLatencyBudgetMs;
  r.detail = "ms/sample x n / 1000 == test_s held in " + std::to_string(res.runs.size() - broken) + "/" +
             std::to_string(res.runs.size()) + " runs (e.g. " + ns_as_milliseconds(res.median.test_ns_per_sample()) +
             " ms x " + std::to_string(res.median.n_test) + " = " + ns_as_seconds(res.median.test_ns) +
             " s); single-image f32 inference median " + fix(latency_ms, 3) + " ms over " +
             std::to_string(kLatencyRepeats) + " (limit " + fix(kLatencyBudgetMs, 1) + " ms)";
  return r;
}

// Exact equality needs a*v+b itself to be exact in floating point, so the exact
// trials draw v, a and b from a dyadic grid. Arbitrary real a, b are reported
// separately against a pixel tolerance.
Result rendering() {
  const auto& m = montage();
  const auto theta1 = band_of(BandName::Theta1);
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<std::int64_t> grid_val(-(1 << 20), 1 << 20), mant(1, 1023), expo(0, 10);
  const HeadGrid grid;
  int differing = 0, background = 0;
  auto check_mask = [&](const SpectralImage& img) {
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double x = grid.coord(p).x, y = grid.coord(p).y;
      if (x * x + y * y > 1.0)
        for (int c = 0; c < 3; ++c) background += img.pixels[p * 3 + c] != 0.0f;
    }
  };
  for (int t = 0; t < kAffineTrials; ++t) {
    std::vector<double> v(m.size()), w(m.size());
    for (auto& x : v) x = static_cast<double>(grid_val(rng)) / 1024.0;
    const double a = static_cast<double>(mant(rng)) / std::ldexp(1.0, static_cast<int>(expo(rng)));
    const double b = static_cast<double>(grid_val(rng)) / 1024.0;
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    const auto iv = render_image(v, m, theta1, {});
    const auto iw = render_image(w, m, theta1, {});
    differing += iv.pixels != iw.pixels;
    check_mask(iv);
    check_mask(iw);
  }

  std::uniform_real_distribution<double> val(-50.0, 50.0), logscale(-3.0, 3.0), shift(-1000.0, 1000.0);
  int real_differing = 0;
  double real_worst = 0.0;
  for (int t = 0; t < kAffineTrials; ++t) {
    std::vector<double> v(m.size()), w(m.size());
    for (auto& x : v) x = val(rng);
    const double a = std::pow(10.0, logscale(rng)), b = shift(rng);
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = a * v[i] + b;
    const auto iv = render_image(v, m, theta1, {});
    const auto iw = render_image(w, m, theta1, {});
    real_differing += iv.pixels != iw.pixels;
    for (std::size_t i = 0; i < iv.pixels.size(); ++i)
      real_worst = std::max(real_worst, static_cast<double>(std::abs(iv.pixels[i] - iw.pixels[i])));
    check_mask(iv);
  }
  Result r;
  r.pass = differing == 0 && background == 0 && real_worst <= kAffineRealTol;
  r.detail = std::to_string(differing) + "/" + std::to_string(kAffineTrials) +
             " exact affine rescalings rendered differently (dyadic v, a, b); arbitrary real a in [1e-3,1e3], "
             "|b| <= 1000: " +
             std::to_string(real_differing) + "/" + std::to_string(kAffineTrials) + " not bit-equal, worst pixel " +
             sci(real_worst) + " (tol " + sci(kAffineRealTol) + "); nonzero out-of-disk pixels " +
             std::to_string(background);
  return r;
}

Result determinism() {
  testutil::TempDir d;
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  int rc = run({"synth", "--out", (d / "rec").string(), "--synth.subjects", "3", "--synth.duration-s", "10"});
  rc |= run({"images", "--recordings", (d / "rec").string(), "--out", (d / "ds").string()});
  const auto manifest = (d / "ds" / "theta1_2s.b2dmanifest").string();
  for (const char* out : {"a", "b"})
    rc |= run({"train", "--dataset", manifest, "--out", (d / out).string(), "--epochs", "3", "--batch", "10",
               "--seed", "11", "--strict"});
  int files = 0, differ = 0;
  for (const auto& e : std::filesystem::directory_iterator(d / "a")) {
    const auto name = e.path().filename().string();
    if (name == "timing.csv") continue;  // wall-clock
    ++files;
    differ += testutil::slurp(e.path()) != testutil::slurp(d / "b" / name);
  }
  Result r;
  r.pass = rc == 0 && files >= 5 && differ == 0;
  r.detail = "two strict train runs (3 folds, 3 epochs): " + std::to_string(differ) + " of " + std::to_string(files) +
             " artifacts differ (weights_fold_*.b2dw, report.csv, model.txt, resolved.cfg; timing.csv is wall-clock)" +
             (rc ? "; a command failed" : "");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"spectral oracle equivalence", spectral_oracles},
      {"Parseval property", parseval},
      {"NN forward oracle equivalence", nn_forward_oracles},
      {"gradient correctness", gradients},
      {"parameter accounting", parameters},
      {"end-to-end synthetic classification", end_to_end},
      {"split integrity", split_integrity},
      {"timing identity and latency budget", timing},
      {"rendering invariance", rendering},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << id << ". " << criteria[i].first << ": " << r.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
