#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "b2d/error.hpp"
#include "b2d/nn/container.hpp"
#include "b2d/nn/ops.hpp"
#include "b2d/pipeline.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace b2d;

namespace {

Montage small_montage() {
  return Montage({{"Cz", 0, 0}, {"Fz", 0, 0.5}, {"Pz", 180, 0.5}, {"T7", 270, 0.9}, {"T8", 90, 0.9}, {"Oz", 180, 0.95}});
}

SyntheticSpec separable_spec(int per_condition, double seconds, double gain) {
  SyntheticSpec s;
  s.n_subjects_per_condition = per_condition;
  s.duration_s = seconds;
  s.noise_sigma = 0.5;
  s.class_band_gains[Condition::Expert] = {gain, 1, 1, 1};
  s.class_band_gains[Condition::NonExpert] = {gain, 1, 1, 1};
  s.class_band_gains[Condition::Control] = {1, 1, 1, 1};
  s.class_focus[Condition::Expert] = {0.0, 0.5, 0.35};
  s.class_focus[Condition::NonExpert] = {0.0, -0.5, 0.35};
  return s;
}

ImageDataset small_dataset(int per_condition = 2, double seconds = 12.0, double gain = 2.0) {
  const auto m = small_montage();
  return build_dataset(generate_synthetic(separable_spec(per_condition, seconds, gain), m, 21), m, BandName::Theta1,
                       2.0);
}

nn::ModelConfig tiny_model() {
  nn::ModelConfig cfg;
  cfg.name = "tiny";
  cfg.layers = nn::parse_layers(
      "b1:conv2d(3x3,8,same) b1:depthwise(2x2,same) b1:relu b1:maxpool b1:batchnorm "
      "b2:conv2d(2x2,8,same) b2:relu b2:maxpool b2:batchnorm b3:flatten b3:dense(16) b3:dense(3) b3:softmax");
  return cfg;
}

// Precision/recall/F1 of one class straight from the label lists.
std::array<double, 3> scalar_prf(const std::vector<int>& t, const std::vector<int>& p, int k) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp += (t[i] == k && p[i] == k);
    fp += (t[i] != k && p[i] == k);
    fn += (t[i] == k && p[i] != k);
  }
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return {prec, rec, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("one 24 s subject gives 12 two-second images") {
  const auto m = small_montage();
  auto spec = separable_spec(1, 24.0, 2.0);
  auto recs = generate_synthetic(spec, m, 1);
  recs.resize(1);
  const auto ds = build_dataset(recs, m, BandName::Theta1, 2.0);
  CHECK(ds.size() == 12);
  CHECK(ds.images.shape() == nn::Shape{12, 32, 32, 3});
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(ds.meta[i].window_index == i);
    CHECK(ds.meta[i].window_s == 2.0);
    CHECK(ds.meta[i].band == BandName::Theta1);
  }
  CHECK(build_dataset(recs, m, BandName::Theta1, 4.0).size() == 6);
  CHECK(build_dataset(recs, m, BandName::Theta1, 6.0).size() == 4);
}

TEST_CASE("empty and short inputs give empty datasets") {
  const auto m = small_montage();
  CHECK(build_dataset({}, m, BandName::Alpha1, 2.0).empty());
  auto recs = generate_synthetic(separable_spec(1, 6.0, 2.0), m, 1);
  CHECK(build_dataset(recs, m, BandName::Alpha1, 6.0).size() == 3);
  for (auto& r : recs) r.data = Matrix(r.n_channels(), 256);
  CHECK(build_dataset(recs, m, BandName::Alpha1, 2.0).empty());
}

TEST_CASE("dataset order and determinism") {
  const auto m = small_montage();
  auto recs = generate_synthetic(separable_spec(2, 6.0, 2.0), m, 4);
  const auto a = build_dataset(recs, m, BandName::Theta2, 2.0);
  std::reverse(recs.begin(), recs.end());
  const auto b = build_dataset(recs, m, BandName::Theta2, 2.0);
  CHECK(a == b);
  CHECK(dataset_checksum(a) == dataset_checksum(b));
  CHECK_NOTHROW(validate(a));
  CHECK(a.meta.front().subject_id == "expert_01");
  CHECK(a.meta.back().subject_id == "control_02");
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a.labels[i - 1] <= a.labels[i]);
  CHECK(dataset_checksum(a) != dataset_checksum(build_dataset(recs, m, BandName::Alpha1, 2.0)));
}

TEST_CASE("unknown channel is a data error") {
  const auto m = small_montage();
  auto recs = generate_synthetic(separable_spec(1, 6.0, 2.0), m, 4);
  recs[0].channels[0] = "Xx";
  CHECK_THROWS_WITH_AS((void)build_dataset(recs, m, BandName::Theta1, 2.0), doctest::Contains("Xx"), DataError);
}

TEST_CASE("dataset files round-trip") {
  testutil::TempDir dir;
  const auto ds = small_dataset(1, 6.0);
  const auto manifest = write_dataset(ds, dir.path(), "theta1_2s");
  CHECK(manifest.filename() == "theta1_2s.b2dmanifest");
  CHECK(read_dataset(manifest) == ds);
  const auto text = testutil::slurp(manifest);
  CHECK(text.rfind("B2DMANIFEST 1\ntheta1_2s.b2dw,0,0,expert_01,expert,theta1,0,2\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(ds.size()) + 1);

  auto bad = text;
  bad.replace(bad.find(",0,expert_01,expert"), 19, ",2,expert_01,expert");
  testutil::spit(dir / "bad.b2dmanifest", bad);
  CHECK_THROWS_WITH_AS((void)read_dataset(dir / "bad.b2dmanifest"), doctest::Contains("label"), ParseError);
}

TEST_CASE("leave-one-subject-out folds") {
  SubjectsByCondition s;
  for (auto c : kConditions)
    for (int i = 12; i >= 1; --i) s[c].push_back(std::string(to_string(c)) + "_" + (i < 10 ? "0" : "") + std::to_string(i));
  const auto folds = loso_folds(s);
  REQUIRE(folds.size() == 12);
  std::multiset<std::string> tested;
  for (const auto& f : folds) {
    REQUIRE(f.test_subjects.size() == 3);
    CHECK(f.train_subjects.size() == 33);
    CHECK(f.test_subjects[0].rfind("expert_", 0) == 0);
    CHECK(f.test_subjects[1].rfind("nonexpert_", 0) == 0);
    CHECK(f.test_subjects[2].rfind("control_", 0) == 0);
    for (const auto& t : f.test_subjects) {
      tested.insert(t);
      CHECK(std::find(f.train_subjects.begin(), f.train_subjects.end(), t) == f.train_subjects.end());
    }
  }
  CHECK(tested.size() == 36);
  CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == 36);
  CHECK(folds[0].test_subjects[0] == "expert_01");
  CHECK(folds[11].test_subjects[2] == "control_12");

  SubjectsByCondition two;
  for (auto c : kConditions) two[c] = {"a_" + std::string(to_string(c)), "b_" + std::string(to_string(c))};
  CHECK(loso_folds(two).size() == 2);
  two[Condition::Control].pop_back();
  CHECK_THROWS_AS((void)loso_folds(two), DataError);
}

TEST_CASE("fold indices do not leak and hold out a 10% tail per condition") {
  const auto ds = small_dataset(3, 12.0);
  const auto folds = loso_folds(subjects_of(ds));
  REQUIRE(folds.size() == 3);
  for (const auto& f : folds) {
    const auto idx = split_indices(ds, f);
    std::set<std::string> train_ids, test_ids;
    for (auto i : idx.train) train_ids.insert(ds.meta[i].subject_id);
    for (auto i : idx.validation) train_ids.insert(ds.meta[i].subject_id);
    for (auto i : idx.test) test_ids.insert(ds.meta[i].subject_id);
    for (const auto& t : test_ids) CHECK(train_ids.count(t) == 0);
    CHECK(idx.train.size() + idx.validation.size() + idx.test.size() == ds.size());
    // 2 train subjects x 6 windows = 12 per condition -> 1 validation sample each
    CHECK(idx.validation.size() == 3);
    for (auto v : idx.validation) {
      for (auto t : idx.train)
        if (ds.meta[t].condition == ds.meta[v].condition) CHECK(t < v);
    }
  }
}

TEST_CASE("metrics from definitions") {
  const std::vector<int> t = {0, 0, 1, 1, 2, 2};
  const auto perfect = compute_metrics(t, t);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.confusion[1][1] == 2);
  CHECK(perfect.confusion[0][1] == 0);

  const auto zeros = compute_metrics(t, std::vector<int>(6, 0));
  CHECK(zeros.accuracy == doctest::Approx(1.0 / 3));
  CHECK(zeros.recall == doctest::Approx(1.0 / 3));

  const Confusion c = {{{5, 0, 0}, {0, 4, 1}, {0, 2, 3}}};
  const auto m = metrics_from_confusion(c);
  CHECK(m.accuracy == doctest::Approx(0.8));
  CHECK(m.class_precision[0] == doctest::Approx(1.0));
  CHECK(m.class_precision[1] == doctest::Approx(2.0 / 3));
  CHECK(m.class_precision[2] == doctest::Approx(0.75));

  // Expand the confusion matrix to label lists and recompute per class.
  std::vector<int> tt, pp;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < c[a][b]; ++k) {
        tt.push_back(a);
        pp.push_back(b);
      }
  double f1 = 0;
  for (int k = 0; k < 3; ++k) f1 += scalar_prf(tt, pp, k)[2] / 3;
  CHECK(m.f1 == doctest::Approx(f1).epsilon(1e-15));
  double trace = 0, total = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      total += c[a][b];
      if (a == b) trace += c[a][b];
    }
  CHECK(m.accuracy == trace / total);

  CHECK_THROWS_AS((void)compute_metrics({}, {}), DataError);
  CHECK_THROWS_AS((void)compute_metrics({0}, {3}), DataError);
}

TEST_CASE("zero epochs keeps the initial weights") {
  const auto ds = small_dataset();
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.epochs = 0;
  const auto cfg = tiny_model();
  const auto r = train_model<float>(cfg, ds, folds[0], h);
  CHECK(r.report.epochs.empty());
  const nn::Model<float> init(cfg, fold_seed(h.seed, 0));
  CHECK(nn::model_state(r.model) == nn::model_state(init));
  CHECK(r.report.test.n == r.report.timing.n_test);
  const auto csv = report_csv({r.report});
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.find("0,summary,0,") != std::string::npos);
}

TEST_CASE("training separates a strongly separable dataset") {
  const auto ds = small_dataset(2, 12.0, 4.0);
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.epochs = 30;
  h.batch = 10;
  const auto r = train_model<float>(tiny_model(), ds, folds[0], h);
  REQUIRE(r.report.epochs.size() == 30);
  CHECK(r.report.epochs.back().train_acc >= 0.95);
  CHECK(r.report.config_hash == nn::config_hash(tiny_model()));
}

TEST_CASE("training is reproducible and independent of the thread count") {
  const auto ds = small_dataset();
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.epochs = 3;
  h.batch = 8;
  const auto a = run_folds<float>(tiny_model(), ds, folds, h, 1);
  const auto b = run_folds<float>(tiny_model(), ds, folds, h, 2);
  REQUIRE(a.size() == 2);
  std::vector<RunReport> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(nn::encode_container(nn::model_state(a[i].model, &a[i].optimizer)) ==
          nn::encode_container(nn::model_state(b[i].model, &b[i].optimizer)));
    ra.push_back(a[i].report);
    rb.push_back(b[i].report);
  }
  CHECK(report_csv(ra) == report_csv(rb));
}

TEST_CASE("a class missing from the train split is a data error") {
  auto ds = small_dataset();
  FoldSplit f;
  f.train_subjects = {"expert_01", "nonexpert_01"};
  f.test_subjects = {"expert_02", "nonexpert_02", "control_02"};
  CHECK_THROWS_WITH_AS((void)train_model<float>(tiny_model(), ds, f, {}), doctest::Contains("control"), DataError);
  Hyper bad;
  bad.batch = 0;
  CHECK_THROWS_AS((void)train_model<float>(tiny_model(), ds, loso_folds(subjects_of(ds))[0], bad), ConfigError);
}

TEST_CASE("timing arithmetic") {
  CHECK(std::round(ms_per_sample(0.152, 813) * 1000.0) / 1000.0 == 0.187);
  CHECK_THROWS_AS((void)ms_per_sample(1.0, 0), DataError);
  CHECK(median_ns({5, 1, 3}) == 3);
  CHECK(median_ns({4, 1, 3, 2}) == 2);
  CHECK_THROWS_AS((void)median_ns({}), std::invalid_argument);
  CHECK(quantize_ns(152000000, 813) == 151999293);  // 813 * 186961
  Timing t{0, quantize_ns(152000000, 813), 813};
  CHECK(t.test_ns_per_sample() * 813 == t.test_ns);
  CHECK(ns_as_seconds(1500000001) == "1.500000001");
  CHECK(ns_as_milliseconds(186961) == "0.186961");
}

TEST_CASE("benchmark takes medians and keeps the identity") {
  const auto ds = small_dataset();
  const auto fold = loso_folds(subjects_of(ds))[1];
  Hyper h;
  h.epochs = 1;
  const auto b = benchmark<float>(tiny_model(), ds, fold, h, 3, 5);
  REQUIRE(b.runs.size() == 3);
  std::vector<std::int64_t> tests;
  for (const auto& r : b.runs) tests.push_back(r.test_ns);
  std::sort(tests.begin(), tests.end());
  CHECK(b.median.test_ns == tests[1]);
  CHECK(b.median.test_ns_per_sample() * static_cast<std::int64_t>(b.median.n_test) == b.median.test_ns);
  CHECK(b.single_image_ns.size() == 5);
  CHECK(b.env.numeric_mode == "f32");
  CHECK_THROWS_AS((void)benchmark<float>(tiny_model(), ds, fold, h, 0), ConfigError);
  const auto csv = benchmark_csv(b);
  CHECK(csv.find("median,") != std::string::npos);
}

TEST_CASE("activation dumps") {
  const auto cfg = nn::reference_preset();
  nn::Model<double> model(cfg, 3);
  const auto layers = block1_conv_layers(cfg);
  CHECK(layers == std::vector<std::string>{"conv2d_1", "depthwise_conv2d_1"});

  // Zero input and zero bias give flat maps, which normalize to mid-gray.
  const auto flat = dump_activations(model, nn::Tensor<double>({1, 32, 32, 3}), layers);
  REQUIRE(flat.size() == 10);
  for (const auto& m : flat) {
    for (double v : m.raw) CHECK(v == 0.0);
    for (double v : m.normalized) CHECK(v == 0.5);
  }
  testutil::TempDir dir;
  const auto paths = write_activation_ppms(flat, dir.path());
  REQUIRE(paths.size() == 10);
  const auto ppm = testutil::slurp(paths[0]);
  CHECK(static_cast<unsigned char>(ppm.back()) == 128);

  // Random input: compare against the layer computed independently from the weights.
  nn::Tensor<double> x({1, 32, 32, 3});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : x.data()) v = u(rng);
  const auto maps = dump_activations(model, x, {"conv2d_1"}, 3);
  const nn::Param<double>*kernel = nullptr, *bias = nullptr;
  for (const auto* p : model.params()) {
    if (p->name == "conv2d_1/kernel") kernel = p;
    if (p->name == "conv2d_1/bias") bias = p;
  }
  const auto y = nn::conv2d_forward(x, kernel->value, bias->value, nn::Padding::Same);
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps)
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) CHECK(m.raw[i * 32 + j] == y.at(0, i, j, m.filter));

  CHECK_THROWS_AS((void)dump_activations(model, x, {"conv2d_9"}), ConfigError);
  CHECK_THROWS_AS((void)dump_activations(model, x, {"relu_1"}), ConfigError);
}

TEST_CASE("identity 1x1 convolution dumps the input channel") {
  nn::ModelConfig cfg;
  cfg.input_height = cfg.input_width = 4;
  cfg.layers = nn::parse_layers("b1:conv2d(1x1,3,valid) b2:flatten b2:dense(3) b2:softmax");
  nn::Model<double> model(cfg, 1);
  for (auto* p : model.params())
    if (p->name == "conv2d_1/kernel") {
      p->value.fill(0.0);
      for (std::size_t c = 0; c < 3; ++c) p->value[c * 3 + c] = 1.0;
    }
  nn::Tensor<double> x({1, 4, 4, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 7);
  const auto maps = dump_activations(model, x, {"conv2d_1"});
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps)
    for (std::size_t i = 0; i < 16; ++i) CHECK(m.raw[i] == x[i * 3 + m.filter]);
}

TEST_CASE("ablation suites") {
  const auto base = nn::reference_preset();
  CHECK(block_orderings().size() == 6);
  const auto b = ablation_suite(AblationSuite::B, base);
  REQUIRE(b.size() == 6);
  std::set<std::string> ids;
  for (const auto& m : b) {
    ids.insert(m.id);
    CHECK_NOTHROW((void)nn::infer_shapes(m.config));
    CHECK(nn::count_params(m.config).total == nn::count_params(base).total);
  }
  CHECK(ids.size() == 6);
  CHECK(ids.count("B.relu-pool-bn") == 1);

  const auto c = ablation_suite(AblationSuite::C, base);
  REQUIRE(c.size() == 3);
  const auto base_total = nn::count_params(base).total;
  CHECK(nn::count_params(c[0].config).total == base_total - 320 + 16448);
  CHECK(nn::count_params(c[1].config).total == base_total - 320 + 16448);
  CHECK(nn::count_params(c[2].config).total == base_total + 2 * (16448 - 320));

  const auto a = ablation_suite(AblationSuite::A, base);
  CHECK(a.size() >= 6);
  for (const auto& m : a) CHECK_NOTHROW((void)nn::infer_shapes(m.config));

  const auto ds = small_dataset();
  CHECK(run_ablation({}, ds, loso_folds(subjects_of(ds)), {}).empty());
  Mutation broken{"X.broken", "", base};
  broken.config.layers.pop_back();
  CHECK_THROWS_WITH_AS((void)run_ablation({broken}, ds, loso_folds(subjects_of(ds)), {}), doctest::Contains("X.broken"),
                       ConfigError);
  CHECK_THROWS_AS((void)parse_suite("D"), ConfigError);
}

TEST_CASE("ablation rows per mutation and fold") {
  const auto ds = small_dataset();
  const auto folds = loso_folds(subjects_of(ds));
  Hyper h;
  h.epochs = 1;
  auto suite = ablation_suite(AblationSuite::C, tiny_model());
  REQUIRE(suite.size() == 1);
  const auto rows = run_ablation(suite, ds, folds, h);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mutation_id == "C.b1");
  CHECK(rows[1].report.fold == 1);
  const auto csv = ablation_csv(rows);
  CHECK(csv.find("C.b1,1,") != std::string::npos);
}

}  // TEST_SUITE
