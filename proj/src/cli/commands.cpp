#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "b2d/cli.hpp"
#include "b2d/eeg_io.hpp"
#include "b2d/error.hpp"
#include "b2d/nn/container.hpp"
#include "b2d/pipeline.hpp"
#include "b2d/text.hpp"
#include "b2d/topomap.hpp"

namespace b2d::cli {

namespace {

struct KeyDef {
  std::string key;
  std::string def;
  std::string help;
  bool flag = false;  // boolean switch without a value
};

const std::vector<KeyDef> kCommonKeys = {
    {"config", "", "key=value configuration file; flags override its entries"},
};

const std::vector<KeyDef> kSynthKeys = {
    {"out", "", "output directory for .b2deeg files"},
    {"montage", B2D_DATA_DIR "/biosemi64.b2dloc", "electrode montage (.b2dloc)"},
    {"seed", "1", "random seed"},
    {"synth.subjects", "12", "subjects per condition"},
    {"synth.duration_s", "30", "recording length in seconds"},
    {"synth.fs", "256", "sampling rate in Hz"},
    {"synth.noise_sigma", "1", "white-noise standard deviation"},
    {"synth.gain.expert", "2,2,1,1", "theta1,theta2,alpha1,alpha2 amplitude gains"},
    {"synth.gain.nonexpert", "2,1,2,1", "theta1,theta2,alpha1,alpha2 amplitude gains"},
    {"synth.gain.control", "1,1,1,1", "theta1,theta2,alpha1,alpha2 amplitude gains"},
    {"synth.focus.expert", "0,0.5,0.35", "x,y,width of the gain focus, or 'none' for uniform gains"},
    {"synth.focus.nonexpert", "0,-0.5,0.35", "x,y,width of the gain focus, or 'none'"},
    {"synth.focus.control", "none", "x,y,width of the gain focus, or 'none'"},
    {"synth.background_gain", "1", "gain far from a focus"},
    {"synth.amplitude_jitter", "0.2", "per-subject amplitude spread j, factors in [1-j,1+j]"},
    {"synth.focus_jitter", "0.05", "per-subject focus position standard deviation"},
};

const std::vector<KeyDef> kImagesKeys = {
    {"recordings", "", "directory of .b2deeg recordings"},
    {"montage", B2D_DATA_DIR "/biosemi64.b2dloc", "electrode montage (.b2dloc)"},
    {"out", "", "output directory"},
    {"name", "", "output file stem (default <band>_<window>s)"},
    {"band", "theta1", "theta1|theta2|alpha1|alpha2"},
    {"window_s", "2", "window length in seconds"},
    {"welch.seg_len", "256", "Welch segment length (power of two)"},
    {"welch.overlap", "0.5", "Welch segment overlap in [0,1)"},
    {"welch.taper", "hamming", "hamming|hann|boxcar"},
    {"ppm", "", "also export every image as PPM under <out>/ppm", true},
};

const std::vector<KeyDef> kModelKeys = {
    {"model.preset", nn::kReferencePresetName, "named architecture"},
    {"model.layers", "", "inline layer list, overrides the preset (see format in README)"},
    {"model.dense_width", "204", "width of the hidden dense layer of the preset"},
};

const std::vector<KeyDef> kHyperKeys = {
    {"batch", "30", "mini-batch size"},
    {"epochs", "30", "training epochs"},
    {"lr", "0.001", "learning rate"},
    {"optimizer", "adam", "adam|sgd"},
    {"seed", "1", "random seed"},
    {"threads", "1", "worker threads (folds run in parallel)"},
    {"strict", "", "sequential, bit-deterministic execution (forces threads=1)", true},
    {"numeric_mode", "f32", "f32|f64"},
    {"validation_fraction", "0.1", "per-condition tail of the training samples held out"},
};

const std::vector<KeyDef> kDatasetKeys = {
    {"dataset", "", "dataset manifest (.b2dmanifest)"},
};

std::vector<KeyDef> concat(std::initializer_list<const std::vector<KeyDef>*> groups,
                           std::vector<KeyDef> extra = {}) {
  std::vector<KeyDef> out;
  std::set<std::string> seen;
  for (const auto* g : groups)
    for (const auto& k : *g)
      if (seen.insert(k.key).second) out.push_back(k);
  for (auto& k : extra)
    if (seen.insert(k.key).second) out.push_back(std::move(k));
  return out;
}

struct Command {
  std::string name;
  std::string help;
  std::vector<KeyDef> keys;
};

std::vector<Command> commands() {
  return {
      {"synth", "generate synthetic recordings", concat({&kCommonKeys, &kSynthKeys})},
      {"images", "render spectral topographic images and write a dataset", concat({&kCommonKeys, &kImagesKeys})},
      {"train", "leave-one-subject-out training",
       concat({&kCommonKeys, &kDatasetKeys, &kModelKeys, &kHyperKeys},
              {{"out", "", "output directory for weights and reports"},
               {"fold", "-1", "train a single fold (-1 = all folds)"}})},
      {"eval", "evaluate saved weights",
       concat({&kCommonKeys, &kDatasetKeys, &kModelKeys},
              {{"weights", "", "weights file (.b2dw)"},
               {"fold", "-1", "evaluate on this fold's test subjects (-1 = whole dataset)"},
               {"batch", "30", "inference batch size"},
               {"numeric_mode", "f32", "f32|f64"},
               {"out", "", "optional directory for metrics.csv"},
               {"activations", "", "directory for activation maps of the first evaluated image"},
               {"layers", "", "comma-separated layers to dump (default: block-1 convolutions)"},
               {"filters", "5", "filters per dumped layer"}})},
      {"bench", "time training and inference",
       concat({&kCommonKeys, &kDatasetKeys, &kModelKeys, &kHyperKeys},
              {{"fold", "0", "fold to benchmark"},
               {"repeats", "3", "train/test repetitions (median reported)"},
               {"latency_repeats", "50", "single-image inference repetitions"},
               {"out", "", "optional directory for bench.csv"}})},
      {"ablate", "run an ablation suite",
       concat({&kCommonKeys, &kDatasetKeys, &kModelKeys, &kHyperKeys},
              {{"suite", "C", "A (filters/kernels), B (layer order), C (depthwise -> conv)"},
               {"folds", "-1", "number of folds to run (-1 = all)"},
               {"out", "", "output directory for ablation.csv"}})},
      {"params", "trainable parameter counts",
       concat({&kCommonKeys, &kModelKeys},
              {{"solve_width", "", "search dense widths and paddings for this total"},
               {"max_width", "4096", "largest dense width searched"}})},
  };
}

std::set<std::string> all_keys() {
  std::set<std::string> out;
  for (const auto& c : commands())
    for (const auto& k : c.keys) out.insert(k.key);
  return out;
}

std::string hyphenated(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

// Resolved key -> value after applying defaults, config file and flags.
class Settings {
 public:
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw std::logic_error("unregistered key " + key);
    return it->second;
  }
  bool has(const std::string& key) const { return !str(key).empty(); }
  std::int64_t integer(const std::string& key) const {
    const auto v = text::parse_int(str(key));
    if (!v) throw ConfigError(key + ": expected an integer, got '" + str(key) + "'");
    return *v;
  }
  double real(const std::string& key) const {
    const auto v = text::parse_double(str(key));
    if (!v || !std::isfinite(*v)) throw ConfigError(key + ": expected a number, got '" + str(key) + "'");
    return *v;
  }
  bool boolean(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty() || v == "false" || v == "0" || v == "no") return false;
    if (v == "true" || v == "1" || v == "yes") return true;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }
  std::filesystem::path existing_path(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required setting '" + key + "'");
    std::filesystem::path p(str(key));
    if (!std::filesystem::exists(p)) throw ConfigError(key + ": no such file or directory: " + p.string());
    return p;
  }
  std::filesystem::path required(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required setting '" + key + "'");
    return str(key);
  }
};

// ---------------------------------------------------------------- builders

std::vector<double> number_list(const Settings& s, const std::string& key, std::size_t n) {
  std::vector<double> out;
  for (auto f : text::split(s.str(key), ',')) {
    const auto v = text::parse_double(f);
    if (!v || !std::isfinite(*v)) throw ConfigError(key + ": '" + s.str(key) + "' is not a list of numbers");
    out.push_back(*v);
  }
  if (out.size() != n) throw ConfigError(key + ": expected " + std::to_string(n) + " comma-separated numbers");
  return out;
}

SyntheticSpec synth_spec(const Settings& s) {
  SyntheticSpec spec;
  spec.n_subjects_per_condition = static_cast<int>(s.integer("synth.subjects"));
  spec.duration_s = s.real("synth.duration_s");
  spec.sampling_rate_hz = s.real("synth.fs");
  spec.noise_sigma = s.real("synth.noise_sigma");
  spec.background_gain = s.real("synth.background_gain");
  spec.amplitude_jitter = s.real("synth.amplitude_jitter");
  spec.focus_jitter = s.real("synth.focus_jitter");
  for (auto c : kConditions) {
    const std::string name(to_string(c));
    const auto g = number_list(s, "synth.gain." + name, 4);
    spec.class_band_gains[c] = {g[0], g[1], g[2], g[3]};
    const std::string fkey = "synth.focus." + name;
    if (s.str(fkey) != "none" && s.has(fkey)) {
      const auto f = number_list(s, fkey, 3);
      spec.class_focus[c] = {f[0], f[1], f[2]};
    }
  }
  validate(spec);
  return spec;
}

WelchParams welch_params(const Settings& s) {
  WelchParams w;
  const auto seg = s.integer("welch.seg_len");
  if (seg < 2 || !is_power_of_two(static_cast<std::size_t>(seg))) throw ConfigError("welch.seg_len must be a power of two >= 2");
  w.seg_len = static_cast<std::size_t>(seg);
  w.overlap = s.real("welch.overlap");
  if (!(w.overlap >= 0.0 && w.overlap < 1.0)) throw ConfigError("welch.overlap must be in [0,1)");
  const auto& t = s.str("welch.taper");
  if (t == "hamming") w.taper = Taper::Hamming;
  else if (t == "hann") w.taper = Taper::Hann;
  else if (t == "boxcar") w.taper = Taper::Boxcar;
  else throw ConfigError("welch.taper must be hamming, hann or boxcar");
  return w;
}

nn::ModelConfig model_config(const Settings& s) {
  if (s.has("model.layers")) {
    nn::ModelConfig cfg;
    cfg.name = "custom";
    cfg.layers = nn::parse_layers(s.str("model.layers"));
    (void)nn::infer_shapes(cfg);
    return cfg;
  }
  if (s.str("model.preset") != nn::kReferencePresetName) return nn::preset_by_name(s.str("model.preset"));
  nn::ReferenceOptions o;
  const auto w = s.integer("model.dense_width");
  if (w < 1) throw ConfigError("model.dense_width must be >= 1");
  o.dense_width = static_cast<int>(w);
  return nn::reference_preset(o);
}

Hyper hyper_params(const Settings& s) {
  Hyper h;
  h.batch = static_cast<int>(s.integer("batch"));
  h.epochs = static_cast<int>(s.integer("epochs"));
  h.lr = s.real("lr");
  const auto seed = s.integer("seed");
  if (seed < 0) throw ConfigError("seed must be >= 0");
  h.seed = static_cast<std::uint64_t>(seed);
  const auto& opt = s.str("optimizer");
  if (opt == "adam") h.optimizer = nn::OptimizerKind::Adam;
  else if (opt == "sgd") h.optimizer = nn::OptimizerKind::Sgd;
  else throw ConfigError("optimizer must be adam or sgd");
  validate(h);
  return h;
}

int threads_of(const Settings& s) {
  const auto t = s.integer("threads");
  if (t < 1) throw ConfigError("threads must be >= 1");
  return s.boolean("strict") ? 1 : static_cast<int>(t);
}

bool use_f64(const Settings& s) {
  const auto& m = s.str("numeric_mode");
  if (m == "f32") return false;
  if (m == "f64") return true;
  throw ConfigError("numeric_mode must be f32 or f64");
}

std::vector<FoldSplit> folds_of(const Settings& s, const ImageDataset& ds) {
  auto folds = loso_folds(subjects_of(ds));
  const double vf = s.values.count("validation_fraction") ? s.real("validation_fraction") : 0.1;
  if (!(vf >= 0.0 && vf < 1.0)) throw ConfigError("validation_fraction must be in [0,1)");
  for (auto& f : folds) f.validation_fraction = vf;
  return folds;
}

FoldSplit fold_at(const std::vector<FoldSplit>& folds, std::int64_t k) {
  if (k < 0 || static_cast<std::size_t>(k) >= folds.size())
    throw ConfigError("fold " + std::to_string(k) + " out of range [0," + std::to_string(folds.size()) + ")");
  return folds[static_cast<std::size_t>(k)];
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string resolved_text(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : s.values)
    if (k != "config" && k != "out") out += k + "=" + v + "\n";
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Settings& s, std::ostream& out) {
  const auto spec = synth_spec(s);
  const auto montage = load_montage(s.existing_path("montage"));
  const auto dir = s.required("out");
  const auto seed = s.integer("seed");
  if (seed < 0) throw ConfigError("seed must be >= 0");
  const auto recs = generate_synthetic(spec, montage, static_cast<std::uint64_t>(seed));
  std::filesystem::create_directories(dir);
  std::map<Condition, int> counts;
  for (const auto& r : recs) {
    write_recording(r, dir / (r.subject_id + ".b2deeg"));
    ++counts[r.condition];
  }
  for (auto c : kConditions) out << to_string(c) << ": " << counts[c] << " recordings\n";
  out << "wrote " << recs.size() << " files to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_images(const Settings& s, std::ostream& out) {
  const auto rec_dir = s.existing_path("recordings");
  const auto montage_path = s.existing_path("montage");
  const auto dir = s.required("out");
  const auto band = parse_band_name(s.str("band"));
  const double window_s = s.real("window_s");
  if (!(window_s > 0.0)) throw ConfigError("window_s must be > 0");
  const auto welch = welch_params(s);

  const auto montage = load_montage(montage_path);
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(rec_dir))
    if (e.is_regular_file() && e.path().extension() == ".b2deeg") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .b2deeg recordings in " + rec_dir.string());
  std::vector<EegRecording> recs;
  for (const auto& f : files) recs.push_back(read_recording(f));

  ImageDataset ds;
  try {
    ds = build_dataset(recs, montage, band, window_s, welch);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string stem = s.has("name") ? s.str("name") : std::string(to_string(band)) + "_" + text::format_double(window_s) + "s";
  const auto manifest = write_dataset(ds, dir, stem);
  if (s.boolean("ppm")) {
    const auto ppm_dir = dir / "ppm";
    std::filesystem::create_directories(ppm_dir);
    constexpr std::size_t px = static_cast<std::size_t>(kImageSize) * kImageSize * 3;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& m = ds.meta[i];
      char name[160];
      std::snprintf(name, sizeof name, "%s_%s_w%03zu.ppm", m.subject_id.c_str(), std::string(to_string(band)).c_str(),
                    m.window_index);
      write_ppm(ppm_dir / name, std::span<const float>(ds.images.ptr() + i * px, px), kImageSize, kImageSize);
    }
  }
  out << "images: " << ds.size() << " from " << recs.size() << " recordings\n";
  out << "manifest: " << manifest.string() << "\n";
  std::ostringstream sum;
  sum << std::hex << std::setw(16) << std::setfill('0') << dataset_checksum(ds);
  out << "checksum: " << sum.str() << "\n";
  return kExitOk;
}

template <typename T>
int train_typed(const Settings& s, std::ostream& out) {
  const auto cfg = model_config(s);
  const auto hyper = hyper_params(s);
  const int threads = threads_of(s);
  const auto dir = s.required("out");
  const auto ds = read_dataset(s.existing_path("dataset"));
  validate(ds);
  auto folds = folds_of(s, ds);
  const auto k = s.integer("fold");
  if (k >= 0) folds = {fold_at(folds, k)};

  const auto results = run_folds<T>(cfg, ds, folds, hyper, threads);
  std::filesystem::create_directories(dir);
  std::vector<RunReport> reports;
  double acc = 0.0;
  for (const auto& r : results) {
    char name[64];
    std::snprintf(name, sizeof name, "weights_fold_%02d.b2dw", r.report.fold);
    nn::save_weights(r.model, dir / name, &r.optimizer);
    reports.push_back(r.report);
    acc += r.report.test.accuracy;
    out << "fold " << std::setw(2) << r.report.fold << "  test_acc " << fmt(r.report.test.accuracy) << "  f1 "
        << fmt(r.report.test.f1) << "  train_s " << fmt(r.report.timing.train_s(), 3) << "\n";
  }
  write_text(dir / "report.csv", report_csv(reports));
  write_text(dir / "timing.csv", timing_csv(reports));
  write_text(dir / "model.txt", cfg.name + "\n" + nn::format_layers(cfg) + "\n");
  write_text(dir / "resolved.cfg", resolved_text(s));
  out << "mean test accuracy over " << results.size() << " fold(s): " << fmt(acc / static_cast<double>(results.size()))
      << "\n";
  return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
  return use_f64(s) ? train_typed<double>(s, out) : train_typed<float>(s, out);
}

template <typename T>
int eval_typed(const Settings& s, std::ostream& out) {
  const auto cfg = model_config(s);
  const auto ds = read_dataset(s.existing_path("dataset"));
  nn::Model<T> model(cfg, 0);
  nn::load_weights(model, s.existing_path("weights"));
  std::vector<std::size_t> idx;
  const auto k = s.integer("fold");
  if (k >= 0) {
    idx = split_indices(ds, fold_at(folds_of(s, ds), k)).test;
  } else {
    for (std::size_t i = 0; i < ds.size(); ++i) idx.push_back(i);
  }
  const auto batch = s.integer("batch");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  const auto m = evaluate(model, ds, idx, static_cast<int>(batch));
  out << "samples " << m.n << "\naccuracy " << fmt(m.accuracy) << "\nprecision " << fmt(m.precision) << "\nrecall "
      << fmt(m.recall) << "\nf1 " << fmt(m.f1) << "\n"
      << confusion_text(m.confusion);
  if (s.has("out")) {
    std::ostringstream csv;
    csv << "n,accuracy,precision,recall,f1\n"
        << m.n << ',' << text::format_double(m.accuracy) << ',' << text::format_double(m.precision) << ','
        << text::format_double(m.recall) << ',' << text::format_double(m.f1) << "\n";
    write_text(s.required("out") / "metrics.csv", csv.str());
  }
  if (s.has("activations")) {
    std::vector<std::string> layers;
    for (auto l : text::split(s.str("layers"), ','))
      if (!text::trim(l).empty()) layers.emplace_back(text::trim(l));
    if (layers.empty()) layers = block1_conv_layers(cfg);
    const auto filters = s.integer("filters");
    if (filters < 1) throw ConfigError("filters must be >= 1");
    nn::Tensor<float> img = gather_images(ds, {idx.front()});
    std::vector<ActivationMap> maps;
    if constexpr (std::is_same_v<T, float>)
      maps = dump_activations(model, img, layers, static_cast<std::size_t>(filters));
    else
      maps = dump_activations(model, img.cast<T>(), layers, static_cast<std::size_t>(filters));
    const auto paths = write_activation_ppms(maps, s.required("activations"));
    out << "activation maps: " << paths.size() << " written to " << s.str("activations") << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Settings& s, std::ostream& out) {
  return use_f64(s) ? eval_typed<double>(s, out) : eval_typed<float>(s, out);
}

template <typename T>
int bench_typed(const Settings& s, std::ostream& out) {
  const auto cfg = model_config(s);
  const auto hyper = hyper_params(s);
  const int threads = threads_of(s);
  const auto ds = read_dataset(s.existing_path("dataset"));
  const auto fold = fold_at(folds_of(s, ds), s.integer("fold"));
  const auto repeats = s.integer("repeats");
  const auto latency = s.integer("latency_repeats");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (latency < 1) throw ConfigError("latency_repeats must be >= 1");
  auto res = benchmark<T>(cfg, ds, fold, hyper, static_cast<int>(repeats), static_cast<int>(latency));
  res.env = describe_environment(threads, std::is_same_v<T, float> ? "f32" : "f64");
  out << "environment: threads=" << res.env.threads << " numeric_mode=" << res.env.numeric_mode
      << " hardware_threads=" << res.env.hardware_threads << " build=" << res.env.build_type << " compiler=\""
      << res.env.compiler << "\"\n";
  out << "model: " << cfg.name << " (" << nn::count_params(cfg).total << " trainable parameters)\n";
  out << benchmark_csv(res);
  out << "single_image_ms (median of " << res.single_image_ns.size()
      << "): " << ns_as_milliseconds(res.single_image_median_ns) << "\n";
  if (s.has("out")) write_text(s.required("out") / "bench.csv", benchmark_csv(res));
  return kExitOk;
}

int cmd_bench(const Settings& s, std::ostream& out) {
  return use_f64(s) ? bench_typed<double>(s, out) : bench_typed<float>(s, out);
}

int cmd_ablate(const Settings& s, std::ostream& out) {
  const auto cfg = model_config(s);
  const auto hyper = hyper_params(s);
  const int threads = threads_of(s);
  if (use_f64(s)) throw ConfigError("ablations run in f32 only");
  const auto suite = ablation_suite(parse_suite(s.str("suite")), cfg);
  const auto dir = s.required("out");
  const auto ds = read_dataset(s.existing_path("dataset"));
  auto folds = folds_of(s, ds);
  const auto n = s.integer("folds");
  if (n == 0 || n < -1) throw ConfigError("folds must be -1 or >= 1");
  if (n > 0 && static_cast<std::size_t>(n) < folds.size()) folds.resize(static_cast<std::size_t>(n));
  const auto rows = run_ablation(suite, ds, folds, hyper, threads);
  write_text(dir / "ablation.csv", ablation_csv(rows));
  std::map<std::string, std::pair<double, int>> mean;
  for (const auto& r : rows) {
    mean[r.mutation_id].first += r.report.test.accuracy;
    ++mean[r.mutation_id].second;
  }
  out << std::left << std::setw(24) << "mutation" << std::setw(12) << "params" << "mean_test_acc\n";
  for (const auto& m : suite) {
    const auto& [sum, cnt] = mean[m.id];
    out << std::left << std::setw(24) << m.id << std::setw(12) << nn::count_params(m.config).total
        << (cnt ? fmt(sum / cnt) : std::string("-")) << "\n";
  }
  out << "wrote " << (dir / "ablation.csv").string() << "\n";
  return kExitOk;
}

int cmd_params(const Settings& s, std::ostream& out) {
  const auto cfg = model_config(s);
  const auto report = nn::count_params(cfg);
  out << std::left << std::setw(28) << "layer" << std::setw(12) << "kind" << "params\n";
  for (const auto& l : report.layers)
    out << std::left << std::setw(28) << l.name << std::setw(12) << nn::to_string(l.kind) << l.trainable << "\n";
  out << "total " << report.total << "\n";
  out << "delta vs target 76627: " << std::showpos << report.total - nn::kTargetParams << std::noshowpos << "\n";
  out << "share of VGG16 (" << nn::kVgg16Params << "): "
      << fmt(100.0 * static_cast<double>(report.total) / static_cast<double>(nn::kVgg16Params), 3) << "%\n";

  if (s.has("solve_width")) {
    const auto target = s.integer("solve_width");
    const auto max_w = s.integer("max_width");
    if (target < 0) throw ConfigError("solve_width must be >= 0");
    if (max_w < 1) throw ConfigError("max_width must be >= 1");
    if (s.has("model.layers") || s.str("model.preset") != nn::kReferencePresetName)
      throw ConfigError("solve_width searches the reference preset only");
    const auto sol = nn::solve_dense_width({}, target, static_cast<int>(max_w));
    out << "search: dense width 1.." << max_w << " x 64 padding schemes x block-3 pool on/off\n";
    if (!sol.exact.empty()) {
      out << "exact matches for " << target << ": " << sol.exact.size() << "\n";
      for (const auto& c : sol.exact)
        out << "  padding=" << c.padding_scheme << " block3_pool=" << (c.block3_pool ? "yes" : "no")
            << " dense_width=" << c.dense_width << " total=" << c.total << "\n";
    } else {
      out << "no configuration attains " << target << "; nearest:\n";
      for (const auto& c : sol.nearest)
        out << "  padding=" << c.padding_scheme << " block3_pool=" << (c.block3_pool ? "yes" : "no")
            << " dense_width=" << c.dense_width << " total=" << c.total << " delta=" << std::showpos << c.delta
            << std::noshowpos << "\n";
    }
  }
  return kExitOk;
}

int dispatch(const std::string& name, const Settings& s, std::ostream& out) {
  if (name == "synth") return cmd_synth(s, out);
  if (name == "images") return cmd_images(s, out);
  if (name == "train") return cmd_train(s, out);
  if (name == "eval") return cmd_eval(s, out);
  if (name == "bench") return cmd_bench(s, out);
  if (name == "ablate") return cmd_ablate(s, out);
  if (name == "params") return cmd_params(s, out);
  throw std::logic_error("unknown command " + name);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Brain2Depth: EEG spectral topography images and a lightweight CNN", "brain2depth"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  const auto cmds = commands();
  // Stable storage for raw flag values, per command and key.
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    subs[c.name] = sub;
    for (const auto& k : c.keys) {
      std::string names = "--" + k.key;
      if (hyphenated(k.key) != k.key) names += ",--" + hyphenated(k.key);
      const std::string help = k.help + (k.def.empty() || k.flag ? "" : " [default: " + k.def + "]");
      CLI::Option* o = k.flag ? sub->add_flag(names, help) : sub->add_option(names, raw[c.name][k.key], help);
      opts[c.name][k.key] = o;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help raises CallForHelp from within the subcommand.
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n" << "run 'brain2depth --help' for usage\n";
    return kExitConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const Command& cmd = *std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == name; });

  try {
    std::map<std::string, std::string> file;
    if (opts[name]["config"]->count() > 0) {
      file = read_config_file(raw[name]["config"]);
      const auto known = all_keys();
      for (const auto& [k, v] : file)
        if (!known.count(k) || k == "config") throw ConfigError(raw[name]["config"] + ": unknown key '" + k + "'");
    }
    Settings s;
    for (const auto& k : cmd.keys) {
      std::string v = k.def;
      if (auto it = file.find(k.key); it != file.end()) v = it->second;
      if (opts[name][k.key]->count() > 0) v = k.flag ? "true" : raw[name][k.key];
      s.values[k.key] = v;
    }
    return dispatch(name, s, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace b2d::cli
