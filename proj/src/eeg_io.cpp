#include "b2d/eeg_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "b2d/error.hpp"
#include "b2d/text.hpp"

namespace b2d {

namespace {

constexpr std::string_view kRecordingMagic = "B2DEEG 1";

bool is_skippable(std::string_view line) {
  const auto t = text::trim(line);
  return t.empty() || t.front() == '#';
}

// Reads the next non-comment line; returns false at EOF.
bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!is_skippable(line)) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Expert: return "expert";
    case Condition::NonExpert: return "nonexpert";
    case Condition::Control: return "control";
  }
  return "?";
}

std::optional<Condition> parse_condition(std::string_view s) {
  for (auto c : kConditions)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

void validate(const EegRecording& rec) {
  if (rec.channels.empty()) throw DataError("recording '" + rec.subject_id + "' has no channels");
  if (rec.data.rows() != rec.channels.size())
    throw DataError("recording '" + rec.subject_id + "': " + std::to_string(rec.data.rows()) +
                    " data rows for " + std::to_string(rec.channels.size()) + " channels");
  if (!(rec.sampling_rate_hz > 0.0) || !std::isfinite(rec.sampling_rate_hz))
    throw DataError("recording '" + rec.subject_id + "': sampling rate must be positive");
  for (double v : rec.data.values())
    if (!std::isfinite(v))
      throw DataError("recording '" + rec.subject_id + "' contains a non-finite value");
  std::set<std::string_view> seen;
  for (const auto& ch : rec.channels)
    if (!seen.insert(ch).second)
      throw DataError("recording '" + rec.subject_id + "': duplicate channel '" + ch + "'");
}

// ---------------------------------------------------------------------------
// Montage

Montage::Montage(std::vector<Electrode> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.label.empty()) throw DataError("montage entry " + std::to_string(i) + " has an empty label");
    if (!(e.radius >= 0.0 && e.radius <= 1.0))
      throw DataError("montage entry '" + e.label + "': radius " + text::format_double(e.radius) +
                      " outside [0,1]");
    if (!(e.angle_deg >= 0.0 && e.angle_deg < 360.0))
      throw DataError("montage entry '" + e.label + "': angle outside [0,360)");
    if (!index_.emplace(e.label, i).second)
      throw DataError("montage: duplicate label '" + e.label + "'");
  }
}

std::optional<std::size_t> Montage::find(std::string_view label) const {
  const auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Montage::resolve(const std::vector<std::string>& labels) const {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    const auto idx = find(l);
    if (!idx) throw DataError("channel '" + l + "' not found in montage");
    out.push_back(*idx);
  }
  return out;
}

Montage load_montage(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open montage file " + path.string());
  const std::string file = path.string();
  std::vector<Electrode> entries;
  std::set<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line, line_no)) {
    const auto fields = text::split(text::trim(line), ',');
    if (fields.size() != 3) throw ParseError(file, line_no, "expected 'label,angle_deg,radius'");
    Electrode e;
    e.label = std::string(text::trim(fields[0]));
    const auto angle = text::parse_double(fields[1]);
    const auto radius = text::parse_double(fields[2]);
    if (e.label.empty()) throw ParseError(file, line_no, "empty electrode label");
    if (!angle || !std::isfinite(*angle)) throw ParseError(file, line_no, "bad angle");
    if (!radius || !std::isfinite(*radius)) throw ParseError(file, line_no, "bad radius");
    if (*radius < 0.0 || *radius > 1.0)
      throw ParseError(file, line_no, "radius " + text::format_double(*radius) + " outside [0,1]");
    if (!labels.insert(e.label).second)
      throw ParseError(file, line_no, "duplicate label '" + e.label + "'");
    e.angle_deg = std::fmod(*angle, 360.0);
    if (e.angle_deg < 0.0) e.angle_deg += 360.0;
    if (e.angle_deg >= 360.0) e.angle_deg = 0.0;
    e.radius = *radius;
    entries.push_back(std::move(e));
  }
  return Montage(std::move(entries));
}

void save_montage(const Montage& montage, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write montage file " + path.string());
  for (const auto& e : montage.entries())
    out << e.label << ',' << text::format_double(e.angle_deg) << ',' << text::format_double(e.radius)
        << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Recording format

EegRecording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open recording " + path.string());
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;

  if (!next_line(in, line, line_no) || text::trim(line) != kRecordingMagic)
    throw ParseError(file, line_no, "missing 'B2DEEG 1' header");

  EegRecording rec;
  if (!next_line(in, line, line_no)) throw ParseError(file, line_no, "missing metadata line");
  bool have_subject = false, have_condition = false, have_fs = false;
  std::istringstream meta{std::string(text::trim(line))};
  std::string token;
  while (meta >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ParseError(file, line_no, "malformed metadata token '" + token + "'");
    const std::string_view key = std::string_view(token).substr(0, eq);
    const std::string_view value = std::string_view(token).substr(eq + 1);
    if (key == "subject") {
      if (value.empty()) throw ParseError(file, line_no, "empty subject id");
      rec.subject_id = std::string(value);
      have_subject = true;
    } else if (key == "condition") {
      const auto c = parse_condition(value);
      if (!c) throw ParseError(file, line_no, "unknown condition label '" + std::string(value) + "'");
      rec.condition = *c;
      have_condition = true;
    } else if (key == "fs") {
      const auto fs = text::parse_double(value);
      if (!fs || !(*fs > 0.0) || !std::isfinite(*fs))
        throw ParseError(file, line_no, "invalid sampling rate '" + std::string(value) + "'");
      rec.sampling_rate_hz = *fs;
      have_fs = true;
    } else {
      throw ParseError(file, line_no, "unknown metadata key '" + std::string(key) + "'");
    }
  }
  if (!have_subject || !have_condition || !have_fs)
    throw ParseError(file, line_no, "metadata line needs subject=, condition= and fs=");

  if (!next_line(in, line, line_no)) throw ParseError(file, line_no, "missing channel label line");
  for (auto label : text::split(text::trim(line), ',')) {
    label = text::trim(label);
    if (label.empty()) throw ParseError(file, line_no, "empty channel label");
    rec.channels.emplace_back(label);
  }
  {
    std::set<std::string_view> seen;
    for (const auto& ch : rec.channels)
      if (!seen.insert(ch).second) throw ParseError(file, line_no, "duplicate channel label '" + ch + "'");
  }

  const std::size_t n_ch = rec.channels.size();
  std::vector<double> samples;  // sample-major while reading
  while (next_line(in, line, line_no)) {
    const auto fields = text::split(text::trim(line), ',');
    if (fields.size() != n_ch)
      throw ParseError(file, line_no,
                       "row has " + std::to_string(fields.size()) + " values, expected " + std::to_string(n_ch));
    for (const auto f : fields) {
      const auto v = text::parse_double(f);
      if (!v) throw ParseError(file, line_no, "invalid number '" + std::string(text::trim(f)) + "'");
      if (!std::isfinite(*v)) throw ParseError(file, line_no, "non-finite value");
      samples.push_back(*v);
    }
  }

  const std::size_t n_samples = samples.size() / n_ch;
  rec.data = Matrix(n_ch, n_samples);
  for (std::size_t t = 0; t < n_samples; ++t)
    for (std::size_t c = 0; c < n_ch; ++c) rec.data(c, t) = samples[t * n_ch + c];
  validate(rec);
  return rec;
}

void write_recording(const EegRecording& rec, const std::filesystem::path& path) {
  validate(rec);
  for (const auto& ch : rec.channels)
    if (ch.find_first_of(", \t\r\n#") != std::string::npos)
      throw DataError("channel label '" + ch + "' cannot be written (contains a separator)");
  if (rec.subject_id.find_first_of(" \t\r\n=") != std::string::npos)
    throw DataError("subject id '" + rec.subject_id + "' cannot be written");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write recording " + path.string());
  out << kRecordingMagic << '\n';
  out << "subject=" << rec.subject_id << " condition=" << to_string(rec.condition)
      << " fs=" << text::format_double(rec.sampling_rate_hz) << '\n';
  for (std::size_t c = 0; c < rec.channels.size(); ++c) out << (c ? "," : "") << rec.channels[c];
  out << '\n';
  std::string row;
  for (std::size_t t = 0; t < rec.n_samples(); ++t) {
    row.clear();
    for (std::size_t c = 0; c < rec.n_channels(); ++c) {
      if (c) row += ',';
      row += text::format_double(rec.data(c, t));
    }
    row += '\n';
    out << row;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic generator

void validate(const SyntheticSpec& spec) {
  if (spec.n_subjects_per_condition < 1) throw ConfigError("n_subjects_per_condition must be >= 1");
  if (!(spec.sampling_rate_hz > 0.0)) throw ConfigError("fs must be > 0");
  if (!(spec.duration_s >= kLargestWindowS))
    throw ConfigError("duration_s must be >= " + text::format_double(kLargestWindowS));
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma))
    throw ConfigError("noise_sigma must be >= 0");
  if (!(spec.background_gain >= 0.0)) throw ConfigError("background_gain must be >= 0");
  if (!(spec.amplitude_jitter >= 0.0 && spec.amplitude_jitter < 1.0))
    throw ConfigError("amplitude_jitter must be in [0,1)");
  if (!(spec.focus_jitter >= 0.0)) throw ConfigError("focus_jitter must be >= 0");
  for (const auto& [cond, gains] : spec.class_band_gains)
    for (std::size_t b = 0; b < gains.size(); ++b)
      if (!(gains[b] >= 0.0) || !std::isfinite(gains[b]))
        throw ConfigError("gain." + std::string(to_string(cond)) + "." +
                          std::string(to_string(kBands[b].name)) + " must be >= 0");
  for (const auto& [cond, f] : spec.class_focus)
    if (!(f.width > 0.0)) throw ConfigError("focus." + std::string(to_string(cond)) + " width must be > 0");
  const double nyquist = 0.5 * spec.sampling_rate_hz;
  if (kBands.back().center_hz() >= nyquist) throw ConfigError("fs too low for the alpha2 band");
}

std::vector<EegRecording> generate_synthetic(const SyntheticSpec& spec, const Montage& montage,
                                             std::uint64_t seed) {
  validate(spec);
  if (montage.size() == 0) throw ConfigError("synthetic generation needs a non-empty montage");

  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sampling_rate_hz));
  const std::size_t n_ch = montage.size();
  std::vector<double> ex(n_ch), ey(n_ch);
  for (std::size_t c = 0; c < n_ch; ++c) {
    const auto& e = montage.entries()[c];
    const double a = e.angle_deg * std::numbers::pi / 180.0;
    ex[c] = e.radius * std::sin(a);
    ey[c] = e.radius * std::cos(a);
  }
  std::vector<std::string> labels;
  for (const auto& e : montage.entries()) labels.push_back(e.label);

  std::vector<EegRecording> out;
  int subject_counter = 0;
  for (auto cond : kConditions) {
    BandGains gains{1.0, 1.0, 1.0, 1.0};
    if (auto it = spec.class_band_gains.find(cond); it != spec.class_band_gains.end()) gains = it->second;
    const auto focus_it = spec.class_focus.find(cond);

    for (int s = 0; s < spec.n_subjects_per_condition; ++s, ++subject_counter) {
      // Each subject draws from its own stream so generation order does not matter.
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(subject_counter), 0x62326465u};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
      std::uniform_real_distribution<double> jitter_dist(1.0 - spec.amplitude_jitter,
                                                         1.0 + spec.amplitude_jitter);
      std::normal_distribution<double> unit_normal(0.0, 1.0);

      double fx = 0.0, fy = 0.0;
      if (focus_it != spec.class_focus.end()) {
        fx = focus_it->second.x + spec.focus_jitter * unit_normal(rng);
        fy = focus_it->second.y + spec.focus_jitter * unit_normal(rng);
      }

      // amplitude[c][b], phase[c][b]
      std::vector<std::array<double, 4>> amp(n_ch), phase(n_ch);
      for (std::size_t c = 0; c < n_ch; ++c) {
        double weight = 1.0;
        if (focus_it != spec.class_focus.end()) {
          const double w = focus_it->second.width;
          const double d2 = (ex[c] - fx) * (ex[c] - fx) + (ey[c] - fy) * (ey[c] - fy);
          weight = std::exp(-d2 / (2.0 * w * w));
        }
        for (std::size_t b = 0; b < 4; ++b) {
          const double base = (focus_it != spec.class_focus.end())
                                  ? (1.0 - weight) * spec.background_gain + weight * gains[b]
                                  : gains[b];
          amp[c][b] = base * (spec.amplitude_jitter > 0.0 ? jitter_dist(rng) : 1.0);
          phase[c][b] = phase_dist(rng);
        }
      }

      EegRecording rec;
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%02d", std::string(to_string(cond)).c_str(), s + 1);
      rec.subject_id = id;
      rec.condition = cond;
      rec.sampling_rate_hz = spec.sampling_rate_hz;
      rec.channels = labels;
      rec.data = Matrix(n_ch, n_samples);
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (std::size_t c = 0; c < n_ch; ++c) {
        auto row = rec.data.row(c);
        for (std::size_t t = 0; t < n_samples; ++t) {
          const double time = static_cast<double>(t) / spec.sampling_rate_hz;
          double v = 0.0;
          for (std::size_t b = 0; b < 4; ++b)
            if (amp[c][b] != 0.0)
              v += amp[c][b] * std::sin(2.0 * std::numbers::pi * kBands[b].center_hz() * time + phase[c][b]);
          if (spec.noise_sigma > 0.0) v += noise(rng);
          row[t] = v;
        }
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace b2d
