#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "b2d/band.hpp"
#include "b2d/matrix.hpp"

namespace b2d {

enum class Condition { Expert = 0, NonExpert = 1, Control = 2 };

inline constexpr std::array<Condition, 3> kConditions = {Condition::Expert, Condition::NonExpert,
                                                         Condition::Control};

std::string_view to_string(Condition c);
// Accepts only "expert", "nonexpert", "control".
std::optional<Condition> parse_condition(std::string_view s);

// Class label used by datasets and models: expert=0, nonexpert=1, control=2.
inline constexpr int label_of(Condition c) { return static_cast<int>(c); }

struct EegRecording {
  std::string subject_id;
  Condition condition = Condition::Control;
  double sampling_rate_hz = 256.0;
  std::vector<std::string> channels;
  Matrix data;  // [n_channels x n_samples], microvolts

  std::size_t n_channels() const { return channels.size(); }
  std::size_t n_samples() const { return data.cols(); }
  bool operator==(const EegRecording&) const = default;
};

// Throws DataError when an invariant of EegRecording does not hold.
void validate(const EegRecording& rec);

struct Electrode {
  std::string label;
  double angle_deg = 0.0;  // clockwise from the nose, [0, 360)
  double radius = 0.0;     // 0 = vertex, 1 = rim of the head circle
  bool operator==(const Electrode&) const = default;
};

class Montage {
 public:
  Montage() = default;
  // Validates: unique labels, radius in [0,1], angle in [0,360).
  explicit Montage(std::vector<Electrode> entries);

  const std::vector<Electrode>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::optional<std::size_t> find(std::string_view label) const;

  // Indices of `labels` in this montage; throws DataError naming the first unknown label.
  std::vector<std::size_t> resolve(const std::vector<std::string>& labels) const;

 private:
  std::vector<Electrode> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

EegRecording read_recording(const std::filesystem::path& path);
void write_recording(const EegRecording& rec, const std::filesystem::path& path);

Montage load_montage(const std::filesystem::path& path);
void save_montage(const Montage& montage, const std::filesystem::path& path);

// Spatial focus of a class-specific gain: Gaussian bump centered at (x, y) on the head disk.
struct Focus {
  double x = 0.0;
  double y = 0.0;
  double width = 0.3;
  bool operator==(const Focus&) const = default;
};

using BandGains = std::array<double, 4>;  // indexed by band_index()

struct SyntheticSpec {
  int n_subjects_per_condition = 12;
  double duration_s = 30.0;
  double sampling_rate_hz = 256.0;
  double noise_sigma = 1.0;
  std::map<Condition, BandGains> class_band_gains;
  // When a condition has a focus, its gains apply at the focus and fade to
  // background_gain away from it; without one the gains apply to every channel.
  std::map<Condition, Focus> class_focus;
  double background_gain = 1.0;
  // Per-subject multiplicative amplitude spread, uniform in [1-j, 1+j].
  double amplitude_jitter = 0.0;
  // Per-subject standard deviation of the focus position shift.
  double focus_jitter = 0.0;
};

// Throws ConfigError naming the offending field.
void validate(const SyntheticSpec& spec);

inline constexpr double kLargestWindowS = 6.0;

// Deterministic in (spec, montage, seed). Channels follow montage order;
// subject ids are "<condition>_<NN>", ordered expert, nonexpert, control.
std::vector<EegRecording> generate_synthetic(const SyntheticSpec& spec, const Montage& montage,
                                             std::uint64_t seed);

}  // namespace b2d
