#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "b2d/band.hpp"
#include "b2d/eeg_io.hpp"
#include "b2d/nn/tensor.hpp"
#include "b2d/spectral.hpp"

namespace b2d {

struct SampleMeta {
  std::string subject_id;
  Condition condition = Condition::Control;
  BandName band = BandName::Theta1;
  std::size_t window_index = 0;
  double window_s = 0.0;
  bool operator==(const SampleMeta&) const = default;
};

struct ImageDataset {
  nn::Tensor<float> images;  // [M,32,32,3]
  std::vector<int> labels;
  std::vector<SampleMeta> meta;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  bool operator==(const ImageDataset&) const = default;
};

// Throws DataError if sizes disagree or a label does not match its condition.
void validate(const ImageDataset& ds);

// Windows -> Welch PSD -> band power -> topographic image, for every recording.
// Recordings are ordered by (condition label, subject id), windows in time order.
ImageDataset build_dataset(const std::vector<EegRecording>& recordings, const Montage& montage, BandName band,
                           double window_s, const WelchParams& welch = {});

// Images of the given samples, stacked as [n,32,32,3].
nn::Tensor<float> gather_images(const ImageDataset& ds, const std::vector<std::size_t>& indices);
std::vector<int> gather_labels(const ImageDataset& ds, const std::vector<std::size_t>& indices);

// Writes <dir>/<stem>.b2dw (tensor "images") and <dir>/<stem>.b2dmanifest.
// Returns the manifest path.
std::filesystem::path write_dataset(const ImageDataset& ds, const std::filesystem::path& dir, const std::string& stem);
// Reads a manifest and the tensor file(s) it references.
ImageDataset read_dataset(const std::filesystem::path& manifest);

// FNV-1a over the image bytes, labels and metadata.
std::uint64_t dataset_checksum(const ImageDataset& ds);

}  // namespace b2d
