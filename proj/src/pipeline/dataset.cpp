#include "b2d/pipeline/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "b2d/error.hpp"
#include "b2d/nn/container.hpp"
#include "b2d/text.hpp"
#include "b2d/topomap.hpp"

namespace b2d {

namespace {

constexpr std::size_t kPixels = static_cast<std::size_t>(kImageSize) * kImageSize * 3;
constexpr const char* kManifestHeader = "B2DMANIFEST 1";

}  // namespace

void validate(const ImageDataset& ds) {
  const std::size_t m = ds.labels.size();
  if (ds.meta.size() != m)
    throw DataError("dataset: " + std::to_string(m) + " labels but " + std::to_string(ds.meta.size()) + " meta rows");
  const nn::Shape want{m, kImageSize, kImageSize, 3};
  if (!(m == 0 && ds.images.empty()) && ds.images.shape() != want)
    throw DataError("dataset: image tensor " + nn::shape_string(ds.images.shape()) + ", expected " +
                    nn::shape_string(want));
  for (std::size_t i = 0; i < m; ++i)
    if (ds.labels[i] != label_of(ds.meta[i].condition))
      throw DataError("dataset: sample " + std::to_string(i) + " label " + std::to_string(ds.labels[i]) +
                      " does not match condition " + std::string(to_string(ds.meta[i].condition)));
}

ImageDataset build_dataset(const std::vector<EegRecording>& recordings, const Montage& montage, BandName band,
                           double window_s, const WelchParams& welch) {
  std::vector<const EegRecording*> order;
  for (const auto& r : recordings) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const EegRecording* a, const EegRecording* b) {
    if (a->condition != b->condition) return label_of(a->condition) < label_of(b->condition);
    return a->subject_id < b->subject_id;
  });

  const HeadGrid grid;
  const auto all_xy = electrode_xy(montage);
  const Band& b = band_of(band);

  ImageDataset ds;
  std::vector<float> pixels;
  for (const auto* rec : order) {
    validate(*rec);
    std::vector<Point2> pts;
    for (auto idx : montage.resolve(rec->channels)) pts.push_back(all_xy[idx]);
    const auto windows = extract_windows(*rec, window_s);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto psd = welch_psd(windows[w], rec->sampling_rate_hz, welch);
      const auto power = band_power(psd, b);
      const auto img = render_image(power, pts, grid, b, {rec->subject_id, rec->condition, w});
      pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
      ds.labels.push_back(label_of(rec->condition));
      ds.meta.push_back({rec->subject_id, rec->condition, band, w, window_s});
    }
  }
  if (!ds.labels.empty()) ds.images = nn::Tensor<float>({ds.labels.size(), kImageSize, kImageSize, 3}, std::move(pixels));
  return ds;
}

nn::Tensor<float> gather_images(const ImageDataset& ds, const std::vector<std::size_t>& indices) {
  nn::Tensor<float> out({indices.size(), kImageSize, kImageSize, 3});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ds.size()) throw std::out_of_range("gather_images: index out of range");
    std::memcpy(out.ptr() + i * kPixels, ds.images.ptr() + indices[i] * kPixels, kPixels * sizeof(float));
  }
  return out;
}

std::vector<int> gather_labels(const ImageDataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.labels.at(i));
  return out;
}

std::filesystem::path write_dataset(const ImageDataset& ds, const std::filesystem::path& dir, const std::string& stem) {
  validate(ds);
  std::filesystem::create_directories(dir);
  const std::string tensor_file = stem + ".b2dw";
  nn::Tensor<float> images = ds.empty() ? nn::Tensor<float>({0, kImageSize, kImageSize, 3}) : ds.images;
  nn::write_container(dir / tensor_file, {{"images", std::move(images)}});

  const auto manifest = dir / (stem + ".b2dmanifest");
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw DataError("cannot write " + manifest.string());
  out << kManifestHeader << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& m = ds.meta[i];
    out << tensor_file << ',' << i << ',' << ds.labels[i] << ',' << m.subject_id << ',' << to_string(m.condition) << ','
        << to_string(m.band) << ',' << m.window_index << ',' << text::format_double(m.window_s) << "\n";
  }
  if (!out) throw DataError("write failed: " + manifest.string());
  return manifest;
}

ImageDataset read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  const std::string file = manifest.string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || text::trim(line) != kManifestHeader)
    throw ParseError(file, 1, std::string("missing '") + kManifestHeader + "' header");
  ++line_no;

  std::map<std::string, nn::Tensor<float>> tensors;
  auto tensor_for = [&](const std::string& name) -> const nn::Tensor<float>& {
    auto it = tensors.find(name);
    if (it != tensors.end()) return it->second;
    const auto entries = nn::read_container(manifest.parent_path() / name);
    for (const auto& e : entries) {
      if (e.name != "images") continue;
      const auto* t = std::get_if<nn::Tensor<float>>(&e.tensor);
      if (!t || t->rank() != 4 || t->dim(1) != kImageSize || t->dim(2) != kImageSize || t->dim(3) != 3)
        throw DataError(name + ": 'images' must be f32 [M,32,32,3]");
      return tensors.emplace(name, *t).first->second;
    }
    throw DataError(name + ": no 'images' tensor");
  };

  ImageDataset ds;
  std::vector<float> pixels;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    if (f.size() != 8) throw ParseError(file, line_no, "expected 8 fields, got " + std::to_string(f.size()));
    const auto index = text::parse_int(f[1]);
    const auto label = text::parse_int(f[2]);
    const auto cond = parse_condition(text::trim(f[4]));
    const auto widx = text::parse_int(f[6]);
    const auto ws = text::parse_double(f[7]);
    if (!index || *index < 0) throw ParseError(file, line_no, "bad index");
    if (!label) throw ParseError(file, line_no, "bad label");
    if (!cond) throw ParseError(file, line_no, "unknown condition '" + std::string(text::trim(f[4])) + "'");
    if (*label != label_of(*cond)) throw ParseError(file, line_no, "label does not match condition");
    if (!widx || *widx < 0) throw ParseError(file, line_no, "bad window index");
    if (!ws || !(*ws > 0)) throw ParseError(file, line_no, "bad window length");
    BandName band;
    try {
      band = parse_band_name(text::trim(f[5]));
    } catch (const ConfigError& e) {
      throw ParseError(file, line_no, e.what());
    }
    const auto& t = tensor_for(std::string(text::trim(f[0])));
    const auto idx = static_cast<std::size_t>(*index);
    if (idx >= t.dim(0)) throw ParseError(file, line_no, "index " + std::to_string(idx) + " beyond tensor");
    pixels.insert(pixels.end(), t.ptr() + idx * kPixels, t.ptr() + (idx + 1) * kPixels);
    ds.labels.push_back(static_cast<int>(*label));
    ds.meta.push_back({std::string(text::trim(f[3])), *cond, band, static_cast<std::size_t>(*widx), *ws});
  }
  if (!ds.labels.empty()) ds.images = nn::Tensor<float>({ds.labels.size(), kImageSize, kImageSize, 3}, std::move(pixels));
  return ds;
}

std::uint64_t dataset_checksum(const ImageDataset& ds) {
  std::string buf;
  const auto px = ds.images.data();
  buf.append(reinterpret_cast<const char*>(px.data()), px.size_bytes());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& m = ds.meta[i];
    buf += std::to_string(ds.labels[i]) + '|' + m.subject_id + '|' + std::string(to_string(m.band)) + '|' +
           std::to_string(m.window_index) + '|' + text::format_double(m.window_s) + '\n';
  }
  return text::fnv1a(buf);
}

}  // namespace b2d
