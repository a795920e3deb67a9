#include "b2d/pipeline/activations.hpp"

#include <algorithm>
#include <map>

#include "b2d/error.hpp"
#include "b2d/topomap.hpp"

namespace b2d {

std::vector<std::string> block1_conv_layers(const nn::ModelConfig& cfg) {
  const auto names = nn::layer_names(cfg);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i)
    if (cfg.layers[i].block == 1 && cfg.layers[i].is_conv()) out.push_back(names[i]);
  return out;
}

template <typename T>
std::vector<ActivationMap> dump_activations(const nn::Model<T>& model, const nn::Tensor<T>& image,
                                            const std::vector<std::string>& layers, std::size_t n_filters) {
  if (image.rank() != 4 || image.dim(0) != 1) throw ConfigError("activation dump needs a single [1,H,W,C] image");
  const auto& names = model.layer_names();
  const auto& specs = model.config().layers;
  for (const auto& l : layers) {
    const auto it = std::find(names.begin(), names.end(), l);
    if (it == names.end()) throw ConfigError("unknown layer '" + l + "'");
    if (!specs[static_cast<std::size_t>(it - names.begin())].is_conv())
      throw ConfigError("layer '" + l + "' is not a convolution");
  }
  std::map<std::string, nn::Tensor<T>> captured;
  (void)model.predict(image, layers, captured);

  std::vector<ActivationMap> out;
  for (const auto& l : layers) {
    const auto& y = captured.at(l);
    const std::size_t h = y.dim(1), w = y.dim(2), c = y.dim(3);
    for (std::size_t f = 0; f < std::min(n_filters, c); ++f) {
      ActivationMap m{l, f, h, w, {}, {}};
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) m.raw.push_back(static_cast<double>(y.at(0, i, j, f)));
      const auto [lo, hi] = std::minmax_element(m.raw.begin(), m.raw.end());
      const double range = *hi - *lo;
      for (double v : m.raw) m.normalized.push_back(range >= 1e-12 ? (v - *lo) / range : 0.5);
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<std::filesystem::path> write_activation_ppms(const std::vector<ActivationMap>& maps,
                                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& m : maps) {
    std::vector<float> rgb;
    rgb.reserve(m.normalized.size() * 3);
    for (double v : m.normalized) rgb.insert(rgb.end(), 3, static_cast<float>(v));
    const auto p = dir / (m.layer + "_f" + std::to_string(m.filter) + ".ppm");
    write_ppm(p, rgb, static_cast<int>(m.height), static_cast<int>(m.width));
    paths.push_back(p);
  }
  return paths;
}

template std::vector<ActivationMap> dump_activations<float>(const nn::Model<float>&, const nn::Tensor<float>&,
                                                            const std::vector<std::string>&, std::size_t);
template std::vector<ActivationMap> dump_activations<double>(const nn::Model<double>&, const nn::Tensor<double>&,
                                                             const std::vector<std::string>&, std::size_t);

}  // namespace b2d
