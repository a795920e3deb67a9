#include "b2d/nn/model_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

#include "b2d/error.hpp"
#include "b2d/text.hpp"

namespace b2d::nn {

namespace {

struct KindInfo {
  LayerKind kind;
  const char* token;  // used by format_layers / parse_layers
  const char* name;   // base of layer_names()
};

constexpr KindInfo kKinds[] = {
    {LayerKind::Conv2D, "conv2d", "conv2d"},
    {LayerKind::DepthwiseConv2D, "depthwise", "depthwise_conv2d"},
    {LayerKind::SeparableConv2D, "separable", "separable_conv2d"},
    {LayerKind::ReLU, "relu", "relu"},
    {LayerKind::MaxPool2D, "maxpool", "max_pooling2d"},
    {LayerKind::BatchNorm, "batchnorm", "batch_normalization"},
    {LayerKind::Flatten, "flatten", "flatten"},
    {LayerKind::Dense, "dense", "dense"},
    {LayerKind::Softmax, "softmax", "softmax"},
};

const KindInfo& info(LayerKind k) {
  for (const auto& i : kKinds)
    if (i.kind == k) return i;
  return kKinds[0];
}

std::string describe(const LayerSpec& l, std::size_t index) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(l.kind)) + ")";
}

}  // namespace

std::string_view to_string(LayerKind k) { return info(k).token; }

std::vector<Shape> infer_shapes(const ModelConfig& cfg) {
  if (cfg.input_height < 1 || cfg.input_width < 1 || cfg.input_channels < 1)
    throw ConfigError("model input shape must be positive");
  if (cfg.n_classes < 2) throw ConfigError("model needs at least 2 classes");
  if (cfg.layers.size() < 2 || cfg.layers.back().kind != LayerKind::Softmax)
    throw ConfigError("model must end with a softmax layer");
  const auto& last_dense = cfg.layers[cfg.layers.size() - 2];
  if (last_dense.kind != LayerKind::Dense || last_dense.filters != cfg.n_classes)
    throw ConfigError("softmax must be preceded by dense(" + std::to_string(cfg.n_classes) + ")");

  std::vector<Shape> shapes;
  Shape cur{static_cast<std::size_t>(cfg.input_height), static_cast<std::size_t>(cfg.input_width),
            static_cast<std::size_t>(cfg.input_channels)};
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    const bool spatial = cur.size() == 3;
    switch (l.kind) {
      case LayerKind::Conv2D:
      case LayerKind::DepthwiseConv2D:
      case LayerKind::SeparableConv2D: {
        if (!spatial) throw ConfigError(describe(l, i) + " needs a spatial input");
        if (l.kh < 1 || l.kw < 1) throw ConfigError(describe(l, i) + " needs a positive kernel");
        if (l.kind != LayerKind::DepthwiseConv2D && l.filters < 1)
          throw ConfigError(describe(l, i) + " needs a positive filter count");
        std::size_t oh = 0, ow = 0;
        try {
          oh = axis_geometry(cur[0], static_cast<std::size_t>(l.kh), l.padding).out;
          ow = axis_geometry(cur[1], static_cast<std::size_t>(l.kw), l.padding).out;
        } catch (const std::invalid_argument& e) {
          throw ConfigError(describe(l, i) + ": " + e.what());
        }
        const std::size_t c = l.kind == LayerKind::DepthwiseConv2D ? cur[2] : static_cast<std::size_t>(l.filters);
        cur = {oh, ow, c};
        break;
      }
      case LayerKind::MaxPool2D:
        if (!spatial) throw ConfigError(describe(l, i) + " needs a spatial input");
        if (cur[0] < 2 || cur[1] < 2)
          throw ConfigError(describe(l, i) + ": spatial extent " + shape_string(cur) + " below 2x2");
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerKind::Flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::Dense:
        if (spatial) throw ConfigError(describe(l, i) + " needs a flattened input");
        if (l.filters < 1) throw ConfigError(describe(l, i) + " needs a positive unit count");
        cur = {static_cast<std::size_t>(l.filters)};
        break;
      case LayerKind::Softmax:
        if (spatial) throw ConfigError(describe(l, i) + " needs a flattened input");
        if (i + 1 != cfg.layers.size()) throw ConfigError("softmax is only allowed as the last layer");
        break;
      case LayerKind::ReLU:
      case LayerKind::BatchNorm:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::vector<std::string> layer_names(const ModelConfig& cfg) {
  std::map<LayerKind, int> counters;
  std::vector<std::string> names;
  for (const auto& l : cfg.layers) names.push_back(std::string(info(l.kind).name) + "_" + std::to_string(++counters[l.kind]));
  return names;
}

std::string format_layers(const ModelConfig& cfg) {
  std::string out;
  for (const auto& l : cfg.layers) {
    if (!out.empty()) out += ' ';
    if (l.block > 0) out += "b" + std::to_string(l.block) + ":";
    out += info(l.kind).token;
    const std::string pad = l.padding == Padding::Same ? "same" : "valid";
    const std::string kernel = std::to_string(l.kh) + "x" + std::to_string(l.kw);
    switch (l.kind) {
      case LayerKind::Conv2D:
      case LayerKind::SeparableConv2D:
        out += "(" + kernel + "," + std::to_string(l.filters) + "," + pad + ")";
        break;
      case LayerKind::DepthwiseConv2D:
        out += "(" + kernel + "," + pad + ")";
        break;
      case LayerKind::Dense:
        out += "(" + std::to_string(l.filters) + ")";
        break;
      default:
        break;
    }
  }
  return out;
}

std::vector<LayerSpec> parse_layers(std::string_view text_in) {
  std::vector<LayerSpec> out;
  std::string normalized(text_in);
  std::replace(normalized.begin(), normalized.end(), ';', ' ');
  std::size_t pos = 0;
  while (pos < normalized.size()) {
    const auto start = normalized.find_first_not_of(" \t\r\n", pos);
    if (start == std::string::npos) break;
    auto end = normalized.find_first_of(" \t\r\n", start);
    if (end == std::string::npos) end = normalized.size();
    std::string_view tok(normalized.data() + start, end - start);
    pos = end;

    LayerSpec spec;
    const auto fail = [&](const std::string& why) -> ConfigError {
      return ConfigError("layer '" + std::string(tok) + "': " + why);
    };
    std::string_view body = tok;
    if (body.size() > 1 && body[0] == 'b' && body.find(':') != std::string_view::npos) {
      const auto colon = body.find(':');
      const auto blk = text::parse_int(body.substr(1, colon - 1));
      if (!blk || *blk < 0) throw fail("bad block prefix");
      spec.block = static_cast<int>(*blk);
      body = body.substr(colon + 1);
    }
    std::string_view kind = body, args;
    if (const auto paren = body.find('('); paren != std::string_view::npos) {
      if (body.back() != ')') throw fail("missing ')'");
      kind = body.substr(0, paren);
      args = body.substr(paren + 1, body.size() - paren - 2);
    }
    const KindInfo* found = nullptr;
    for (const auto& i : kKinds)
      if (kind == i.token) found = &i;
    if (!found) throw fail("unknown layer kind");
    spec.kind = found->kind;

    const auto fields = args.empty() ? std::vector<std::string_view>{} : text::split(args, ',');
    const auto parse_kernel = [&](std::string_view s) {
      const auto x = s.find('x');
      if (x == std::string_view::npos) throw fail("kernel must look like KxK");
      const auto a = text::parse_int(s.substr(0, x));
      const auto b = text::parse_int(s.substr(x + 1));
      if (!a || !b || *a < 1 || *b < 1) throw fail("bad kernel size");
      spec.kh = static_cast<int>(*a);
      spec.kw = static_cast<int>(*b);
    };
    const auto parse_padding = [&](std::string_view s) {
      s = text::trim(s);
      if (s == "same") spec.padding = Padding::Same;
      else if (s == "valid") spec.padding = Padding::Valid;
      else throw fail("padding must be same|valid");
    };
    const auto parse_count = [&](std::string_view s) {
      const auto v = text::parse_int(s);
      if (!v || *v < 1) throw fail("count must be a positive integer");
      spec.filters = static_cast<int>(*v);
    };
    switch (spec.kind) {
      case LayerKind::Conv2D:
      case LayerKind::SeparableConv2D:
        if (fields.size() != 3) throw fail("expected (KxK,filters,padding)");
        parse_kernel(text::trim(fields[0]));
        parse_count(fields[1]);
        parse_padding(fields[2]);
        break;
      case LayerKind::DepthwiseConv2D:
        if (fields.size() != 2) throw fail("expected (KxK,padding)");
        parse_kernel(text::trim(fields[0]));
        parse_padding(fields[1]);
        break;
      case LayerKind::Dense:
        if (fields.size() != 1) throw fail("expected (units)");
        parse_count(fields[0]);
        break;
      default:
        if (!fields.empty()) throw fail("takes no arguments");
    }
    out.push_back(spec);
  }
  if (out.empty()) throw ConfigError("empty layer list");
  return out;
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  const std::string canonical = format_layers(cfg) + "|" + std::to_string(cfg.input_height) + "x" +
                                std::to_string(cfg.input_width) + "x" + std::to_string(cfg.input_channels) + "|" +
                                std::to_string(cfg.n_classes);
  return text::fnv1a(canonical);
}

ModelConfig reference_preset(const ReferenceOptions& o) {
  const auto& p = o.paddings;
  ModelConfig cfg;
  cfg.name = kReferencePresetName;
  auto& L = cfg.layers;
  L.push_back(LayerSpec::conv2d(o.block1_kernel, o.block1_filters, p[0], 1));
  L.push_back(LayerSpec::depthwise(o.block1_depthwise_kernel, p[1], 1));
  L.push_back(LayerSpec::simple(LayerKind::ReLU, 1));
  L.push_back(LayerSpec::simple(LayerKind::MaxPool2D, 1));
  L.push_back(LayerSpec::simple(LayerKind::BatchNorm, 1));
  L.push_back(LayerSpec::conv2d(o.block2_kernel, o.block2_filters, p[2], 2));
  L.push_back(LayerSpec::depthwise(o.block2_depthwise_kernel, p[3], 2));
  L.push_back(LayerSpec::simple(LayerKind::ReLU, 2));
  L.push_back(LayerSpec::simple(LayerKind::MaxPool2D, 2));
  L.push_back(LayerSpec::simple(LayerKind::BatchNorm, 2));
  L.push_back(LayerSpec::conv2d(o.block3_kernel, o.block3_filters, p[4], 3));
  L.push_back(LayerSpec::separable(o.separable_kernel, o.separable_filters, p[5], 3));
  if (o.block3_relu) L.push_back(LayerSpec::simple(LayerKind::ReLU, 3));
  if (o.block3_pool) L.push_back(LayerSpec::simple(LayerKind::MaxPool2D, 3));
  L.push_back(LayerSpec::simple(LayerKind::BatchNorm, 3));
  L.push_back(LayerSpec::simple(LayerKind::Flatten, 4));
  L.push_back(LayerSpec::dense(o.dense_width, 4));
  L.push_back(LayerSpec::dense(cfg.n_classes, 4));
  L.push_back(LayerSpec::simple(LayerKind::Softmax, 4));
  return cfg;
}

ModelConfig preset_by_name(std::string_view name) {
  if (name == kReferencePresetName) return reference_preset();
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

ParamReport count_params(const ModelConfig& cfg) {
  const auto shapes = infer_shapes(cfg);
  const auto names = layer_names(cfg);
  ParamReport report;
  Shape in_shape{static_cast<std::size_t>(cfg.input_height), static_cast<std::size_t>(cfg.input_width),
                 static_cast<std::size_t>(cfg.input_channels)};
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    const std::int64_t k = static_cast<std::int64_t>(l.kh) * l.kw;
    const std::int64_t c = static_cast<std::int64_t>(in_shape.back());
    std::int64_t n = 0;
    switch (l.kind) {
      case LayerKind::Conv2D: n = k * c * l.filters + l.filters; break;
      case LayerKind::DepthwiseConv2D: n = k * c + c; break;
      case LayerKind::SeparableConv2D: n = k * c + c * l.filters + l.filters; break;
      case LayerKind::BatchNorm: n = 2 * c; break;
      case LayerKind::Dense: n = c * l.filters + l.filters; break;
      default: n = 0;
    }
    report.layers.push_back({names[i], l.kind, n});
    report.total += n;
    in_shape = shapes[i];
  }
  return report;
}

WidthSolution solve_dense_width(const ReferenceOptions& base, std::int64_t target, int max_width,
                                std::size_t n_nearest) {
  WidthSolution sol;
  std::vector<WidthCandidate> all_nearest;
  for (int pool = 1; pool >= 0; --pool) {
    for (unsigned mask = 0; mask < (1u << kReferenceConvLayers); ++mask) {
      ReferenceOptions opts = base;
      std::string scheme;
      for (std::size_t j = 0; j < kReferenceConvLayers; ++j) {
        const bool valid = (mask >> (kReferenceConvLayers - 1 - j)) & 1u;
        opts.paddings[j] = valid ? Padding::Valid : Padding::Same;
        scheme += valid ? 'V' : 'S';
      }
      opts.block3_pool = pool == 1;
      // The total is affine in the width: total(W) = offset + slope * W.
      std::int64_t t1 = 0, t2 = 0;
      try {
        opts.dense_width = 1;
        t1 = count_params(reference_preset(opts)).total;
        opts.dense_width = 2;
        t2 = count_params(reference_preset(opts)).total;
      } catch (const ConfigError&) {
        continue;  // this padding assignment does not type-check
      }
      const std::int64_t slope = t2 - t1;
      const std::int64_t offset = t1 - slope;
      std::vector<WidthCandidate> local;  // closest widths for this scheme
      for (int w = 1; w <= max_width; ++w) {
        const std::int64_t total = offset + slope * w;
        WidthCandidate cand{scheme, opts.block3_pool, w, total, total - target};
        if (cand.delta == 0) {
          sol.exact.push_back(cand);
          continue;
        }
        local.push_back(cand);
        std::stable_sort(local.begin(), local.end(),
                         [](const auto& a, const auto& b) { return std::llabs(a.delta) < std::llabs(b.delta); });
        if (local.size() > n_nearest) local.pop_back();
      }
      all_nearest.insert(all_nearest.end(), local.begin(), local.end());
    }
  }
  if (sol.exact.empty()) {
    std::stable_sort(all_nearest.begin(), all_nearest.end(), [](const auto& a, const auto& b) {
      return std::llabs(a.delta) < std::llabs(b.delta);
    });
    if (all_nearest.size() > n_nearest) all_nearest.resize(n_nearest);
    sol.nearest = std::move(all_nearest);
  }
  return sol;
}

}  // namespace b2d::nn
