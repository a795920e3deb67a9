#include "b2d/pipeline/ablation.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "b2d/error.hpp"

namespace b2d {

namespace {

using nn::LayerKind;
using nn::LayerSpec;

bool is_post_op(LayerKind k) { return k == LayerKind::ReLU || k == LayerKind::BatchNorm || k == LayerKind::MaxPool2D; }

std::string kind_token(LayerKind k) {
  switch (k) {
    case LayerKind::ReLU: return "relu";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::MaxPool2D: return "pool";
    default: return std::string(nn::to_string(k));
  }
}

std::set<int> blocks_of(const nn::ModelConfig& cfg) {
  std::set<int> out;
  for (const auto& l : cfg.layers)
    if (l.block > 0) out.insert(l.block);
  return out;
}

// [begin,end) of the contiguous ReLU/BN/pool run in `block` holding all three kinds.
std::optional<std::pair<std::size_t, std::size_t>> post_op_run(const nn::ModelConfig& cfg, int block) {
  const auto& L = cfg.layers;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (L[i].block != block || !is_post_op(L[i].kind)) continue;
    std::size_t j = i;
    while (j < L.size() && L[j].block == block && is_post_op(L[j].kind)) ++j;
    std::set<LayerKind> kinds;
    for (std::size_t k = i; k < j; ++k) kinds.insert(L[k].kind);
    if (j - i == 3 && kinds.size() == 3) return std::make_pair(i, j);
    i = j;
  }
  return std::nullopt;
}

}  // namespace

AblationSuite parse_suite(std::string_view s) {
  if (s == "A" || s == "a") return AblationSuite::A;
  if (s == "B" || s == "b") return AblationSuite::B;
  if (s == "C" || s == "c") return AblationSuite::C;
  throw ConfigError("unknown ablation suite '" + std::string(s) + "' (expected A, B or C)");
}

std::vector<std::vector<LayerKind>> block_orderings() {
  std::vector<LayerKind> k = {LayerKind::BatchNorm, LayerKind::MaxPool2D, LayerKind::ReLU};
  std::sort(k.begin(), k.end());
  std::vector<std::vector<LayerKind>> out;
  do out.push_back(k);
  while (std::next_permutation(k.begin(), k.end()));
  return out;
}

std::vector<Mutation> ablation_suite(AblationSuite suite, const nn::ModelConfig& base) {
  std::vector<Mutation> out;
  auto variant = [&](std::string id, std::string desc) {
    Mutation m{std::move(id), std::move(desc), base};
    m.config.name = base.name + "/" + m.id;
    return m;
  };

  switch (suite) {
    case AblationSuite::A: {
      for (int b : blocks_of(base)) {
        for (int factor : {-1, 1}) {
          // halve / double the filters of standard convolutions in the block
          auto m = variant("A.b" + std::to_string(b) + (factor < 0 ? ".filters/2" : ".filters*2"),
                           std::string(factor < 0 ? "halve" : "double") + " conv filters in block " + std::to_string(b));
          bool touched = false;
          for (auto& l : m.config.layers)
            if (l.block == b && (l.kind == LayerKind::Conv2D || l.kind == LayerKind::SeparableConv2D)) {
              l.filters = factor < 0 ? std::max(1, l.filters / 2) : l.filters * 2;
              touched = true;
            }
          if (touched) out.push_back(std::move(m));
        }
        for (int delta : {-1, 1}) {
          auto m = variant("A.b" + std::to_string(b) + (delta < 0 ? ".kernel-1" : ".kernel+1"),
                           std::string(delta < 0 ? "shrink" : "grow") + " kernels in block " + std::to_string(b));
          bool touched = false;
          for (auto& l : m.config.layers)
            if (l.block == b && l.is_conv() && l.kh + delta >= 1) {
              l.kh += delta;
              l.kw += delta;
              touched = true;
            }
          if (touched) out.push_back(std::move(m));
        }
      }
      break;
    }
    case AblationSuite::B: {
      for (const auto& order : block_orderings()) {
        std::string id = "B";
        for (std::size_t i = 0; i < order.size(); ++i) id += (i ? "-" : ".") + kind_token(order[i]);
        auto m = variant(id, "post-convolution order " + id.substr(2) + " in every block");
        bool touched = false;
        for (int b : blocks_of(base)) {
          const auto run = post_op_run(m.config, b);
          if (!run) continue;
          for (std::size_t k = 0; k < 3; ++k) m.config.layers[run->first + k].kind = order[k];
          touched = true;
        }
        if (touched) out.push_back(std::move(m));
      }
      break;
    }
    case AblationSuite::C: {
      const auto shapes = nn::infer_shapes(base);
      std::vector<int> dw_blocks;
      for (const auto& l : base.layers)
        if (l.kind == LayerKind::DepthwiseConv2D &&
            std::find(dw_blocks.begin(), dw_blocks.end(), l.block) == dw_blocks.end())
          dw_blocks.push_back(l.block);
      auto swap_block = [&](nn::ModelConfig& cfg, int block) {
        for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
          auto& l = cfg.layers[i];
          if (l.kind != LayerKind::DepthwiseConv2D || (block != 0 && l.block != block)) continue;
          const auto channels = i == 0 ? static_cast<std::size_t>(cfg.input_channels) : shapes[i - 1].back();
          l = LayerSpec{LayerKind::Conv2D, l.kh, l.kw, static_cast<int>(channels), l.padding, l.block};
        }
      };
      for (int b : dw_blocks) {
        auto m = variant("C.b" + std::to_string(b), "standard conv instead of depthwise in block " + std::to_string(b));
        swap_block(m.config, b);
        out.push_back(std::move(m));
      }
      if (dw_blocks.size() > 1) {
        auto m = variant("C.all", "standard conv instead of every depthwise conv");
        swap_block(m.config, 0);
        out.push_back(std::move(m));
      }
      break;
    }
  }
  return out;
}

std::vector<AblationRow> run_ablation(const std::vector<Mutation>& suite, const ImageDataset& ds,
                                      const std::vector<FoldSplit>& folds, const Hyper& hyper, int threads) {
  std::vector<std::int64_t> params;
  for (const auto& m : suite) {
    try {
      params.push_back(nn::count_params(m.config).total);
    } catch (const ConfigError& e) {
      throw ConfigError("mutation " + m.id + ": " + e.what());
    }
  }
  const std::size_t n = suite.size() * folds.size();
  std::vector<AblationRow> rows(n);
  run_parallel(n, threads, [&](std::size_t t) {
    const auto& m = suite[t / folds.size()];
    const auto& f = folds[t % folds.size()];
    rows[t] = {m.id, params[t / folds.size()], train_model<float>(m.config, ds, f, hyper).report};
  });
  return rows;
}

}  // namespace b2d
