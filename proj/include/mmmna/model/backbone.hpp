#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/model/config.hpp"
#include "mmmna/nn/batchnorm.hpp"
#include "mmmna/nn/conv3d.hpp"
#include "mmmna/nn/pool.hpp"

namespace mmmna::model {

/// conv3 → BN → ReLU → conv3 → BN, plus identity or a strided 1×1×1 projection, then ReLU.
struct BasicBlock {
  nn::Conv3dLayer conv1, conv2;
  nn::BatchNorm3dLayer bn1, bn2;
  std::optional<nn::Conv3dLayer> down;
  std::optional<nn::BatchNorm3dLayer> down_bn;

  template <class T>
  static BasicBlock create(nn::ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                           std::size_t stride, nn::Rng& rng) {
    BasicBlock b;
    const Extent3 s{stride, stride, stride};
    b.conv1 = nn::Conv3dLayer::create(store, name + ".conv1", {in, out, {3, 3, 3}, {s, {1, 1, 1}}, false}, rng);
    b.bn1 = nn::BatchNorm3dLayer::create(store, name + ".bn1", out);
    b.conv2 = nn::Conv3dLayer::create(store, name + ".conv2", {out, out, {3, 3, 3}, {{1, 1, 1}, {1, 1, 1}}, false}, rng);
    b.bn2 = nn::BatchNorm3dLayer::create(store, name + ".bn2", out);
    if (stride != 1 || in != out) {
      b.down = nn::Conv3dLayer::create(store, name + ".down", {in, out, {1, 1, 1}, {s, {0, 0, 0}}, false}, rng);
      b.down_bn = nn::BatchNorm3dLayer::create(store, name + ".down_bn", out);
    }
    return b;
  }

  template <class T>
  Var<T> forward(const nn::Bound<T>& p, const Var<T>& x, bool training) const {
    Var<T> h = relu(bn1.forward(p, conv1.forward(p, x), training));
    h = bn2.forward(p, conv2.forward(p, h), training);
    const Var<T> shortcut = down ? down_bn->forward(p, down->forward(p, x), training) : x;
    return relu(add(h, shortcut));
  }

  Extent3 output_extents(const Extent3& in) const { return conv2.output_extents(conv1.output_extents(in)); }
};

/// Modified 3D ResNet18: 7³ stem with stride (1,2,2), max-pool, then four stages of two basic
/// blocks with widths base·{1,2,4,8}. Stage outputs are the four fusion scales.
struct Backbone {
  static constexpr std::size_t kBlocksPerStage = 2;

  std::size_t in_channels = 2;
  std::size_t base_channels = 8;
  nn::Conv3dLayer stem;
  nn::BatchNorm3dLayer stem_bn;
  nn::MaxPool3dOptions pool{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
  std::array<std::array<BasicBlock, kBlocksPerStage>, kScaleCount> stages;

  template <class T>
  static Backbone create(nn::ParamStore<T>& store, const std::string& name, std::size_t in_channels,
                         std::size_t base_channels, nn::Rng& rng) {
    Backbone b;
    b.in_channels = in_channels;
    b.base_channels = base_channels;
    b.stem = nn::Conv3dLayer::create(store, name + ".stem.conv",
                                     {in_channels, base_channels, {7, 7, 7}, {{1, 2, 2}, {3, 3, 3}}, false}, rng);
    b.stem_bn = nn::BatchNorm3dLayer::create(store, name + ".stem.bn", base_channels);
    std::size_t width = base_channels;
    for (std::size_t s = 0; s < kScaleCount; ++s) {
      const std::size_t out = base_channels << s;
      for (std::size_t k = 0; k < kBlocksPerStage; ++k) {
        const std::string block = name + ".layer" + std::to_string(s + 1) + "." + std::to_string(k);
        const std::size_t stride = (k == 0 && s > 0) ? 2 : 1;
        b.stages[s][k] = BasicBlock::create(store, block, width, out, stride, rng);
        width = out;
      }
    }
    return b;
  }

  std::size_t stage_channels(std::size_t s) const { return base_channels << s; }

  template <class T>
  Var<T> stem_forward(const nn::Bound<T>& p, const Var<T>& x, bool training) const {
    if (x.value().rank() != 5 || x.shape()[1] != in_channels) {
      throw DimensionError("backbone: expected [N×" + std::to_string(in_channels) + "×D×H×W], got " +
                           shape_str(x.shape()));
    }
    return nn::maxpool3d(relu(stem_bn.forward(p, stem.forward(p, x), training)), pool);
  }

  template <class T>
  Var<T> stage_forward(const nn::Bound<T>& p, std::size_t s, const Var<T>& x, bool training) const {
    Var<T> h = x;
    for (const BasicBlock& block : stages.at(s)) h = block.forward(p, h, training);
    return h;
  }

  /// Plain per-scale features without fusion.
  template <class T>
  std::array<Var<T>, kScaleCount> forward(const nn::Bound<T>& p, const Var<T>& x, bool training) const {
    std::array<Var<T>, kScaleCount> out;
    Var<T> h = stem_forward(p, x, training);
    for (std::size_t s = 0; s < kScaleCount; ++s) out[s] = h = stage_forward(p, s, h, training);
    return out;
  }

  /// Spatial extents of the four scale outputs for a given input extent.
  std::array<Extent3, kScaleCount> scale_extents(const Extent3& input) const {
    const Extent3 after_stem = stem.output_extents(input);
    Extent3 e = nn::window_output_extents(after_stem, pool.kernel, pool.stride, pool.padding, "maxpool3d");
    std::array<Extent3, kScaleCount> out;
    for (std::size_t s = 0; s < kScaleCount; ++s) {
      for (const BasicBlock& block : stages[s]) e = block.output_extents(e);
      out[s] = e;
    }
    return out;
  }
};

}  // namespace mmmna::model
