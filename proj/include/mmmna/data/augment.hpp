#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"
#include "mmmna/data/subject.hpp"
#include "mmmna/nn/init.hpp"

namespace mmmna::data {

/// Flips along H and W followed by `quarter_turns` counter-clockwise 90° rotations in the
/// axial (H, W) plane.
struct Augmentation {
  bool flip_h = false;
  bool flip_w = false;
  int quarter_turns = 0;

  bool is_identity() const { return !flip_h && !flip_w && quarter_turns % 4 == 0; }
};

/// Applies one augmentation to a [D×H×W] array. Odd quarter turns need H == W.
template <class T>
Tensor<T> apply_augmentation(const Tensor<T>& x, const Augmentation& aug) {
  if (x.rank() != 3) throw DimensionError("augment: expected a 3D array, got " + shape_str(x.shape()));
  const std::size_t depth = x.dim(0), height = x.dim(1), width = x.dim(2);
  const int turns = ((aug.quarter_turns % 4) + 4) % 4;
  if (turns % 2 == 1 && height != width) {
    throw ContractError("augment: 90 degree rotation needs a square axial plane, got " + shape_str(x.shape()));
  }
  Tensor<T> out(x.shape());
  for (std::size_t d = 0; d < depth; ++d)
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t w = 0; w < width; ++w) {
        // Source position after flips, then inverse rotation.
        std::size_t sh = h, sw = w;
        for (int t = 0; t < turns; ++t) {
          const std::size_t nh = sw, nw = height - 1 - sh;  // inverse of one counter-clockwise turn
          sh = nh;
          sw = nw;
        }
        if (aug.flip_h) sh = height - 1 - sh;
        if (aug.flip_w) sw = width - 1 - sw;
        out[(d * height + h) * width + w] = x[(d * height + sh) * width + sw];
      }
  return out;
}

inline Subject apply_augmentation(const Subject& s, const Augmentation& aug) {
  if (aug.is_identity()) return s;
  Subject out = s;
  for (Volume& v : out.modalities) v = apply_augmentation(v, aug);
  out.seg = apply_augmentation(s.seg, aug);
  return out;
}

/// Draws a random flip/rotation. Rotations are limited to half turns on non-square planes.
inline Augmentation draw_augmentation(const Extent3& shape, std::uint64_t seed) {
  nn::Rng rng = nn::seeded_rng(seed, 0xA06u);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> turn(0, 3);
  Augmentation aug;
  aug.flip_h = coin(rng) == 1;
  aug.flip_w = coin(rng) == 1;
  aug.quarter_turns = turn(rng);
  if (shape[1] != shape[2]) aug.quarter_turns = (aug.quarter_turns / 2) * 2;
  return aug;
}

/// Same random transform applied to all four modalities and the mask.
inline Subject augment(const Subject& s, std::uint64_t seed) {
  return apply_augmentation(s, draw_augmentation(s.shape(), seed));
}

}  // namespace mmmna::data
