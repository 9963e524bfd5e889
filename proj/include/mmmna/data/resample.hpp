#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/subject.hpp"

namespace mmmna::data {

namespace detail {

inline void check_resample_shapes(const Shape& in, const Extent3& target, const char* op) {
  if (in.size() != 3) throw DimensionError(std::string(op) + ": expected a 3D array, got " + shape_str(in));
  for (std::size_t a = 0; a < 3; ++a) {
    if (in[a] < 2) throw ContractError(std::string(op) + ": source axis " + std::to_string(a) + " has extent 1");
    if (target[a] < 2) throw ContractError(std::string(op) + ": target extents must be at least 2");
  }
}

/// Source coordinate of output index i; grid corners map onto each other.
inline double source_coordinate(std::size_t i, std::size_t in, std::size_t out) {
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

/// Catmull-Rom weights for the four taps at offsets −1, 0, 1, 2.
inline std::array<double, 4> catmull_rom(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {0.5 * (-t3 + 2 * t2 - t), 0.5 * (3 * t3 - 5 * t2 + 2), 0.5 * (-3 * t3 + 4 * t2 + t), 0.5 * (t3 - t2)};
}

/// Cubic resampling of one axis of a row-major 3D array; edge samples are replicated.
inline Tensor<double> resample_axis(const Tensor<double>& x, std::size_t axis, std::size_t out_extent) {
  Shape out_shape = x.shape();
  const std::size_t in_extent = out_shape[axis];
  out_shape[axis] = out_extent;
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= out_shape[a];
  for (std::size_t a = axis + 1; a < 3; ++a) inner *= out_shape[a];
  Tensor<double> out(out_shape);
  for (std::size_t i = 0; i < out_extent; ++i) {
    const double s = source_coordinate(i, in_extent, out_extent);
    const long base = static_cast<long>(std::floor(s));
    const auto w = catmull_rom(s - static_cast<double>(base));
    std::array<std::size_t, 4> tap{};
    for (long k = 0; k < 4; ++k) {
      tap[k] = static_cast<std::size_t>(std::clamp(base - 1 + k, 0L, static_cast<long>(in_extent) - 1));
    }
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) acc += w[k] * x[(o * in_extent + tap[k]) * inner + in];
        out[(o * out_extent + i) * inner + in] = acc;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Separable cubic (Catmull-Rom) interpolation along each axis.
inline Volume resample_volume(const Volume& x, const Extent3& target) {
  detail::check_resample_shapes(x.shape(), target, "resample_volume");
  Tensor<double> work = x.cast<double>();
  for (std::size_t axis = 3; axis-- > 0;) work = detail::resample_axis(work, axis, target[axis]);
  return work.cast<float>();
}

/// Nearest-neighbour interpolation; never produces a label absent from the input.
inline LabelVolume resample_mask(const LabelVolume& m, const Extent3& target) {
  detail::check_resample_shapes(m.shape(), target, "resample_mask");
  const Shape& in = m.shape();
  std::array<std::vector<std::size_t>, 3> nearest;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < target[a]; ++i) {
      nearest[a].push_back(static_cast<std::size_t>(std::floor(detail::source_coordinate(i, in[a], target[a]) + 0.5)));
    }
  }
  LabelVolume out({target[0], target[1], target[2]});
  for (std::size_t d = 0; d < target[0]; ++d)
    for (std::size_t h = 0; h < target[1]; ++h)
      for (std::size_t w = 0; w < target[2]; ++w) {
        out[(d * target[1] + h) * target[2] + w] = m[(nearest[0][d] * in[1] + nearest[1][h]) * in[2] + nearest[2][w]];
      }
  return out;
}

/// Brings every array of a subject to `target` (cubic for volumes, nearest for the mask).
inline Subject resample_subject(const Subject& s, const Extent3& target) {
  if (s.shape() == target) return s;
  Subject out = s;
  for (Volume& v : out.modalities) v = resample_volume(v, target);
  out.seg = resample_mask(s.seg, target);
  return out;
}

}  // namespace mmmna::data
