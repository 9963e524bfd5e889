#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"

namespace mmmna::nn {

using Rng = std::mt19937_64;

/// Zero-mean normal with the given standard deviation.
template <class T>
Tensor<T> normal_init(const Shape& shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> out(shape);
  for (T& v : out.data()) v = static_cast<T>(dist(rng));
  return out;
}

/// Kaiming-scaled normal for ReLU networks: std = sqrt(2 / fan_in).
template <class T>
Tensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("kaiming_normal: fan_in must be positive");
  return normal_init<T>(shape, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

/// Stable per-component seeding so that one model seed yields one parameter set.
inline Rng seeded_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace mmmna::nn
