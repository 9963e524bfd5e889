#pragma once

#include <cmath>
#include <cstddef>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"

namespace mmmna::fusion {

/// Fixed sinusoidal table [n × d_model]:
///   PE[pos, 2i]   = sin(pos / 10000^(2i/d_model))
///   PE[pos, 2i+1] = cos(pos / 10000^(2i/d_model))
template <class T>
Tensor<T> positional_encoding(std::size_t n, std::size_t d_model) {
  if (n == 0 || d_model == 0) throw ConfigError("positional_encoding: n and d_model must be positive");
  if (d_model % 2 != 0) {
    throw ConfigError("positional_encoding: d_model must be even, got " + std::to_string(d_model));
  }
  Tensor<T> pe({n, d_model});
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    for (std::size_t pos = 0; pos < n; ++pos) {
      const double angle = static_cast<double>(pos) / freq;
      pe[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      pe[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

}  // namespace mmmna::fusion
