#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "mmmna/core/errors.hpp"
#include "mmmna/fusion/mnaffm.hpp"
#include "mmmna/nn/conv3d.hpp"

namespace mmmna::model {

using nn::Extent3;
using fusion::AttentionVariant;

inline constexpr std::size_t kScaleCount = 4;
inline constexpr std::size_t kNonImageFeatureCount = 5;

/// Network and loss hyperparameters.
struct MMMNAConfig {
  Extent3 input_shape{16, 32, 32};
  std::size_t base_channels = 8;
  std::size_t num_classes = 3;
  double lambda = 0.25;  // weight of the four per-modality losses
  double alpha = 0.25;   // focal weighting factor
  double gamma = 2.0;    // focal focusing parameter
  AttentionVariant variant = AttentionVariant::Linformer;
  std::array<std::size_t, kScaleCount> projection_rank{0, 0, 0, 0};  // 0 = default rank
  bool scale_qk = true;
  bool positional_encoding = true;
  bool single_scale = false;     // fusion only at the last scale
  bool baseline_concat = false;  // 8-channel early-concatenation comparison model
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("model: lambda must be positive");
    if (gamma < 0.0) throw ConfigError("model: gamma must be non-negative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("model: alpha must lie in (0, 1)");
    if (base_channels == 0) throw ConfigError("model: base_channels must be positive");
    if (num_classes != 3) throw ConfigError("model: exactly 3 survival classes are supported");
    for (std::size_t e : input_shape) {
      if (e == 0 || e % 16 != 0) {
        throw ConfigError("model: input extents must be positive multiples of 16, got " + std::to_string(e));
      }
    }
  }
};

}  // namespace mmmna::model
