#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/fusion/attention.hpp"
#include "mmmna/fusion/positional_encoding.hpp"
#include "mmmna/modality.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::fusion {

enum class AttentionVariant { Full, Linformer };

inline AttentionVariant parse_variant(const std::string& s) {
  if (s == "full") return AttentionVariant::Full;
  if (s == "linformer") return AttentionVariant::Linformer;
  throw ConfigError("unknown attention variant '" + s + "' (expected full or linformer)");
}

inline std::string variant_name(AttentionVariant v) { return v == AttentionVariant::Full ? "full" : "linformer"; }

/// Projection rank used when none is configured: n/8, at least 4, at most n.
inline std::size_t default_projection_rank(std::size_t n) { return std::min(n, std::max<std::size_t>(4, n / 8)); }

struct FusionModuleConfig {
  std::size_t d_model = 0;  // channels per token
  std::size_t n = 0;        // 4 × D·H·W tokens
  std::size_t k = 0;        // projection rank (linformer)
  AttentionVariant variant = AttentionVariant::Linformer;
  bool scale_qk = true;
  bool positional_encoding = true;

  /// Config for four modality maps of `channels` × `voxels`; `rank` 0 selects the default.
  static FusionModuleConfig for_scale(std::size_t channels, std::size_t voxels, AttentionVariant variant,
                                      std::size_t rank = 0) {
    FusionModuleConfig c;
    c.d_model = channels;
    c.n = kModalityCount * voxels;
    c.k = rank == 0 ? default_projection_rank(c.n) : rank;
    c.variant = variant;
    return c;
  }

  void validate() const {
    if (d_model == 0) throw ConfigError("fusion module: d_model must be positive");
    if (n == 0 || n % kModalityCount != 0) {
      throw ConfigError("fusion module: n = " + std::to_string(n) + " must be a positive multiple of 4");
    }
    if (variant == AttentionVariant::Linformer && (k < 1 || k > n)) {
      throw ConfigError("fusion module: projection rank k = " + std::to_string(k) + " must lie in [1, " +
                        std::to_string(n) + "]");
    }
    if (positional_encoding && d_model % 2 != 0) throw ConfigError("fusion module: d_model must be even");
  }
};

/// Spreads four [C×D×H×W] maps into one token matrix F1 of shape [4·D·H·W × C]. Tokens are
/// modality-major (FLAIR, T1, T1Ce, T2), then D, H, W scan order.
template <class T>
Var<T> flatten_concat(const std::array<Var<T>, kModalityCount>& features) {
  const Shape& ref = features[0].shape();
  if (ref.size() != 4) throw DimensionError("flatten_concat: expected [C×D×H×W], got " + shape_str(ref));
  const std::size_t channels = ref[0];
  const std::size_t voxels = ref[1] * ref[2] * ref[3];
  std::vector<Var<T>> tokens;
  for (const Var<T>& f : features) {
    if (f.shape() != ref) {
      throw DimensionError("flatten_concat: modality shapes differ: " + shape_str(f.shape()) + " vs " + shape_str(ref));
    }
    tokens.push_back(transpose(reshape(f, {channels, voxels})));
  }
  return concat(tokens, 0);
}

/// Inverse of flatten_concat: four equal token blocks back to [C×D×H×W].
template <class T>
std::array<Var<T>, kModalityCount> split_reshape(const Var<T>& tokens, const Shape& feature_shape) {
  if (feature_shape.size() != 4) throw DimensionError("split_reshape: expected [C×D×H×W] target shape");
  const std::size_t channels = feature_shape[0];
  const std::size_t voxels = feature_shape[1] * feature_shape[2] * feature_shape[3];
  if (tokens.shape() != Shape{kModalityCount * voxels, channels}) {
    throw DimensionError("split_reshape: tokens " + shape_str(tokens.shape()) + " do not match " +
                         shape_str(feature_shape));
  }
  const auto parts = split(tokens, kModalityCount, 0);
  std::array<Var<T>, kModalityCount> out;
  for (std::size_t m = 0; m < kModalityCount; ++m) out[m] = reshape(transpose(parts[m]), feature_shape);
  return out;
}

template <class T>
struct FusionOutput {
  std::array<Var<T>, kModalityCount> outputs;  // residual: split_reshape(F3) + inputs
  Var<T> f1;                                   // concatenated tokens before fusion
  Var<T> f3;                                   // fused tokens
  Var<T> attention;                            // P
};

/// One MNAFFM instance: shared Q/K/V maps for all modality tokens, plus E/F for linformer.
struct FusionModule {
  FusionModuleConfig config;
  std::size_t wq = 0, wk = 0, wv = 0;
  std::optional<std::size_t> e, f;

  template <class T>
  static FusionModule create(nn::ParamStore<T>& store, const std::string& name, const FusionModuleConfig& config,
                             nn::Rng& rng) {
    config.validate();
    FusionModule m;
    m.config = config;
    const std::size_t d = config.d_model;
    m.wq = store.add(name + ".wq", nn::kaiming_normal<T>({d, d}, d, rng));
    m.wk = store.add(name + ".wk", nn::kaiming_normal<T>({d, d}, d, rng));
    m.wv = store.add(name + ".wv", nn::kaiming_normal<T>({d, d}, d, rng));
    if (config.variant == AttentionVariant::Linformer) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(config.n));
      m.e = store.add(name + ".e", nn::normal_init<T>({config.k, config.n}, sd, rng));
      m.f = store.add(name + ".f", nn::normal_init<T>({config.k, config.n}, sd, rng));
    }
    return m;
  }

  template <class T>
  FusionOutput<T> forward(const nn::Bound<T>& p, const std::array<Var<T>, kModalityCount>& features) const {
    return mnaffm_forward(features, config, p[wq], p[wk], p[wv], e ? p[*e] : Var<T>(), f ? p[*f] : Var<T>());
  }

  template <class T>
  static FusionOutput<T> mnaffm_forward(const std::array<Var<T>, kModalityCount>& features,
                                        const FusionModuleConfig& config, const Var<T>& wq, const Var<T>& wk,
                                        const Var<T>& wv, const Var<T>& e, const Var<T>& f) {
    config.validate();
    const Shape& shape = features[0].shape();
    if (shape.size() != 4 || shape[0] != config.d_model ||
        kModalityCount * shape[1] * shape[2] * shape[3] != config.n) {
      throw ConfigError("fusion module: feature shape " + shape_str(shape) + " inconsistent with d_model = " +
                        std::to_string(config.d_model) + ", n = " + std::to_string(config.n));
    }
    FusionOutput<T> out;
    out.f1 = flatten_concat(features);
    Var<T> f2 = out.f1;
    if (config.positional_encoding) {
      f2 = add(out.f1, out.f1.tape().constant(positional_encoding<T>(config.n, config.d_model)));
    }
    const AttentionResult<T> att = config.variant == AttentionVariant::Full
                                       ? full_attention(f2, wq, wk, wv, config.scale_qk)
                                       : linformer_attention(f2, wq, wk, wv, e, f, config.scale_qk);
    out.f3 = att.output;
    out.attention = att.weights;
    const auto fused = split_reshape(out.f3, shape);
    for (std::size_t m = 0; m < kModalityCount; ++m) out.outputs[m] = add(fused[m], features[m]);
    return out;
  }
};

}  // namespace mmmna::fusion
