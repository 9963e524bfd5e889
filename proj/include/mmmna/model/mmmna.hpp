#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/fusion/mnaffm.hpp"
#include "mmmna/model/backbone.hpp"
#include "mmmna/model/config.hpp"
#include "mmmna/model/inputs.hpp"
#include "mmmna/model/losses.hpp"
#include "mmmna/modality.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/linear.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::model {

inline constexpr std::size_t kBranchCount = 5;
inline constexpr std::size_t kFusionBranch = 0;

/// Branch order: fusion, then the modalities in canonical order.
inline const char* branch_name(std::size_t branch) {
  static constexpr const char* kNames[kBranchCount] = {"fusion", "flair", "t1", "t1ce", "t2"};
  if (branch >= kBranchCount) throw ContractError("branch index out of range");
  return kNames[branch];
}

/// Per-sample, per-modality feature shapes seen by (and produced by) the fusion step at a scale.
struct ScaleTrace {
  Shape fusion_input;
  Shape fusion_output;
  bool fused = false;
};

template <class T>
struct BranchOutputs {
  std::array<Var<T>, kBranchCount> logits;  // each [B×3]
  std::vector<ScaleTrace> scales;
};

template <class T>
struct LossBreakdown {
  Var<T> total;
  Var<T> fusion;
  std::array<Var<T>, kModalityCount> modality;
};

/// Weighted average over the rows of tokens [V×C] with weights [V]: out[c] = Σ_v x[v,c]·w[v].
template <class T>
Var<T> weighted_pool_tokens(const Var<T>& tokens, const Var<T>& weights) {
  if (tokens.value().rank() != 2 || weights.value().rank() != 1 || weights.shape()[0] != tokens.shape()[0]) {
    throw DimensionError("weighted pool: weights " + shape_str(weights.shape()) + " do not match tokens " +
                         shape_str(tokens.shape()));
  }
  return reshape(matmul(reshape(weights, {1, weights.shape()[0]}), tokens), {tokens.shape()[1]});
}

/// Branch pooling of a [C×D×H×W] feature map with one learnable weight per voxel.
template <class T>
Var<T> branch_weighted_pool(const Var<T>& feature, const Var<T>& weights) {
  const Shape& s = feature.shape();
  if (s.size() != 4) throw DimensionError("branch_weighted_pool: expected [C×D×H×W], got " + shape_str(s));
  const std::size_t voxels = s[1] * s[2] * s[3];
  if (weights.value().rank() != 1 || weights.shape()[0] != voxels) {
    throw DimensionError("branch_weighted_pool: " + std::to_string(voxels) + " voxels but weights " +
                         shape_str(weights.shape()));
  }
  return reshape(matmul(reshape(feature, {s[0], voxels}), reshape(weights, {voxels, 1})), {s[0]});
}

/// Index of the largest logit in each row of a [B×C] tensor; ties go to the lower class.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows: expected [B×C], got " + shape_str(logits.shape()));
  const std::size_t classes = logits.dim(1);
  std::vector<int> out(logits.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (logits[b * classes + c] > logits[b * classes + best]) best = c;
    out[b] = static_cast<int>(best);
  }
  return out;
}

/// The multi-modal, multi-scale network. Layer objects hold parameter indices into a
/// ParamStore; the same structure drives float training and double gradient checks.
struct MMMNAModel {
  MMMNAConfig config;
  Backbone backbone;
  std::array<std::optional<fusion::FusionModule>, kScaleCount> fusion;
  std::array<std::optional<std::size_t>, kBranchCount> pool;  // absent in the baseline
  std::array<std::optional<nn::LinearLayer>, kBranchCount> heads;

  template <class T>
  static MMMNAModel create(nn::ParamStore<T>& store, const MMMNAConfig& config) {
    config.validate();
    nn::Rng rng = nn::seeded_rng(config.seed, 0x5EEDu);
    MMMNAModel m;
    m.config = config;
    const std::size_t in_channels = config.baseline_concat ? 2 * kModalityCount : 2;
    m.backbone = Backbone::create(store, "backbone", in_channels, config.base_channels, rng);
    const auto extents = m.backbone.scale_extents(config.input_shape);
    const std::size_t last = kScaleCount - 1;
    const std::size_t top_channels = m.backbone.stage_channels(last);

    if (config.baseline_concat) {
      m.heads[kFusionBranch] = nn::LinearLayer::create(store, "head.fusion", top_channels, config.num_classes, rng);
      return m;
    }
    for (std::size_t s = 0; s < kScaleCount; ++s) {
      if (config.single_scale && s != last) continue;
      const Extent3& e = extents[s];
      auto fc = fusion::FusionModuleConfig::for_scale(m.backbone.stage_channels(s), e[0] * e[1] * e[2],
                                                      config.variant, config.projection_rank[s]);
      fc.scale_qk = config.scale_qk;
      fc.positional_encoding = config.positional_encoding;
      m.fusion[s] = fusion::FusionModule::create(store, "fusion.scale" + std::to_string(s + 1), fc, rng);
    }
    const Extent3& top = extents[last];
    const std::size_t voxels = top[0] * top[1] * top[2];
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      const std::size_t length = b == kFusionBranch ? kModalityCount * voxels : voxels;
      m.pool[b] = store.add(std::string("pool.") + branch_name(b),
                            Tensor<T>({length}, T{1} / static_cast<T>(length)));
    }
    for (std::size_t b = 0; b < kBranchCount; ++b) {
      m.heads[b] = nn::LinearLayer::create(store, std::string("head.") + branch_name(b),
                                           top_channels + kNonImageFeatureCount, config.num_classes, rng);
    }
    return m;
  }

  /// Stacks a batch into the backbone input: [4B×2×D×H×W] in sample-major order (4b + m), or
  /// [B×8×D×H×W] (four volumes, then four mask copies) for the baseline.
  template <class T>
  Tensor<T> assemble_input(std::span<const SubjectInput<T>> batch) const {
    if (batch.empty()) throw ContractError("model: empty batch");
    const Shape vshape{config.input_shape[0], config.input_shape[1], config.input_shape[2]};
    const std::size_t voxels = shape_numel(vshape);
    for (const auto& s : batch) {
      for (const auto& mi : s.modalities) {
        if (mi.volume.shape() != vshape || mi.seg.shape() != vshape) {
          throw DimensionError("model: subject '" + s.id + "' has volume " + shape_str(mi.volume.shape()) +
                               ", mask " + shape_str(mi.seg.shape()) + ", expected " + shape_str(vshape));
        }
      }
    }
    const auto& e = config.input_shape;
    if (config.baseline_concat) {
      Tensor<T> x({batch.size(), 2 * kModalityCount, e[0], e[1], e[2]});
      for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t m = 0; m < kModalityCount; ++m) {
          const auto& mi = batch[b].modalities[m];
          std::copy(mi.volume.data().begin(), mi.volume.data().end(),
                    x.data().begin() + static_cast<std::ptrdiff_t>((b * 2 * kModalityCount + m) * voxels));
          std::copy(mi.seg.data().begin(), mi.seg.data().end(),
                    x.data().begin() +
                        static_cast<std::ptrdiff_t>((b * 2 * kModalityCount + kModalityCount + m) * voxels));
        }
      }
      return x;
    }
    Tensor<T> x({kModalityCount * batch.size(), 2, e[0], e[1], e[2]});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t m = 0; m < kModalityCount; ++m) {
        const auto& mi = batch[b].modalities[m];
        const std::size_t at = (kModalityCount * b + m) * 2 * voxels;
        std::copy(mi.volume.data().begin(), mi.volume.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(at));
        std::copy(mi.seg.data().begin(), mi.seg.data().end(),
                  x.data().begin() + static_cast<std::ptrdiff_t>(at + voxels));
      }
    }
    return x;
  }

  template <class T>
  BranchOutputs<T> forward(const nn::Bound<T>& p, std::span<const SubjectInput<T>> batch, bool training) const {
    Tape<T>& tape = p.tape();
    const Var<T> x = tape.constant(assemble_input(batch));
    return config.baseline_concat ? forward_baseline(p, x, batch.size(), training)
                                  : forward_fused(p, x, batch, training);
  }

  /// Focal loss per branch and the weighted total; the baseline has only the fusion term.
  template <class T>
  LossBreakdown<T> loss(const BranchOutputs<T>& out, std::span<const int> labels) const {
    const Tensor<T> y = one_hot<T>(labels, config.num_classes);
    LossBreakdown<T> l;
    l.fusion = focal_loss(out.logits[kFusionBranch], y, config.alpha, config.gamma);
    if (config.baseline_concat) {
      l.modality.fill(l.fusion);
      l.total = l.fusion;
      return l;
    }
    for (std::size_t m = 0; m < kModalityCount; ++m) {
      l.modality[m] = focal_loss(out.logits[m + 1], y, config.alpha, config.gamma);
    }
    l.total = total_loss(l.modality, l.fusion, config.lambda);
    return l;
  }

 private:
  template <class T>
  static Tensor<T> nonimage_tensor(std::span<const SubjectInput<T>> batch) {
    Tensor<T> t({batch.size(), kNonImageFeatureCount});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto v = batch[b].nonimage.values();
      for (std::size_t i = 0; i < kNonImageFeatureCount; ++i) t[b * kNonImageFeatureCount + i] = static_cast<T>(v[i]);
    }
    return t;
  }

  template <class T>
  BranchOutputs<T> forward_baseline(const nn::Bound<T>& p, const Var<T>& x, std::size_t batch, bool training) const {
    const Var<T> top = backbone.forward(p, x, training)[kScaleCount - 1];
    const Shape& s = top.shape();
    const std::size_t voxels = s[2] * s[3] * s[4];
    const Var<T> avg = p.tape().constant(Tensor<T>({voxels, 1}, T{1} / static_cast<T>(voxels)));
    const Var<T> gap = reshape(matmul(reshape(top, {batch * s[1], voxels}), avg), {batch, s[1]});
    BranchOutputs<T> out;
    out.logits.fill(heads[kFusionBranch]->forward(p, gap));
    return out;
  }

  template <class T>
  BranchOutputs<T> forward_fused(const nn::Bound<T>& p, const Var<T>& x, std::span<const SubjectInput<T>> batch,
                                 bool training) const {
    const std::size_t nb = batch.size();
    const std::size_t last = kScaleCount - 1;
    BranchOutputs<T> out;
    std::vector<std::array<Var<T>, kModalityCount>> top_features(nb);
    std::vector<Var<T>> fusion_tokens(nb);

    Var<T> h = backbone.stem_forward(p, x, training);
    for (std::size_t s = 0; s < kScaleCount; ++s) {
      h = backbone.stage_forward(p, s, h, training);
      const Shape& hs = h.shape();
      const Shape feature{hs[1], hs[2], hs[3], hs[4]};
      ScaleTrace trace{feature, feature, fusion[s].has_value()};
      if (!fusion[s] && s != last) {
        out.scales.push_back(trace);
        continue;
      }
      std::vector<Var<T>> parts;
      parts.reserve(kModalityCount * nb);
      for (std::size_t b = 0; b < nb; ++b) {
        std::array<Var<T>, kModalityCount> f;
        for (std::size_t m = 0; m < kModalityCount; ++m) f[m] = reshape(slice(h, 0, kModalityCount * b + m, 1), feature);
        if (fusion[s]) {
          const auto fused = fusion[s]->forward(p, f);
          if (s == last) fusion_tokens[b] = add(fused.f1, fused.f3);
          f = fused.outputs;
          trace.fusion_output = f[0].shape();
        } else {
          fusion_tokens[b] = fusion::flatten_concat(f);
        }
        if (s == last) top_features[b] = f;
        for (const Var<T>& v : f) {
          Shape batched{1};
          batched.insert(batched.end(), v.shape().begin(), v.shape().end());
          parts.push_back(reshape(v, batched));
        }
      }
      out.scales.push_back(trace);
      if (s != last) h = concat(parts, 0);
    }

    const Var<T> nonimage = p.tape().constant(nonimage_tensor(batch));
    for (std::size_t br = 0; br < kBranchCount; ++br) {
      std::vector<Var<T>> pooled;
      pooled.reserve(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        const Var<T> v = br == kFusionBranch ? weighted_pool_tokens(fusion_tokens[b], p[*pool[br]])
                                             : branch_weighted_pool(top_features[b][br - 1], p[*pool[br]]);
        pooled.push_back(reshape(v, {1, v.shape()[0]}));
      }
      const Var<T> features = concat(std::vector<Var<T>>{concat(pooled, 0), nonimage}, 1);
      out.logits[br] = heads[br]->forward(p, features);
    }
    return out;
  }
};

}  // namespace mmmna::model
