#pragma once

#include <array>
#include <bitset>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"
#include "mmmna/data/resample.hpp"
#include "mmmna/data/subject.hpp"
#include "mmmna/data/survival.hpp"
#include "mmmna/model/config.hpp"
#include "mmmna/modality.hpp"

namespace mmmna::model {

/// Tumor composition and age: s1, s2, s4 (per-label share of tumor voxels), s_total (tumor
/// voxels over non-zero brain voxels) and s_age = age / 100.
struct NonImageFeatures {
  double s1 = 0, s2 = 0, s4 = 0, s_total = 0, s_age = 0;

  std::array<double, kNonImageFeatureCount> values() const { return {s1, s2, s4, s_total, s_age}; }
  friend bool operator==(const NonImageFeatures&, const NonImageFeatures&) = default;
};

template <class V>
NonImageFeatures build_nonimage_features(const data::LabelVolume& seg, const Tensor<V>& raw_volume, double age) {
  if (seg.shape() != raw_volume.shape()) {
    throw DimensionError("nonimage features: mask " + shape_str(seg.shape()) + " vs volume " +
                         shape_str(raw_volume.shape()));
  }
  std::size_t n1 = 0, n2 = 0, n4 = 0;
  for (std::uint8_t v : seg.data()) {
    switch (v) {
      case 0: break;
      case 1: ++n1; break;
      case 2: ++n2; break;
      case 4: ++n4; break;
      default: throw ContractError("nonimage features: invalid mask label " + std::to_string(v));
    }
  }
  std::size_t nonzero = 0;
  for (V v : raw_volume.data()) nonzero += v != V{0};
  if (nonzero == 0) throw ContractError("nonimage features: the volume has no non-zero voxels");

  NonImageFeatures f;
  f.s_age = age / 100.0;
  const std::size_t tumor = n1 + n2 + n4;
  if (tumor == 0) return f;
  const double total = static_cast<double>(tumor);
  f.s1 = static_cast<double>(n1) / total;
  f.s2 = static_cast<double>(n2) / total;
  f.s4 = static_cast<double>(n4) / total;
  f.s_total = total / static_cast<double>(nonzero);
  return f;
}

/// One modality channel pair as fed to the shared backbone.
template <class T>
struct ModalityInput {
  Tensor<T> volume;  // [D×H×W], z-scored over non-zero voxels
  Tensor<T> seg;     // [D×H×W], labels / 4
};

/// A subject ready for the network.
template <class T>
struct SubjectInput {
  std::string id;
  std::array<ModalityInput<T>, kModalityCount> modalities;
  NonImageFeatures nonimage;
  int label = 0;
};

/// Z-score over non-zero voxels; zero background stays zero.
template <class T>
Tensor<T> normalize_volume(const data::Volume& v) {
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (float x : v.data()) {
    if (x != 0.0f) {
      sum += x;
      sq += static_cast<double>(x) * x;
      ++count;
    }
  }
  Tensor<T> out(v.shape());
  if (count == 0) return out;
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0f) out[i] = static_cast<T>((v[i] - mean) * inv);
  }
  return out;
}

template <class T>
Tensor<T> scaled_mask(const data::LabelVolume& seg) {
  Tensor<T> out(seg.shape());
  for (std::size_t i = 0; i < seg.size(); ++i) out[i] = static_cast<T>(seg[i]) / T{4};
  return out;
}

/// Resamples to the model input shape when needed, normalizes, and derives the label and
/// non-image features. The FLAIR volume defines the non-zero brain region.
template <class T>
SubjectInput<T> prepare_subject(const data::Subject& raw, const Extent3& input_shape) {
  raw.validate();
  const data::Subject s = data::resample_subject(raw, input_shape);
  SubjectInput<T> in;
  in.id = s.id;
  in.label = data::class_index(data::bin_survival(s.survival_days));
  in.nonimage = build_nonimage_features(s.seg, s.modality(Modality::Flair), s.age);
  const Tensor<T> seg = scaled_mask<T>(s.seg);
  for (Modality m : kModalities) {
    in.modalities[index_of(m)] = ModalityInput<T>{normalize_volume<T>(s.modality(m)), seg};
  }
  return in;
}

/// Which modalities are present; FLAIR must always be.
using Availability = std::bitset<kModalityCount>;

inline Availability availability(bool flair, bool t1, bool t1ce, bool t2) {
  Availability a;
  a[index_of(Modality::Flair)] = flair;
  a[index_of(Modality::T1)] = t1;
  a[index_of(Modality::T1Ce)] = t1ce;
  a[index_of(Modality::T2)] = t2;
  return a;
}

/// The eight FLAIR-containing availability patterns, in table order.
inline std::array<Availability, 8> missing_modality_configurations() {
  return {availability(true, false, false, false), availability(true, true, false, false),
          availability(true, false, true, false),  availability(true, false, false, true),
          availability(true, true, true, false),   availability(true, true, false, true),
          availability(true, false, true, true),   availability(true, true, true, true)};
}

inline std::string availability_label(const Availability& a) {
  std::string s;
  for (Modality m : kModalities) {
    if (!a[index_of(m)]) continue;
    if (!s.empty()) s += '+';
    s += modality_name(m);
  }
  return s;
}

/// Fills every missing modality slot with FLAIR (the mask is shared already).
template <class T>
std::array<ModalityInput<T>, kModalityCount> substitute_missing(
    const std::array<ModalityInput<T>, kModalityCount>& inputs, const Availability& available) {
  if (!available[index_of(Modality::Flair)]) {
    throw ContractError("substitute_missing: FLAIR must be available as the substitution source");
  }
  std::array<ModalityInput<T>, kModalityCount> out = inputs;
  for (Modality m : kModalities) {
    if (!available[index_of(m)]) out[index_of(m)] = inputs[index_of(Modality::Flair)];
  }
  return out;
}

template <class T>
SubjectInput<T> substitute_missing(const SubjectInput<T>& subject, const Availability& available) {
  SubjectInput<T> out = subject;
  out.modalities = substitute_missing(subject.modalities, available);
  return out;
}

}  // namespace mmmna::model
