#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"
#include "mmmna/modality.hpp"
#include "mmmna/nn/conv3d.hpp"

namespace mmmna::data {

using Extent3 = nn::Extent3;
using Volume = Tensor<float>;              // [D×H×W] intensities
using LabelVolume = Tensor<std::uint8_t>;  // [D×H×W] labels in {0, 1, 2, 4}

inline bool is_tumor_label(std::uint8_t v) { return v == 0 || v == 1 || v == 2 || v == 4; }

/// One patient: four aligned modality volumes, one segmentation mask, age and survival.
struct Subject {
  std::string id;
  std::array<Volume, kModalityCount> modalities;
  LabelVolume seg;
  double age = 0.0;
  int survival_days = 1;

  const Volume& modality(Modality m) const { return modalities[index_of(m)]; }
  Volume& modality(Modality m) { return modalities[index_of(m)]; }

  Extent3 shape() const {
    const Shape& s = seg.shape();
    if (s.size() != 3) throw DimensionError("subject " + id + ": mask must be rank 3, got " + shape_str(s));
    return {s[0], s[1], s[2]};
  }

  void validate() const {
    const Shape& s = seg.shape();
    if (s.size() != 3) throw DimensionError("subject " + id + ": mask must be rank 3, got " + shape_str(s));
    for (Modality m : kModalities) {
      if (modality(m).shape() != s) {
        throw DimensionError("subject " + id + ": " + std::string(modality_name(m)) + " shape " +
                             shape_str(modality(m).shape()) + " differs from mask " + shape_str(s));
      }
    }
    for (std::uint8_t v : seg.data()) {
      if (!is_tumor_label(v)) throw ContractError("subject " + id + ": invalid mask label " + std::to_string(v));
    }
    if (survival_days < 1) throw ContractError("subject " + id + ": survival_days must be >= 1");
  }

  friend bool operator==(const Subject&, const Subject&) = default;
};

}  // namespace mmmna::data
