#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/subject.hpp"
#include "mmmna/data/survival.hpp"
#include "mmmna/nn/init.hpp"

namespace mmmna::data {

/// Recipe for a synthetic cohort standing in for real multi-modal MR data.
struct PhantomSpec {
  std::uint64_t seed = 0;
  std::size_t subjects = 16;
  Extent3 shape{16, 32, 32};
  std::size_t min_lesions = 1;
  std::size_t max_lesions = 3;
  double min_radius = 1.5;  // combined lesion radius in voxels
  double max_radius = 5.0;
  /// 1 = lesion size and age are exact functions of the survival latent; 0 = pure noise.
  double signal_strength = 0.9;
  std::array<double, 3> class_prior{0.5, 0.3, 0.2};  // short, mid, long

  /// Semi-axes of the brain ellipsoid.
  std::array<double, 3> brain_semi_axes() const {
    return {0.42 * static_cast<double>(shape[0]), 0.42 * static_cast<double>(shape[1]),
            0.42 * static_cast<double>(shape[2])};
  }

  void validate() const {
    if (subjects == 0) throw ConfigError("phantom: subject count must be positive");
    for (std::size_t e : shape)
      if (e < 4) throw ConfigError("phantom: every volume extent must be at least 4");
    if (min_lesions < 1 || max_lesions < min_lesions) throw ConfigError("phantom: invalid lesion count range");
    if (min_radius <= 0.0 || max_radius < min_radius) throw ConfigError("phantom: invalid lesion radius range");
    const auto semi = brain_semi_axes();
    const double limit = *std::min_element(semi.begin(), semi.end());
    if (max_radius >= limit) {
      throw ConfigError("phantom: lesion radius " + std::to_string(max_radius) + " does not fit the brain (limit " +
                        std::to_string(limit) + " voxels)");
    }
    if (signal_strength < 0.0 || signal_strength > 1.0) throw ConfigError("phantom: signal_strength must be in [0, 1]");
    double total = 0.0;
    for (double p : class_prior) {
      if (p < 0.0) throw ConfigError("phantom: class prior must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("phantom: class prior must sum to 1");
  }
};

namespace detail {

// Per-modality intensity offsets for mask labels 0, 1, 2, 4.
inline constexpr std::array<std::array<double, 4>, kModalityCount> kLabelContrast{{
    {0.0, 0.3, 1.0, 0.6},     // FLAIR: edema bright
    {0.0, -0.4, -0.1, -0.2},  // T1: lesion dark
    {0.0, -0.3, 0.1, 1.0},    // T1Ce: enhancing rim bright
    {0.0, 0.9, 0.8, 0.5},     // T2: fluid bright
}};
inline constexpr std::array<double, kModalityCount> kBaseIntensity{1.0, 0.8, 0.9, 0.7};
inline constexpr std::array<double, kModalityCount> kTextureGain{0.6, 1.0, 0.8, -0.7};

inline std::size_t contrast_slot(std::uint8_t label) {
  switch (label) {
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default: return 0;
  }
}

struct Lesion {
  std::array<double, 3> center;
  double radius;
};

inline int survival_days_for(SurvivalClass c, nn::Rng& rng) {
  switch (c) {
    case SurvivalClass::Short: return std::uniform_int_distribution<int>(30, 304)(rng);
    case SurvivalClass::Mid: return std::uniform_int_distribution<int>(305, 456)(rng);
    case SurvivalClass::Long: return std::uniform_int_distribution<int>(457, 1800)(rng);
  }
  return 1;
}

inline Subject generate_one(const PhantomSpec& spec, std::size_t index) {
  nn::Rng rng = nn::seeded_rng(spec.seed, index + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double spread = 0.5 * (1.0 - spec.signal_strength);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto jitter = [&](nn::Rng& r) { return spread * normal(r); };

  // Survival latent: small = short survival. The class is a fixed binning of the latent;
  // lesion size and age are noisy monotone readouts of it.
  const double latent = unit(rng);
  SurvivalClass cls = SurvivalClass::Long;
  if (latent < spec.class_prior[0]) {
    cls = SurvivalClass::Short;
  } else if (latent < spec.class_prior[0] + spec.class_prior[1]) {
    cls = SurvivalClass::Mid;
  }
  const double size_readout = std::clamp(latent + jitter(rng), 0.0, 1.0);
  const double age_readout = std::clamp(latent + jitter(rng), 0.0, 1.0);
  const double total_radius = spec.max_radius - (spec.max_radius - spec.min_radius) * size_readout;

  Subject s;
  char name[32];
  std::snprintf(name, sizeof(name), "phantom_%04zu", index);
  s.id = name;
  s.age = std::round((80.0 - 50.0 * age_readout) * 100.0) / 100.0;
  s.survival_days = survival_days_for(cls, rng);

  const auto semi = spec.brain_semi_axes();
  const std::array<double, 3> center{(static_cast<double>(spec.shape[0]) - 1) / 2,
                                     (static_cast<double>(spec.shape[1]) - 1) / 2,
                                     (static_cast<double>(spec.shape[2]) - 1) / 2};

  const std::size_t lesion_count =
      std::uniform_int_distribution<std::size_t>(spec.min_lesions, spec.max_lesions)(rng);
  std::vector<double> share(lesion_count);
  double share_total = 0.0;
  for (double& w : share) share_total += (w = 0.5 + unit(rng));
  std::vector<Lesion> lesions;
  for (std::size_t l = 0; l < lesion_count; ++l) {
    const double r = total_radius * std::cbrt(share[l] / share_total);
    std::array<double, 3> z{};
    do {
      for (double& v : z) v = 2.0 * unit(rng) - 1.0;
    } while (z[0] * z[0] + z[1] * z[1] + z[2] * z[2] > 1.0);
    Lesion lesion{{}, std::max(r, 0.75)};
    for (std::size_t a = 0; a < 3; ++a) lesion.center[a] = center[a] + (semi[a] - lesion.radius) * z[a];
    lesions.push_back(lesion);
  }

  std::array<double, 3> freq{}, phase{};
  for (std::size_t a = 0; a < 3; ++a) {
    freq[a] = 0.3 + 0.4 * unit(rng);
    phase[a] = 6.283185307179586 * unit(rng);
  }

  const Shape shape{spec.shape[0], spec.shape[1], spec.shape[2]};
  s.seg = LabelVolume(shape);
  for (Volume& v : s.modalities) v = Volume(shape);
  std::normal_distribution<double> voxel_noise(0.0, 0.03);
  for (std::size_t d = 0; d < spec.shape[0]; ++d)
    for (std::size_t h = 0; h < spec.shape[1]; ++h)
      for (std::size_t w = 0; w < spec.shape[2]; ++w) {
        const std::array<double, 3> p{static_cast<double>(d), static_cast<double>(h), static_cast<double>(w)};
        double q = 0.0;
        for (std::size_t a = 0; a < 3; ++a) q += std::pow((p[a] - center[a]) / semi[a], 2);
        if (q > 1.0) continue;
        std::uint8_t label = 0;
        for (const Lesion& lesion : lesions) {
          double dist2 = 0.0;
          for (std::size_t a = 0; a < 3; ++a) dist2 += (p[a] - lesion.center[a]) * (p[a] - lesion.center[a]);
          const double rel = std::sqrt(dist2) / lesion.radius;
          std::uint8_t here = 0;
          if (rel <= 0.35) {
            here = 1;
          } else if (rel <= 0.65) {
            here = 4;
          } else if (rel <= 1.0) {
            here = 2;
          }
          // Core beats enhancing beats edema where lesions overlap.
          auto rank = [](std::uint8_t v) { return v == 1 ? 3 : v == 4 ? 2 : v == 2 ? 1 : 0; };
          if (rank(here) > rank(label)) label = here;
        }
        const std::size_t at = (d * spec.shape[1] + h) * spec.shape[2] + w;
        s.seg[at] = label;
        const double texture =
            0.1 * std::sin(freq[0] * p[0] + phase[0]) * std::sin(freq[1] * p[1] + phase[1]) * std::sin(freq[2] * p[2] + phase[2]);
        const double shared = voxel_noise(rng);
        for (std::size_t m = 0; m < kModalityCount; ++m) {
          const double v = kBaseIntensity[m] + kTextureGain[m] * (texture + shared) +
                           kLabelContrast[m][contrast_slot(label)] + voxel_noise(rng);
          s.modalities[m][at] = static_cast<float>(std::max(v, 0.05));
        }
      }
  return s;
}

}  // namespace detail

/// Deterministic synthetic cohort: each subject has an ellipsoidal brain, 1–3 nested
/// spherical lesions (core 1, enhancing 4, edema 2), four correlated modality contrasts, and a
/// survival class that larger lesions and older age make shorter.
inline std::vector<Subject> generate_phantoms(const PhantomSpec& spec) {
  spec.validate();
  std::vector<Subject> out;
  out.reserve(spec.subjects);
  for (std::size_t i = 0; i < spec.subjects; ++i) out.push_back(detail::generate_one(spec, i));
  return out;
}

}  // namespace mmmna::data
