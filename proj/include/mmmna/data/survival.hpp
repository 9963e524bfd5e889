#pragma once

#include <string>

#include "mmmna/core/errors.hpp"

namespace mmmna::data {

inline constexpr int kClassCount = 3;
enum class SurvivalClass : int { Short = 0, Mid = 1, Long = 2 };

inline constexpr double kDaysPerMonth = 365.25 / 12.0;

/// ≤ 10 months → short, (10, 15) → mid, ≥ 15 → long.
inline SurvivalClass bin_survival(int survival_days) {
  if (survival_days < 1) {
    throw ContractError("bin_survival: survival days must be positive, got " + std::to_string(survival_days));
  }
  const double months = static_cast<double>(survival_days) / kDaysPerMonth;
  if (months <= 10.0) return SurvivalClass::Short;
  if (months < 15.0) return SurvivalClass::Mid;
  return SurvivalClass::Long;
}

inline int class_index(SurvivalClass c) { return static_cast<int>(c); }

inline const char* class_name(SurvivalClass c) {
  switch (c) {
    case SurvivalClass::Short: return "short";
    case SurvivalClass::Mid: return "mid";
    case SurvivalClass::Long: return "long";
  }
  return "?";
}

}  // namespace mmmna::data
