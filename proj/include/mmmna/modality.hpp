#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace mmmna {

inline constexpr std::size_t kModalityCount = 4;

/// Fixed modality order used for token layout, file names, and branch heads.
enum class Modality : std::size_t { Flair = 0, T1 = 1, T1Ce = 2, T2 = 3 };

inline constexpr std::array<Modality, kModalityCount> kModalities{Modality::Flair, Modality::T1, Modality::T1Ce,
                                                                 Modality::T2};

inline constexpr std::string_view modality_name(Modality m) {
  constexpr std::array<std::string_view, kModalityCount> names{"flair", "t1", "t1ce", "t2"};
  return names[static_cast<std::size_t>(m)];
}

inline constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

}  // namespace mmmna
