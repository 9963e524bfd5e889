#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "mmmna/core/errors.hpp"

namespace mmmna::harness {

/// Paired outcomes of classifiers A and B on the same subjects.
struct ContingencyTable {
  std::size_t both_correct = 0;
  std::size_t b = 0;  // A correct, B wrong
  std::size_t c = 0;  // A wrong, B correct
  std::size_t both_wrong = 0;

  std::size_t total() const { return both_correct + b + c + both_wrong; }
};

struct McNemarResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // no discordant pairs
};

inline ContingencyTable contingency(std::span<const int> pred_a, std::span<const int> pred_b,
                                    std::span<const int> labels) {
  if (pred_a.size() != labels.size() || pred_b.size() != labels.size()) {
    throw ContractError("contingency: prediction and label counts differ");
  }
  ContingencyTable t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a = pred_a[i] == labels[i], b = pred_b[i] == labels[i];
    if (a && b) ++t.both_correct;
    else if (a) ++t.b;
    else if (b) ++t.c;
    else ++t.both_wrong;
  }
  return t;
}

/// Continuity-corrected McNemar test, χ² = (|b − c| − 1)² / (b + c), with the 1-dof
/// chi-square tail p = erfc(sqrt(χ²/2)).
inline McNemarResult mcnemar_test(const ContingencyTable& t) {
  McNemarResult r;
  const std::size_t n = t.b + t.c;
  if (n == 0) {
    r.degenerate = true;
    return r;
  }
  // Not clamped at zero: b = c gives 1 / (b + c).
  const double diff = std::abs(static_cast<double>(t.b) - static_cast<double>(t.c)) - 1.0;
  r.chi_square = diff * diff / static_cast<double>(n);
  r.p_value = std::erfc(std::sqrt(r.chi_square / 2.0));
  return r;
}

}  // namespace mmmna::harness
