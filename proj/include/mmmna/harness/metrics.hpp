#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/survival.hpp"

namespace mmmna::harness {

inline constexpr std::size_t kClasses = static_cast<std::size_t>(data::kClassCount);

/// confusion[true][predicted]
using ConfusionMatrix = std::array<std::array<std::size_t, kClasses>, kClasses>;

struct FoldMetrics {
  double accuracy = 0, recall = 0, precision = 0, f_score = 0;
  ConfusionMatrix confusion{};
  std::size_t count = 0;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int v : {predictions[i], labels[i]}) {
      if (v < 0 || v >= static_cast<int>(kClasses)) throw ContractError("evaluate: class " + std::to_string(v) + " out of range");
    }
    ++cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  return cm;
}

inline double f_score(double precision, double recall) {
  const double d = precision + recall;
  return d > 0.0 ? 2.0 * precision * recall / d : 0.0;
}

/// Accuracy plus one-vs-rest precision and recall macro-averaged over the classes; the F-score
/// is the harmonic mean of the macro precision and macro recall. Zero denominators count as 0.
inline FoldMetrics evaluate(std::span<const int> predictions, std::span<const int> labels) {
  FoldMetrics m;
  m.confusion = confusion_matrix(predictions, labels);
  m.count = labels.size();
  if (m.count == 0) return m;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < kClasses; ++c) correct += m.confusion[c][c];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  for (std::size_t c = 0; c < kClasses; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < kClasses; ++o) {
      predicted += m.confusion[o][c];
      actual += m.confusion[c][o];
    }
    const double tp = static_cast<double>(m.confusion[c][c]);
    m.precision += predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall += actual ? tp / static_cast<double>(actual) : 0.0;
  }
  m.precision /= static_cast<double>(kClasses);
  m.recall /= static_cast<double>(kClasses);
  m.f_score = f_score(m.precision, m.recall);
  return m;
}

struct MeanStd {
  double mean = 0, std = 0;
};

/// Mean and sample standard deviation (n − 1 denominator; 0 for a single value).
inline MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return r;
}

inline constexpr std::array<const char*, 4> kMetricNames{"accuracy", "recall", "precision", "f_score"};

inline std::array<double, 4> metric_values(const FoldMetrics& m) { return {m.accuracy, m.recall, m.precision, m.f_score}; }

/// Named rows (folds or ablation configurations) plus their aggregate.
struct MetricsReport {
  std::vector<std::string> names;
  std::vector<FoldMetrics> rows;

  void add(std::string name, FoldMetrics m) {
    names.push_back(std::move(name));
    rows.push_back(m);
  }

  std::array<MeanStd, 4> summary() const {
    std::array<MeanStd, 4> out;
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> v;
      for (const auto& r : rows) v.push_back(metric_values(r)[k]);
      out[k] = mean_std(v);
    }
    return out;
  }
};

/// Most frequent label (ties to the lower class).
inline int majority_class(std::span<const int> labels) {
  std::array<std::size_t, kClasses> counts{};
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(kClasses)) throw ContractError("majority_class: label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kClasses; ++c)
    if (counts[c] > counts[best]) best = c;
  return static_cast<int>(best);
}

}  // namespace mmmna::harness
