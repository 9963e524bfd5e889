#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/harness/metrics.hpp"
#include "mmmna/harness/trainer.hpp"
#include "mmmna/model/inputs.hpp"

namespace mmmna::harness {

struct AblationRow {
  model::Availability available;
  std::string label;  // e.g. "flair+t1ce"
  FoldMetrics metrics;
  std::vector<Prediction> predictions;
};

/// Evaluates a trained model with each availability pattern, substituting FLAIR for the
/// missing modalities.
inline std::vector<AblationRow> run_missing_modality_ablation(const TrainedModel& t, std::span<const Input> subjects,
                                                              std::span<const model::Availability> configurations) {
  std::vector<AblationRow> rows;
  for (const auto& available : configurations) {
    if (!available[index_of(Modality::Flair)]) {
      throw ConfigError("ablation: configuration '" + model::availability_label(available) + "' lacks FLAIR");
    }
    std::vector<Input> substituted;
    substituted.reserve(subjects.size());
    for (const auto& s : subjects) substituted.push_back(model::substitute_missing(s, available));
    AblationRow row{available, model::availability_label(available), {}, predict(t, substituted)};
    row.metrics = evaluate(branch_predictions(row.predictions), labels_of(row.predictions));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// All eight FLAIR-containing patterns in table order.
inline std::vector<AblationRow> run_missing_modality_ablation(const TrainedModel& t, std::span<const Input> subjects) {
  const auto configs = model::missing_modality_configurations();
  return run_missing_modality_ablation(t, subjects, configs);
}

inline MetricsReport ablation_report(const std::vector<AblationRow>& rows) {
  MetricsReport r;
  for (const auto& row : rows) r.add(row.label, row.metrics);
  return r;
}

}  // namespace mmmna::harness
