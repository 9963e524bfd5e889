#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/augment.hpp"
#include "mmmna/harness/metrics.hpp"
#include "mmmna/harness/train_config.hpp"
#include "mmmna/model/mmmna.hpp"
#include "mmmna/nn/adam.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::harness {

using Input = model::SubjectInput<float>;

/// A model structure with its float parameters.
struct TrainedModel {
  TrainConfig config;
  model::MMMNAModel model;
  nn::ParamStore<float> params;
};

inline TrainedModel initialize_model(const TrainConfig& config) {
  config.validate();
  TrainedModel t;
  t.config = config;
  t.model = model::MMMNAModel::create(t.params, config.model_config());
  return t;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;                 // mean total loss over batches
  std::optional<double> val_loss;        // fusion-branch focal loss
  std::optional<double> train_accuracy;  // eval-mode fusion accuracy when tracked
};

struct TrainOptions {
  /// Stop as soon as eval-mode fusion accuracy on the training set reaches this (0 = off).
  double target_train_accuracy = 0.0;
  std::function<void(const EpochRecord&, const TrainedModel&)> on_epoch;
};

struct TrainResult {
  TrainedModel trained;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_loss;
  bool stopped_early = false;
};

/// Per-subject predictions of every branch.
struct Prediction {
  std::string id;
  int label = 0;
  std::array<int, model::kBranchCount> branch{};
};

inline std::vector<int> branch_predictions(std::span<const Prediction> preds, std::size_t branch = model::kFusionBranch) {
  std::vector<int> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.branch.at(branch));
  return out;
}

inline std::vector<int> labels_of(std::span<const Prediction> preds) {
  std::vector<int> out;
  for (const auto& p : preds) out.push_back(p.label);
  return out;
}

inline std::vector<int> labels_of(std::span<const Input> inputs) {
  std::vector<int> out;
  for (const auto& s : inputs) out.push_back(s.label);
  return out;
}

/// Applies one flip/rotation to every modality and the mask of a prepared subject. The
/// non-image features are invariant under voxel permutations.
inline Input augment_input(const Input& s, const data::Augmentation& aug) {
  if (aug.is_identity()) return s;
  Input out = s;
  for (auto& m : out.modalities) {
    m.volume = data::apply_augmentation(m.volume, aug);
    m.seg = data::apply_augmentation(m.seg, aug);
  }
  return out;
}

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Batches of `size` over `order`; a trailing singleton joins the previous batch because
/// batch normalization needs two samples in training mode.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + size)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

}  // namespace detail

/// Eval-mode forward in chunks of `batch_size`.
inline std::vector<Prediction> predict(const TrainedModel& t, std::span<const Input> subjects) {
  std::vector<Prediction> out;
  out.reserve(subjects.size());
  nn::ParamStore<float> params = t.params;  // eval mode leaves buffers untouched; the copy keeps this const
  const std::size_t chunk = std::max<std::size_t>(1, t.config.batch_size);
  for (std::size_t i = 0; i < subjects.size(); i += chunk) {
    const auto batch = subjects.subspan(i, std::min(chunk, subjects.size() - i));
    Tape<float> tape;
    const nn::Bound<float> bound(tape, params, false);
    const auto result = t.model.forward<float>(bound, batch, false);
    std::array<std::vector<int>, model::kBranchCount> preds;
    for (std::size_t b = 0; b < model::kBranchCount; ++b) preds[b] = model::argmax_rows(result.logits[b].value());
    for (std::size_t j = 0; j < batch.size(); ++j) {
      Prediction p{batch[j].id, batch[j].label, {}};
      for (std::size_t b = 0; b < model::kBranchCount; ++b) p.branch[b] = preds[b][j];
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// Mean eval-mode fusion-branch focal loss over a subject set.
inline double fusion_loss(const TrainedModel& t, std::span<const Input> subjects) {
  nn::ParamStore<float> params = t.params;
  const std::size_t chunk = std::max<std::size_t>(1, t.config.batch_size);
  double total = 0.0;
  for (std::size_t i = 0; i < subjects.size(); i += chunk) {
    const auto batch = subjects.subspan(i, std::min(chunk, subjects.size() - i));
    Tape<float> tape;
    const nn::Bound<float> bound(tape, params, false);
    const auto out = t.model.forward<float>(bound, batch, false);
    const auto labels = labels_of(batch);
    const Var<float> l = model::focal_loss(out.logits[model::kFusionBranch], model::one_hot<float>(labels, 3),
                                           t.config.alpha, t.config.gamma);
    total += static_cast<double>(l.value()[0]) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(subjects.size());
}

inline double fusion_accuracy(const TrainedModel& t, std::span<const Input> subjects) {
  const auto preds = predict(t, subjects);
  return evaluate(branch_predictions(preds), labels_of(preds)).accuracy;
}

/// Adam on the weighted total loss with seeded shuffling and augmentation. With a
/// validation set, training stops after `patience` epochs without a lower validation
/// fusion loss and the best parameters are restored.
inline TrainResult train(std::span<const Input> train_set, std::span<const Input> val_set, const TrainConfig& config,
                         const TrainOptions& options = {}) {
  config.validate();
  if (train_set.size() < 2) throw ContractError("train: at least two training subjects are required");
  for (const auto& a : train_set)
    for (const auto& b : val_set)
      if (a.id == b.id) throw ContractError("train: subject '" + a.id + "' is in both training and validation sets");

  TrainResult result{initialize_model(config), {}, 0, std::nullopt, false};
  TrainedModel& t = result.trained;
  nn::Adam<float> optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  std::optional<nn::ParamStore<float>> best;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    nn::Rng rng = nn::seeded_rng(config.seed, detail::mix(0x7EA1u, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const auto batches = detail::make_batches(order, config.batch_size);

    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<Input> batch;
      std::vector<int> labels;
      for (std::size_t idx : batches[bi]) {
        const Input& s = train_set[idx];
        if (config.augment) {
          const std::uint64_t aug_seed = detail::mix(detail::mix(config.seed, epoch), idx);
          batch.push_back(augment_input(s, data::draw_augmentation(config.input_shape, aug_seed)));
        } else {
          batch.push_back(s);
        }
        labels.push_back(s.label);
      }
      try {
        Tape<float> tape;
        const nn::Bound<float> bound(tape, t.params);
        const auto out = t.model.forward<float>(bound, batch, true);
        const auto loss = t.model.loss(out, labels);
        const double value = loss.total.value()[0];
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        const auto grads = tape.backward(loss.total);
        optimizer.step(t.params, bound.gradients(grads));
        loss_sum += value;
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    if (!val_set.empty()) rec.val_loss = fusion_loss(t, val_set);
    if (options.target_train_accuracy > 0.0) rec.train_accuracy = fusion_accuracy(t, train_set);
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec, t);

    if (rec.val_loss) {
      if (!result.best_val_loss || *rec.val_loss < *result.best_val_loss) {
        result.best_val_loss = rec.val_loss;
        result.best_epoch = epoch;
        best = t.params;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.stopped_early = true;
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
    if (rec.train_accuracy && *rec.train_accuracy >= options.target_train_accuracy) {
      result.stopped_early = true;
      break;
    }
  }
  if (best) t.params = std::move(*best);
  return result;
}

}  // namespace mmmna::harness
