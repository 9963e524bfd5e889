#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/folds.hpp"
#include "mmmna/harness/mcnemar.hpp"
#include "mmmna/harness/metrics.hpp"
#include "mmmna/harness/trainer.hpp"

namespace mmmna::harness {

struct FoldResult {
  std::size_t fold = 0;
  std::vector<Prediction> predictions;  // test-fold subjects
  FoldMetrics metrics;                  // fusion branch
  int majority = 0;                     // majority class of the fold's training portion
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  MetricsReport report;  // fusion branch, one row per fold
  MetricsReport dummy;   // majority-class predictor, same folds

  /// Test predictions of every fold, in fold order.
  std::vector<Prediction> pooled_predictions() const {
    std::vector<Prediction> out;
    for (const auto& f : folds) out.insert(out.end(), f.predictions.begin(), f.predictions.end());
    return out;
  }

  /// The majority-class dummy's pooled predictions, aligned with pooled_predictions().
  std::vector<int> pooled_dummy_predictions() const {
    std::vector<int> out;
    for (const auto& f : folds) out.insert(out.end(), f.predictions.size(), f.majority);
    return out;
  }

  /// McNemar test of the fusion branch against the majority-class dummy over all subjects.
  McNemarResult versus_dummy() const {
    const auto preds = pooled_predictions();
    return mcnemar_test(contingency(branch_predictions(preds), pooled_dummy_predictions(), labels_of(preds)));
  }
};

struct CrossValidationOptions {
  std::size_t folds = 10;
  std::size_t workers = 1;  // folds trained concurrently
  std::function<void(const FoldResult&)> on_fold;
};

/// Stratified k-fold: fold f is the test set, fold (f + 1) mod k is the early-stopping
/// validation set, and the rest trains a model seeded with seed + f.
inline CrossValidationResult run_cross_validation(std::span<const Input> subjects, const TrainConfig& config,
                                                  const CrossValidationOptions& options = {}) {
  config.validate();
  if (options.folds < 2) throw ConfigError("cross validation: at least 2 folds are required");
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (!index.emplace(subjects[i].id, i).second) {
      throw ContractError("cross validation: duplicate subject id '" + subjects[i].id + "'");
    }
    ids.push_back(subjects[i].id);
  }
  const data::FoldSplit split = data::split_folds(ids, labels_of(subjects), options.folds, config.seed);
  auto members = [&](std::size_t f) {
    std::vector<Input> out;
    for (const auto& id : split.ids[f]) out.push_back(subjects[index.at(id)]);
    return out;
  };

  std::vector<FoldResult> results(options.folds);
  auto run_fold = [&](std::size_t f) {
    const std::size_t val_fold = (f + 1) % options.folds;
    std::vector<Input> train_set;
    for (std::size_t g = 0; g < options.folds; ++g) {
      if (g == f || g == val_fold) continue;
      auto part = members(g);
      train_set.insert(train_set.end(), part.begin(), part.end());
    }
    const auto val_set = members(val_fold);
    const auto test_set = members(f);
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + f;
    const TrainResult trained = train(train_set, val_set, fold_config);
    FoldResult r;
    r.fold = f;
    r.predictions = predict(trained.trained, test_set);
    r.metrics = evaluate(branch_predictions(r.predictions), labels_of(r.predictions));
    r.majority = majority_class(labels_of(train_set));
    r.epochs = trained.history.size();
    r.best_epoch = trained.best_epoch;
    results[f] = std::move(r);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, options.folds));
  std::mutex report_mutex;
  std::exception_ptr failure;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f; (f = next++) < options.folds;) {
      try {
        run_fold(f);
        if (options.on_fold) {
          std::lock_guard lock(report_mutex);
          options.on_fold(results[f]);
        }
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next = options.folds;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  CrossValidationResult cv;
  cv.folds = std::move(results);
  for (const auto& f : cv.folds) {
    const std::string name = "fold" + std::to_string(f.fold);
    cv.report.add(name, f.metrics);
    const auto labels = labels_of(f.predictions);
    cv.dummy.add(name, evaluate(std::vector<int>(labels.size(), f.majority), labels));
  }
  return cv;
}

}  // namespace mmmna::harness
