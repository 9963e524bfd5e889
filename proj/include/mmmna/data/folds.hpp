#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/nn/init.hpp"

namespace mmmna::data {

struct FoldSplit {
  std::size_t folds = 0;
  std::vector<std::vector<std::string>> ids;  // ids[f] = members of fold f
};

/// Stratified k-fold split. Within each class the ids are shuffled by `seed`, then all
/// classes are dealt round-robin with one running counter, so fold sizes differ by at most
/// one and so do the per-class counts.
inline FoldSplit split_folds(const std::vector<std::string>& ids, const std::vector<int>& classes, std::size_t folds,
                             std::uint64_t seed) {
  if (classes.size() != ids.size()) throw ContractError("split_folds: one class per id is required");
  if (folds == 0) throw ConfigError("split_folds: fold count must be positive");
  if (folds > ids.size()) {
    throw ConfigError("split_folds: " + std::to_string(folds) + " folds for " + std::to_string(ids.size()) +
                      " subjects");
  }
  std::map<int, std::vector<std::string>> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) by_class[classes[i]].push_back(ids[i]);

  nn::Rng rng = nn::seeded_rng(seed, 0xF01Du);
  FoldSplit split{folds, std::vector<std::vector<std::string>>(folds)};
  std::size_t counter = 0;
  for (auto& [cls, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (const std::string& id : members) split.ids[counter++ % folds].push_back(id);
  }
  return split;
}

/// Unstratified form: every id in one class.
inline FoldSplit split_folds(const std::vector<std::string>& ids, std::size_t folds, std::uint64_t seed) {
  return split_folds(ids, std::vector<int>(ids.size(), 0), folds, seed);
}

}  // namespace mmmna::data
