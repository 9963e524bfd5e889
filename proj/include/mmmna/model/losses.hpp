#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/modality.hpp"

namespace mmmna::model {

inline constexpr double kProbabilityFloor = 1e-7;

/// One binary focal term for target y ∈ {0,1} and probability p:
///   −α·y·(1−p)^γ·log p − (1−α)·(1−y)·p^γ·log(1−p)
/// p is clamped to [1e-7, 1−1e-7] first.
inline double focal_term(int y, double p, double alpha, double gamma) {
  if (y != 0 && y != 1) throw ContractError("focal_term: target must be 0 or 1");
  p = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  if (y == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

/// Multi-class focal loss on one logit vector: one-vs-rest sum of focal terms over classes.
inline double focal_loss(std::span<const double> logits, int label, double alpha, double gamma) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ContractError("focal_loss: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(logits.size()) + ")");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  double loss = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    loss += focal_term(static_cast<int>(c) == label ? 1 : 0, std::exp(logits[c] - mx) / z, alpha, gamma);
  }
  return loss;
}

/// One-hot [B×classes] targets.
template <class T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ContractError("one_hot: empty label list");
  Tensor<T> y({labels.size(), classes});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw ContractError("one_hot: label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(classes) +
                          ")");
    }
    y[b * classes + static_cast<std::size_t>(labels[b])] = T{1};
  }
  return y;
}

/// Batched focal loss on the tape: logits [B×C], one-hot targets [B×C]; mean over the batch
/// of the per-sample class sums.
template <class T>
Var<T> focal_loss(const Var<T>& logits, const Tensor<T>& targets, double alpha, double gamma) {
  if (logits.value().rank() != 2 || targets.shape() != logits.shape()) {
    throw DimensionError("focal_loss: logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const std::size_t classes = logits.shape()[1];
  for (std::size_t b = 0; b < targets.dim(0); ++b) {
    T row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T v = targets[b * classes + c];
      if (v != T{0} && v != T{1}) throw ContractError("focal_loss: targets must be one-hot");
      row += v;
    }
    if (row != T{1}) throw ContractError("focal_loss: targets must be one-hot");
  }
  Tape<T>& tape = logits.tape();
  Tensor<T> negatives = targets;
  for (T& v : negatives.data()) v = T{1} - v;
  const Var<T> y = tape.constant(targets);
  const Var<T> not_y = tape.constant(std::move(negatives));

  const T lo = static_cast<T>(kProbabilityFloor);
  const Var<T> p = clamp(softmax(logits, 1), lo, T{1} - lo);
  const Var<T> q = add_scalar(mul_scalar(p, T{-1}), T{1});
  const T g = static_cast<T>(gamma);
  const Var<T> positive = mul(mul(y, pow_scalar(q, g)), log(p));
  const Var<T> negative = mul(mul(not_y, pow_scalar(p, g)), log(q));
  const Var<T> per_entry = add(mul_scalar(positive, static_cast<T>(-alpha)), mul_scalar(negative, static_cast<T>(alpha - 1.0)));
  return mul_scalar(sum(per_entry), T{1} / static_cast<T>(targets.dim(0)));
}

/// λ · (sum of the four modality-branch losses) + fusion-branch loss.
inline double total_loss(const std::array<double, kModalityCount>& modality_losses, double fusion_loss,
                         double lambda) {
  double s = 0.0;
  for (double v : modality_losses) s += v;
  return s * lambda + fusion_loss;
}

template <class T>
Var<T> total_loss(const std::array<Var<T>, kModalityCount>& modality_losses, const Var<T>& fusion_loss,
                  double lambda) {
  Var<T> s = modality_losses[0];
  for (std::size_t m = 1; m < kModalityCount; ++m) s = add(s, modality_losses[m]);
  return add(mul_scalar(s, static_cast<T>(lambda)), fusion_loss);
}

}  // namespace mmmna::model
