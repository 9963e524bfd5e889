#pragma once

#include <cmath>
#include <cstddef>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/ops.hpp"

namespace mmmna::fusion {

/// Fused tokens plus the attention weights that produced them.
template <class T>
struct AttentionResult {
  Var<T> output;   // [n × d]
  Var<T> weights;  // full: [n × n]; linformer: [n × k]
};

namespace detail {

template <class T>
void check_token_inputs(const Var<T>& tokens, const Var<T>& wq, const Var<T>& wk, const Var<T>& wv) {
  if (tokens.value().rank() != 2) {
    throw DimensionError("attention: tokens must be [n × d], got " + shape_str(tokens.shape()));
  }
  const std::size_t d = tokens.value().dim(1);
  for (const Var<T>* w : {&wq, &wk, &wv}) {
    if (w->shape() != Shape{d, d}) {
      throw DimensionError("attention: projection " + shape_str(w->shape()) + " does not match d = " +
                           std::to_string(d));
    }
  }
}

template <class T>
Var<T> scale_logits(const Var<T>& logits, std::size_t d, bool scale_qk) {
  if (!scale_qk) return logits;
  return mul_scalar(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
}

}  // namespace detail

/// Non-local self-attention over every token pair: softmax(Q·Kᵀ·s)·V with Q = X·Wq,
/// K = X·Wk, V = X·Wv and s = 1/sqrt(d) when `scale_qk`.
template <class T>
AttentionResult<T> full_attention(const Var<T>& tokens, const Var<T>& wq, const Var<T>& wk, const Var<T>& wv,
                                  bool scale_qk = true) {
  detail::check_token_inputs(tokens, wq, wk, wv);
  const std::size_t d = tokens.value().dim(1);
  const Var<T> q = matmul(tokens, wq);
  const Var<T> k = matmul(tokens, wk);
  const Var<T> v = matmul(tokens, wv);
  const Var<T> logits = detail::scale_logits(matmul(q, transpose(k)), d, scale_qk);
  const Var<T> p = softmax(logits, 1);
  return {matmul(p, v), p};
}

/// Low-rank attention: keys and values are projected along the sequence axis to rank k,
/// K' = E·K and V' = F·V, so the weight matrix softmax(Q·K'ᵀ·s) is [n × k].
template <class T>
AttentionResult<T> linformer_attention(const Var<T>& tokens, const Var<T>& wq, const Var<T>& wk, const Var<T>& wv,
                                       const Var<T>& e, const Var<T>& f, bool scale_qk = true) {
  detail::check_token_inputs(tokens, wq, wk, wv);
  const std::size_t n = tokens.value().dim(0);
  const std::size_t d = tokens.value().dim(1);
  if (e.value().rank() != 2 || e.shape() != f.shape() || e.value().dim(1) != n) {
    throw ConfigError("linformer_attention: projections " + shape_str(e.shape()) + " / " + shape_str(f.shape()) +
                      " do not match sequence length " + std::to_string(n));
  }
  if (e.value().dim(0) > n) throw ConfigError("linformer_attention: projection rank exceeds sequence length");
  const Var<T> q = matmul(tokens, wq);
  const Var<T> k_reduced = matmul(e, matmul(tokens, wk));
  const Var<T> v_reduced = matmul(f, matmul(tokens, wv));
  const Var<T> logits = detail::scale_logits(matmul(q, transpose(k_reduced)), d, scale_qk);
  const Var<T> p = softmax(logits, 1);
  return {matmul(p, v_reduced), p};
}

}  // namespace mmmna::fusion
