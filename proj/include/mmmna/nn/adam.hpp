#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay: p ← p − lr·wd·p, then the bias-corrected Adam update.
template <class T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const noexcept { return options_; }
  long step_count() const noexcept { return step_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

  /// `grads[i]` belongs to `params.param(i)`; a null entry is a contract error.
  void step(ParamStore<T>& params, std::span<const Tensor<T>* const> grads) {
    if (grads.size() != params.size()) {
      throw ContractError("adam: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(params.size()) + " parameters");
    }
    if (m_.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.push_back(Tensor<T>::zeros(params.param(i).value.shape()));
        v_.push_back(Tensor<T>::zeros(params.param(i).value.shape()));
      }
    } else if (m_.size() != params.size()) {
      throw ContractError("adam: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grads[i] == nullptr) throw ContractError("adam: missing gradient for '" + params.param(i).name + "'");
      if (grads[i]->shape() != params.param(i).value.shape()) {
        throw DimensionError("adam: gradient shape mismatch for '" + params.param(i).name + "'");
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const double decay = 1.0 - options_.lr * options_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = params.param(i).value;
      const Tensor<T>& g = *grads[i];
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        const double mj = options_.beta1 * m[j] + (1.0 - options_.beta1) * gj;
        const double vj = options_.beta2 * v[j] + (1.0 - options_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double update = options_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + options_.eps);
        p[j] = static_cast<T>(decay * p[j] - update);
      }
    }
  }

 private:
  AdamOptions options_;
  std::vector<Tensor<T>> m_, v_;
  long step_ = 0;
};

}  // namespace mmmna::nn
