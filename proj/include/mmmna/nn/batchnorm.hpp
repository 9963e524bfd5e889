#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::nn {

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of [N×C×...]. Training mode uses batch statistics (biased
/// variance for normalization, unbiased for the running estimate) and updates the running
/// tensors in place; eval mode uses the running statistics.
template <class T>
Var<T> batchnorm3d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                   Tensor<T>& running_var, bool training, const BatchNormOptions& opt = {}) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("batchnorm3d: expected [N×C×...], got " + shape_str(xv.shape()));
  const std::size_t batch = xv.dim(0);
  const std::size_t channels = xv.dim(1);
  if (gamma.value().size() != channels || beta.value().size() != channels || running_mean.size() != channels ||
      running_var.size() != channels) {
    throw DimensionError("batchnorm3d: parameters do not match " + std::to_string(channels) + " channels");
  }
  if (training && batch < 2) {
    throw ContractError("batchnorm3d: training mode needs a batch of at least 2, got " + std::to_string(batch));
  }
  const std::size_t spatial = xv.size() / (batch * channels);
  const std::size_t count = batch * spatial;

  std::vector<T> mean(channels), inv_std(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xv.data().data() + (n * channels + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xv.data().data() + (n * channels + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = ss / static_cast<double>(count - 1);
      running_mean[ch] = static_cast<T>((1.0 - opt.momentum) * running_mean[ch] + opt.momentum * mu);
      running_var[ch] = static_cast<T>((1.0 - opt.momentum) * running_var[ch] + opt.momentum * unbiased);
    } else {
      mean[ch] = running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + opt.eps));
    }
  }

  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t base = (n * channels + ch) * spatial;
      const T g = gamma.value()[ch], b = beta.value()[ch];
      for (std::size_t i = 0; i < spatial; ++i) {
        const T h = (xv[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = g * h + b;
      }
    }

  return x.tape().record(
      "batchnorm3d", std::move(out), {x.id(), gamma.id(), beta.id()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, spatial,
       training](const BackwardContext<T>& c) {
        const Tensor<T>& gy = c.grad_output;
        const Tensor<T>& gam = *c.inputs[1];
        const double m = static_cast<double>(batch * spatial);
        for (std::size_t ch = 0; ch < channels; ++ch) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              sum_g += gy[base + i];
              sum_gh += gy[base + i] * xhat[base + i];
            }
          }
          if (c.input_grads[1]) (*c.input_grads[1])[ch] += static_cast<T>(sum_gh);
          if (c.input_grads[2]) (*c.input_grads[2])[ch] += static_cast<T>(sum_g);
          if (!c.input_grads[0]) continue;
          Tensor<T>& gx = *c.input_grads[0];
          const double scale = static_cast<double>(gam[ch]) * inv_std[ch];
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              if (training) {
                gx[base + i] += static_cast<T>(scale * (gy[base + i] - sum_g / m - xhat[base + i] * sum_gh / m));
              } else {
                gx[base + i] += static_cast<T>(scale * gy[base + i]);
              }
            }
          }
        }
      });
}

struct BatchNorm3dLayer {
  std::size_t gamma = 0, beta = 0;
  std::size_t running_mean = 0, running_var = 0;
  BatchNormOptions options{};

  template <class T>
  static BatchNorm3dLayer create(ParamStore<T>& store, const std::string& name, std::size_t channels) {
    BatchNorm3dLayer layer;
    layer.gamma = store.add(name + ".gamma", Tensor<T>::ones({channels}));
    layer.beta = store.add(name + ".beta", Tensor<T>::zeros({channels}));
    layer.running_mean = store.add_buffer(name + ".running_mean", Tensor<T>::zeros({channels}));
    layer.running_var = store.add_buffer(name + ".running_var", Tensor<T>::ones({channels}));
    return layer;
  }

  template <class T>
  Var<T> forward(const Bound<T>& p, const Var<T>& x, bool training) const {
    return batchnorm3d(x, p[gamma], p[beta], p.buffer(running_mean), p.buffer(running_var), training, options);
  }
};

}  // namespace mmmna::nn
