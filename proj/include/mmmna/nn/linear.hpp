#pragma once

#include <cstddef>
#include <string>

#include "mmmna/core/ops.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::nn {

/// x[N×in] · Wᵀ + b, with W stored as [out×in].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.value().dim(1) != weight.value().dim(1)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  return add_bias(matmul(x, transpose(weight)), bias);
}

struct LinearLayer {
  std::size_t weight = 0, bias = 0;

  template <class T>
  static LinearLayer create(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer layer;
    layer.weight = store.add(name + ".weight", kaiming_normal<T>({out, in}, in, rng));
    layer.bias = store.add(name + ".bias", Tensor<T>::zeros({out}));
    return layer;
  }

  template <class T>
  Var<T> forward(const Bound<T>& p, const Var<T>& x) const {
    return linear(x, p[weight], p[bias]);
  }
};

}  // namespace mmmna::nn
