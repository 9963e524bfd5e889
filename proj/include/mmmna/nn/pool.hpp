#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/nn/conv3d.hpp"

namespace mmmna::nn {

struct MaxPool3dOptions {
  Extent3 kernel{2, 2, 2};
  Extent3 stride{2, 2, 2};
  Extent3 padding{0, 0, 0};
};

/// Windowed maximum over [N×C×D×H×W]. Padded positions never win. The gradient goes to the
/// first maximal element of each window in scan order.
template <class T>
Var<T> maxpool3d(const Var<T>& x, const MaxPool3dOptions& opt) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 5) throw DimensionError("maxpool3d: expected rank-5 input, got " + shape_str(xv.shape()));
  for (std::size_t a = 0; a < 3; ++a) {
    if (opt.padding[a] >= opt.kernel[a]) throw ConfigError("maxpool3d: padding must be smaller than the window");
  }
  const Extent3 in{xv.dim(2), xv.dim(3), xv.dim(4)};
  const Extent3 out = window_output_extents(in, opt.kernel, opt.stride, opt.padding, "maxpool3d");
  const std::size_t channels = xv.dim(0) * xv.dim(1);
  const std::size_t in_vol = in[0] * in[1] * in[2];
  const std::size_t out_vol = out[0] * out[1] * out[2];

  Tensor<T> result({xv.dim(0), xv.dim(1), out[0], out[1], out[2]});
  std::vector<std::size_t> argmax(result.size());
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const T* src = xv.data().data() + ch * in_vol;
    for (std::size_t od = 0; od < out[0]; ++od)
      for (std::size_t oh = 0; oh < out[1]; ++oh)
        for (std::size_t ow = 0; ow < out[2]; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_at = 0;
          bool found = false;
          for (std::size_t kd = 0; kd < opt.kernel[0]; ++kd) {
            const long id = static_cast<long>(od * opt.stride[0] + kd) - static_cast<long>(opt.padding[0]);
            if (id < 0 || id >= static_cast<long>(in[0])) continue;
            for (std::size_t kh = 0; kh < opt.kernel[1]; ++kh) {
              const long ih = static_cast<long>(oh * opt.stride[1] + kh) - static_cast<long>(opt.padding[1]);
              if (ih < 0 || ih >= static_cast<long>(in[1])) continue;
              for (std::size_t kw = 0; kw < opt.kernel[2]; ++kw) {
                const long iw = static_cast<long>(ow * opt.stride[2] + kw) - static_cast<long>(opt.padding[2]);
                if (iw < 0 || iw >= static_cast<long>(in[2])) continue;
                const std::size_t at = (static_cast<std::size_t>(id) * in[1] + ih) * in[2] + iw;
                if (!found || src[at] > best) {
                  best = src[at];
                  best_at = at;
                  found = true;
                }
              }
            }
          }
          const std::size_t o = ch * out_vol + (od * out[1] + oh) * out[2] + ow;
          result[o] = best;
          argmax[o] = ch * in_vol + best_at;
        }
  }
  return x.tape().record("maxpool3d", std::move(result), {x.id()},
                         [argmax = std::move(argmax)](const BackwardContext<T>& c) {
                           Tensor<T>& gx = *c.input_grads[0];
                           for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += c.grad_output[o];
                         });
}

}  // namespace mmmna::nn
