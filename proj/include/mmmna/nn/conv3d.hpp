#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/kernels.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/params.hpp"

namespace mmmna::nn {

using Extent3 = std::array<std::size_t, 3>;

/// floor((in + 2·pad − kernel) / stride) + 1
inline std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                                        const char* op) {
  if (stride == 0 || kernel == 0) throw ConfigError(std::string(op) + ": kernel and stride must be positive");
  if (in + 2 * pad < kernel) {
    throw DimensionError(std::string(op) + ": window " + std::to_string(kernel) + " exceeds padded extent " +
                         std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

inline Extent3 window_output_extents(const Extent3& in, const Extent3& kernel, const Extent3& stride,
                                     const Extent3& pad, const char* op) {
  return {window_output_extent(in[0], kernel[0], stride[0], pad[0], op),
          window_output_extent(in[1], kernel[1], stride[1], pad[1], op),
          window_output_extent(in[2], kernel[2], stride[2], pad[2], op)};
}

struct Conv3dOptions {
  Extent3 stride{1, 1, 1};
  Extent3 padding{0, 0, 0};
};

namespace detail {

struct ConvGeometry {
  std::size_t batch, in_c, out_c;
  Extent3 in, kernel, out, stride, pad;
  std::size_t k_rows() const { return in_c * kernel[0] * kernel[1] * kernel[2]; }
  std::size_t out_plane() const { return out[1] * out[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
};

inline constexpr std::size_t kConvTileColumns = 2048;

/// Unfolds output depth planes [od0, od1) of one sample into col[K × L].
template <class T>
void im2col(const ConvGeometry& g, const T* x, std::size_t od0, std::size_t od1, T* col) {
  const std::size_t len = (od1 - od0) * g.out_plane();
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.in_c; ++ci)
    for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++r) {
          T* row = col + r * len;
          for (std::size_t od = od0; od < od1; ++od) {
            const long id = static_cast<long>(od * g.stride[0] + kd) - static_cast<long>(g.pad[0]);
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              T* dst = row + ((od - od0) * g.out[1] + oh) * g.out[2];
              const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad[1]);
              if (id < 0 || id >= static_cast<long>(g.in[0]) || ih < 0 || ih >= static_cast<long>(g.in[1])) {
                std::fill_n(dst, g.out[2], T{0});
                continue;
              }
              const T* src = x + ((ci * g.in[0] + id) * g.in[1] + ih) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + kw) - static_cast<long>(g.pad[2]);
                dst[ow] = (iw >= 0 && iw < static_cast<long>(g.in[2])) ? src[iw] : T{0};
              }
            }
          }
        }
}

/// Scatter-adds col[K × L] back onto the input gradient of one sample.
template <class T>
void col2im(const ConvGeometry& g, const T* col, std::size_t od0, std::size_t od1, T* dx) {
  const std::size_t len = (od1 - od0) * g.out_plane();
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.in_c; ++ci)
    for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw, ++r) {
          const T* row = col + r * len;
          for (std::size_t od = od0; od < od1; ++od) {
            const long id = static_cast<long>(od * g.stride[0] + kd) - static_cast<long>(g.pad[0]);
            if (id < 0 || id >= static_cast<long>(g.in[0])) continue;
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              const long ih = static_cast<long>(oh * g.stride[1] + kh) - static_cast<long>(g.pad[1]);
              if (ih < 0 || ih >= static_cast<long>(g.in[1])) continue;
              const T* src = row + ((od - od0) * g.out[1] + oh) * g.out[2];
              T* dst = dx + ((ci * g.in[0] + id) * g.in[1] + ih) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + kw) - static_cast<long>(g.pad[2]);
                if (iw >= 0 && iw < static_cast<long>(g.in[2])) dst[iw] += src[ow];
              }
            }
          }
        }
}

}  // namespace detail

/// 3D cross-correlation with zero padding. x: [N×C×D×H×W], weight: [O×C×kD×kH×kW],
/// bias: [O] or invalid Var for none.
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv3dOptions& opt) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (xv.rank() != 5 || wv.rank() != 5) {
    throw DimensionError("conv3d: expected rank-5 input and weight, got " + shape_str(xv.shape()) + " and " +
                         shape_str(wv.shape()));
  }
  if (xv.dim(1) != wv.dim(1)) {
    throw DimensionError("conv3d: input channels of " + shape_str(xv.shape()) + " do not match weight " +
                         shape_str(wv.shape()));
  }
  detail::ConvGeometry g{};
  g.batch = xv.dim(0);
  g.in_c = xv.dim(1);
  g.out_c = wv.dim(0);
  g.in = {xv.dim(2), xv.dim(3), xv.dim(4)};
  g.kernel = {wv.dim(2), wv.dim(3), wv.dim(4)};
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.out = window_output_extents(g.in, g.kernel, g.stride, g.pad, "conv3d");
  const bool has_bias = bias.valid();
  if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != g.out_c)) {
    throw DimensionError("conv3d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(g.out_c) +
                         " output channels");
  }

  const std::size_t krows = g.k_rows();
  const std::size_t vol = g.out_volume();
  const std::size_t planes = std::max<std::size_t>(1, detail::kConvTileColumns / g.out_plane());
  Tensor<T> out({g.batch, g.out_c, g.out[0], g.out[1], g.out[2]});
  std::vector<T> col;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xs = xv.data().data() + n * g.in_c * g.in_volume();
    T* ys = out.data().data() + n * g.out_c * vol;
    for (std::size_t od0 = 0; od0 < g.out[0]; od0 += planes) {
      const std::size_t od1 = std::min(g.out[0], od0 + planes);
      const std::size_t len = (od1 - od0) * g.out_plane();
      col.resize(krows * len);
      detail::im2col(g, xs, od0, od1, col.data());
      kernels::gemm_nn(g.out_c, len, krows, wv.data().data(), krows, col.data(), len, ys + od0 * g.out_plane(), vol);
    }
    if (has_bias)
      for (std::size_t o = 0; o < g.out_c; ++o) {
        const T b = bias.value()[o];
        for (std::size_t p = 0; p < vol; ++p) ys[o * vol + p] += b;
      }
  }

  std::vector<NodeId> inputs{x.id(), weight.id()};
  if (has_bias) inputs.push_back(bias.id());
  return x.tape().record("conv3d", std::move(out), std::move(inputs), [g, planes](const BackwardContext<T>& c) {
    const std::size_t krows = g.k_rows();
    const std::size_t vol = g.out_volume();
    const T* xd = c.inputs[0]->data().data();
    const T* wd = c.inputs[1]->data().data();
    const T* gy = c.grad_output.data().data();
    Tensor<T>* gx = c.input_grads[0];
    Tensor<T>* gw = c.input_grads[1];
    Tensor<T>* gb = c.input_grads.size() > 2 ? c.input_grads[2] : nullptr;
    std::vector<T> col;
    std::vector<T> dcol;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* gys = gy + n * g.out_c * vol;
      for (std::size_t od0 = 0; od0 < g.out[0]; od0 += planes) {
        const std::size_t od1 = std::min(g.out[0], od0 + planes);
        const std::size_t len = (od1 - od0) * g.out_plane();
        const T* gtile = gys + od0 * g.out_plane();
        if (gw) {
          col.resize(krows * len);
          detail::im2col(g, xd + n * g.in_c * g.in_volume(), od0, od1, col.data());
          kernels::gemm_nt(g.out_c, krows, len, gtile, vol, col.data(), len, gw->data().data(), krows);
        }
        if (gx) {
          dcol.assign(krows * len, T{0});
          kernels::gemm_tn(krows, len, g.out_c, wd, krows, gtile, vol, dcol.data(), len);
          detail::col2im(g, dcol.data(), od0, od1, gx->data().data() + n * g.in_c * g.in_volume());
        }
      }
      if (gb)
        for (std::size_t o = 0; o < g.out_c; ++o) {
          T acc = 0;
          for (std::size_t p = 0; p < vol; ++p) acc += gys[o * vol + p];
          (*gb)[o] += acc;
        }
    }
  });
}

struct Conv3dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Extent3 kernel{3, 3, 3};
  Conv3dOptions options{};
  bool bias = false;
};

/// Convolution layer bound to entries of a ParamStore.
struct Conv3dLayer {
  Conv3dSpec spec;
  std::size_t weight = 0;
  std::optional<std::size_t> bias;

  template <class T>
  static Conv3dLayer create(ParamStore<T>& store, const std::string& name, const Conv3dSpec& spec, Rng& rng) {
    const std::size_t fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
    Conv3dLayer layer{spec, 0, std::nullopt};
    layer.weight = store.add(name + ".weight",
                             kaiming_normal<T>({spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1],
                                                spec.kernel[2]},
                                               fan_in, rng));
    if (spec.bias) layer.bias = store.add(name + ".bias", Tensor<T>::zeros({spec.out_channels}));
    return layer;
  }

  template <class T>
  Var<T> forward(const Bound<T>& p, const Var<T>& x) const {
    return conv3d(x, p[weight], bias ? p[*bias] : Var<T>(), spec.options);
  }

  Extent3 output_extents(const Extent3& in) const {
    return window_output_extents(in, spec.kernel, spec.options.stride, spec.options.padding, "conv3d");
  }
};

}  // namespace mmmna::nn
