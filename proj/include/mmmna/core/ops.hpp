#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/kernels.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/core/tensor.hpp"

// Differentiable operations over tape variables. Broadcasting is limited to
// scalar-with-tensor and trailing-axis bias addition.
namespace mmmna {

namespace detail {

template <class T>
Tape<T>& common_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data().data();
  const T* s = src.data().data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <class T>
T total(const Tensor<T>& t) {
  T acc = 0;
  for (T v : t.data()) acc += v;
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b, "add");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape() && av.size() == 1) return add(b, a);
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    detail::accumulate(out, bv);
    return tape.record("add", std::move(out), {a.id(), b.id()}, [](const BackwardContext<T>& c) {
      for (Tensor<T>* g : c.input_grads)
        if (g) detail::accumulate(*g, c.grad_output);
    });
  }
  if (bv.size() == 1) {
    Tensor<T> out = av;
    const T s = bv[0];
    for (T& v : out.data()) v += s;
    return tape.record("add", std::move(out), {a.id(), b.id()}, [](const BackwardContext<T>& c) {
      if (c.input_grads[0]) detail::accumulate(*c.input_grads[0], c.grad_output);
      if (c.input_grads[1]) (*c.input_grads[1])[0] += detail::total(c.grad_output);
    });
  }
  throw DimensionError("add: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) +
                       " are not compatible");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b, "mul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape() && av.size() == 1) return mul(b, a);
  if (av.shape() == bv.shape()) {
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return tape.record("mul", std::move(out), {a.id(), b.id()}, [](const BackwardContext<T>& c) {
      const Tensor<T>& x = *c.inputs[0];
      const Tensor<T>& y = *c.inputs[1];
      const Tensor<T>& g = c.grad_output;
      if (c.input_grads[0])
        for (std::size_t i = 0; i < g.size(); ++i) (*c.input_grads[0])[i] += g[i] * y[i];
      if (c.input_grads[1])
        for (std::size_t i = 0; i < g.size(); ++i) (*c.input_grads[1])[i] += g[i] * x[i];
    });
  }
  if (bv.size() == 1) {
    Tensor<T> out = av;
    const T s = bv[0];
    for (T& v : out.data()) v *= s;
    return tape.record("mul", std::move(out), {a.id(), b.id()}, [](const BackwardContext<T>& c) {
      const Tensor<T>& x = *c.inputs[0];
      const T s = (*c.inputs[1])[0];
      const Tensor<T>& g = c.grad_output;
      if (c.input_grads[0])
        for (std::size_t i = 0; i < g.size(); ++i) (*c.input_grads[0])[i] += g[i] * s;
      if (c.input_grads[1]) {
        T acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
        (*c.input_grads[1])[0] += acc;
      }
    });
  }
  throw DimensionError("mul: shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()) +
                       " are not compatible");
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v += s;
  return x.tape().record("add_scalar", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    detail::accumulate(*c.input_grads[0], c.grad_output);
  });
}

template <class T>
Var<T> mul_scalar(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= s;
  return x.tape().record("mul_scalar", std::move(out), {x.id()}, [s](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * c.grad_output[i];
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add(a, mul_scalar(b, T{-1}));
}

/// x[..., C] + bias[C]
template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  Tape<T>& tape = detail::common_tape(x, bias, "add_bias");
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  if (xv.rank() == 0 || bv.rank() != 1 || bv.dim(0) != xv.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match trailing axis of " +
                         shape_str(xv.shape()));
  }
  const std::size_t width = bv.size();
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % width];
  return tape.record("add_bias", std::move(out), {x.id(), bias.id()}, [width](const BackwardContext<T>& c) {
    const Tensor<T>& g = c.grad_output;
    if (c.input_grads[0]) detail::accumulate(*c.input_grads[0], g);
    if (c.input_grads[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*c.input_grads[1])[i % width] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return x.tape().record("relu", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i)
      if ((*c.inputs[0])[i] > T{0}) gx[i] += c.grad_output[i];
  });
}

template <class T>
Var<T> exp(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::exp(v);
  return x.tape().record("exp", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c.grad_output[i] * c.output[i];
  });
}

template <class T>
Var<T> log(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::log(v);
  return x.tape().record("log", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c.grad_output[i] / (*c.inputs[0])[i];
  });
}

/// x^e for x > 0 (or any x when e is a non-negative integer).
template <class T>
Var<T> pow_scalar(const Var<T>& x, T e) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::pow(v, e);
  return x.tape().record("pow_scalar", std::move(out), {x.id()}, [e](const BackwardContext<T>& c) {
    if (e == T{0}) return;
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += c.grad_output[i] * e * std::pow((*c.inputs[0])[i], e - T{1});
  });
}

/// Clamp to [lo, hi]; the gradient passes only where the input lies strictly inside.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::clamp(v, lo, hi);
  return x.tape().record("clamp", std::move(out), {x.id()}, [lo, hi](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = (*c.inputs[0])[i];
      if (v > lo && v < hi) gx[i] += c.grad_output[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  Tensor<T> out = Tensor<T>::scalar(detail::total(x.value()));
  return x.tape().record("sum", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    const T g = c.grad_output[0];
    for (T& v : c.input_grads[0]->data()) v += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return mul_scalar(sum(x), T{1} / static_cast<T>(x.value().size()));
}

// ---------------------------------------------------------------------------
// Matrix algebra

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b, "matmul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by " + shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor<T> out({m, q});
  kernels::gemm_nn(m, q, p, av.data().data(), p, bv.data().data(), q, out.data().data(), q);
  return tape.record("matmul", std::move(out), {a.id(), b.id()}, [m, p, q](const BackwardContext<T>& c) {
    const T* g = c.grad_output.data().data();
    if (c.input_grads[0])  // dA = G·Bᵀ
      kernels::gemm_nt(m, p, q, g, q, c.inputs[1]->data().data(), q, c.input_grads[0]->data().data(), p);
    if (c.input_grads[1])  // dB = Aᵀ·G
      kernels::gemm_tn(p, q, m, c.inputs[0]->data().data(), p, g, q, c.input_grads[1]->data().data(), q);
  });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(xv.shape()));
  const std::size_t r = xv.dim(0), cols = xv.dim(1);
  Tensor<T> out({cols, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * r + i] = xv[i * cols + j];
  return x.tape().record("transpose", std::move(out), {x.id()}, [r, cols](const BackwardContext<T>& c) {
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += c.grad_output[j * r + i];
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x.id()}, [](const BackwardContext<T>& c) {
    detail::accumulate(*c.input_grads[0], c.grad_output);
  });
}

/// Numerically stable softmax along `axis` (max subtracted before exponentiation).
template <class T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Tensor<T>& xv = x.value();
  const auto s = detail::split_at(xv.shape(), axis, "softmax");
  Tensor<T> out(xv.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mx = xv[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      T denom = 0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const T e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        denom += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= denom;
    }
  }
  return x.tape().record("softmax", std::move(out), {x.id()}, [s](const BackwardContext<T>& c) {
    const Tensor<T>& y = c.output;
    const Tensor<T>& g = c.grad_output;
    Tensor<T>& gx = *c.input_grads[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  if (parts.size() == 1) return parts.front();
  Tape<T>& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  std::vector<NodeId> ids;
  for (const Var<T>& p : parts) {
    detail::common_tape(parts.front(), p, "concat");
    const Shape& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == first[i];
    if (!ok) throw DimensionError("concat: " + shape_str(sh) + " incompatible with " + shape_str(first));
    extents.push_back(sh[axis]);
    out_shape[axis] += sh[axis];
    ids.push_back(p.id());
  }
  const auto s = detail::split_at(out_shape, axis, "concat");
  Tensor<T> out(out_shape);
  std::size_t start = 0;
  for (std::size_t idx = 0; idx < parts.size(); ++idx) {
    const Tensor<T>& pv = parts[idx].value();
    const std::size_t chunk = extents[idx] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data().data() + o * chunk, chunk, out.data().data() + (o * s.extent + start) * s.inner);
    }
    start += extents[idx];
  }
  return tape.record("concat", std::move(out), std::move(ids), [s, extents](const BackwardContext<T>& c) {
    std::size_t start = 0;
    for (std::size_t idx = 0; idx < extents.size(); ++idx) {
      const std::size_t chunk = extents[idx] * s.inner;
      if (Tensor<T>* g = c.input_grads[idx]) {
        for (std::size_t o = 0; o < s.outer; ++o) {
          const T* src = c.grad_output.data().data() + (o * s.extent + start) * s.inner;
          T* dst = g->data().data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      start += extents[idx];
    }
  });
}

/// Contiguous slice [begin, begin+length) along `axis`.
template <class T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t length) {
  const Tensor<T>& xv = x.value();
  const auto s = detail::split_at(xv.shape(), axis, "slice");
  if (length == 0 || begin + length > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                         ") exceeds axis extent of " + shape_str(xv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data().data() + (o * s.extent + begin) * s.inner, chunk, out.data().data() + o * chunk);
  }
  return x.tape().record("slice", std::move(out), {x.id()}, [s, begin, chunk](const BackwardContext<T>& c) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      const T* src = c.grad_output.data().data() + o * chunk;
      T* dst = c.input_grads[0]->data().data() + (o * s.extent + begin) * s.inner;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

/// Equal split into `count` parts along `axis`; inverse of concat.
template <class T>
std::vector<Var<T>> split(const Var<T>& x, std::size_t count, std::size_t axis) {
  const auto s = detail::split_at(x.shape(), axis, "split");
  if (count == 0 || s.extent % count != 0) {
    throw DimensionError("split: axis extent " + std::to_string(s.extent) + " of " + shape_str(x.shape()) +
                         " is not divisible by " + std::to_string(count));
  }
  const std::size_t part = s.extent / count;
  std::vector<Var<T>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(slice(x, axis, i * part, part));
  return out;
}

}  // namespace mmmna
