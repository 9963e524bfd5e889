#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/core/tensor.hpp"

namespace mmmna {

/// Options for central-difference checks. `max_entries` bounds how many coordinates of
/// each input are probed; coordinates are then drawn without replacement from `seed`.
struct GradCheckOptions {
  double step = 1e-5;
  std::optional<std::size_t> max_entries;
  unsigned long long seed = 0;
};

namespace detail {

inline std::vector<std::size_t> probe_indices(std::size_t size, const GradCheckOptions& opt,
                                              std::size_t input_index) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (opt.max_entries && *opt.max_entries < size) {
    std::mt19937_64 rng(opt.seed + 7919ULL * input_index);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(*opt.max_entries);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

template <class F>
double evaluate_scalar(F& f, const std::vector<Tensor<double>>& xs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(xs.size());
  for (const auto& x : xs) vars.push_back(tape.leaf(x, false));
  const Var<double> out = f(tape, std::span<const Var<double>>(vars));
  if (out.value().size() != 1) throw ContractError("finite_diff_check: function must return a scalar");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
  return v;
}

}  // namespace detail

/// Max over probed coordinates of |analytic − numeric| / max(1, |numeric|), where numeric is
/// the central difference (f(x+h·e_i) − f(x−h·e_i)) / 2h. `f(tape, vars)` must be pure and
/// return a scalar; every input is checked.
template <class F>
double finite_diff_check(F&& f, std::vector<Tensor<double>> xs, const GradCheckOptions& opt = {}) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : xs) vars.push_back(tape.leaf(x, true));
  const Var<double> out = f(tape, std::span<const Var<double>>(vars));
  if (out.value().size() != 1) throw ContractError("finite_diff_check: function must return a scalar");
  if (!std::isfinite(out.value()[0])) throw NumericError("finite_diff_check: non-finite function value");
  const Gradients<double> grads = tape.backward(out);

  double worst = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Tensor<double>& analytic = grads[vars[t]];
    for (std::size_t i : detail::probe_indices(xs[t].size(), opt, t)) {
      const double orig = xs[t][i];
      xs[t][i] = orig + opt.step;
      const double up = detail::evaluate_scalar(f, xs);
      xs[t][i] = orig - opt.step;
      const double down = detail::evaluate_scalar(f, xs);
      xs[t][i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

/// Single-input convenience form: `f(tape, var)`.
template <class F>
double finite_diff_check(F&& f, const Tensor<double>& x, const GradCheckOptions& opt = {}) {
  auto wrapped = [&f](Tape<double>& tape, std::span<const Var<double>> v) { return f(tape, v[0]); };
  return finite_diff_check(wrapped, std::vector<Tensor<double>>{x}, opt);
}

}  // namespace mmmna
