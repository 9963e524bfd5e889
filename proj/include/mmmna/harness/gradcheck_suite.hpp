#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmmna/core/gradcheck.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/data/phantom.hpp"
#include "mmmna/fusion/attention.hpp"
#include "mmmna/fusion/mnaffm.hpp"
#include "mmmna/model/losses.hpp"
#include "mmmna/model/mmmna.hpp"
#include "mmmna/nn/batchnorm.hpp"
#include "mmmna/nn/conv3d.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/linear.hpp"
#include "mmmna/nn/pool.hpp"

namespace mmmna::harness {

struct GradCheckEntry {
  std::string name;
  double error = 0.0;  // max |analytic − numeric| / max(1, |numeric|)
  double seconds = 0.0;
};

namespace detail {

using VarsD = std::span<const Var<double>>;

inline Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  nn::Rng rng = nn::seeded_rng(seed, 0x6C);
  return nn::normal_init<double>(shape, scale, rng);
}

/// Fixed random projection to a scalar so every output coordinate gets a distinct weight.
inline Var<double> project(const Var<double>& y, std::uint64_t seed) {
  return sum(mul(y, y.tape().constant(random_tensor(y.shape(), seed + 1000))));
}

template <class F>
double check_all(F&& f, std::vector<Tensor<double>> xs) {
  return finite_diff_check(std::forward<F>(f), std::move(xs));
}

}  // namespace detail

/// End-to-end check of the total loss with respect to `samples` scalar parameters, each drawn
/// from a different randomly chosen parameter tensor.
inline double model_gradcheck(const model::MMMNAConfig& config, std::size_t subjects, std::size_t samples,
                              std::uint64_t seed, double step = 1e-5) {
  data::PhantomSpec spec;
  spec.seed = seed;
  spec.subjects = subjects;
  spec.shape = config.input_shape;
  spec.max_radius = std::min(spec.max_radius, 0.4 * static_cast<double>(*std::min_element(
                                                        config.input_shape.begin(), config.input_shape.end())));
  spec.min_radius = std::min(spec.min_radius, spec.max_radius);
  std::vector<model::SubjectInput<double>> inputs;
  std::vector<int> labels;
  for (const auto& s : data::generate_phantoms(spec)) {
    inputs.push_back(model::prepare_subject<double>(s, config.input_shape));
    labels.push_back(inputs.back().label);
  }
  nn::ParamStore<double> store;
  const auto net = model::MMMNAModel::create(store, config);

  auto loss_of = [&](nn::ParamStore<double>& params, bool with_grad, Gradients<double>* grads,
                     std::vector<Var<double>>* vars) {
    Tape<double> tape;
    const nn::Bound<double> bound(tape, params, with_grad);
    const auto out = net.forward<double>(bound, inputs, true);
    const auto l = net.loss(out, labels);
    if (grads) {
      *grads = tape.backward(l.total);
      for (std::size_t i = 0; i < params.size(); ++i) vars->push_back(bound[i]);
    }
    return l.total.value()[0];
  };

  Gradients<double> grads;
  std::vector<Var<double>> vars;
  {
    nn::ParamStore<double> work = store;
    loss_of(work, true, &grads, &vars);
  }
  nn::Rng rng = nn::seeded_rng(seed, 0x9C);
  std::vector<std::size_t> which(store.size());
  for (std::size_t i = 0; i < which.size(); ++i) which[i] = i;
  std::shuffle(which.begin(), which.end(), rng);
  which.resize(std::min(samples, which.size()));

  double worst = 0.0;
  for (std::size_t p : which) {
    const std::size_t entry = std::uniform_int_distribution<std::size_t>(0, store.param(p).value.size() - 1)(rng);
    const double analytic = grads.at(vars[p].id())[entry];
    nn::ParamStore<double> up = store, down = store;
    up.param(p).value[entry] += step;
    down.param(p).value[entry] -= step;
    const double numeric = (loss_of(up, false, nullptr, nullptr) - loss_of(down, false, nullptr, nullptr)) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

/// Central-difference checks for every differentiable building block and the full model.
inline std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 0,
                                                       const std::function<void(const GradCheckEntry&)>& on_entry = {}) {
  using detail::project;
  using detail::random_tensor;
  using detail::VarsD;
  using detail::check_all;
  std::vector<GradCheckEntry> out;
  auto run = [&](std::string name, const std::function<double()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckEntry e{std::move(name), check(), 0.0};
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_entry) on_entry(e);
    out.push_back(std::move(e));
  };
  const std::uint64_t s = seed;

  run("elementwise", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          const Var<double> a = v[0], b = v[1];
          Var<double> y = add(mul(a, b), sub(a, b));
          y = add(y, mul_scalar(relu(a), 0.5));
          y = add(y, exp(mul_scalar(b, 0.3)));
          y = add(y, log(add_scalar(mul(a, a), 1.0)));
          y = add(y, pow_scalar(add_scalar(mul(b, b), 0.5), 1.5));
          y = add(y, clamp(a, -0.5, 0.5));
          return project(y, s);
        },
        {random_tensor({3, 4}, s + 1), random_tensor({3, 4}, s + 2)});
  });
  run("bias_and_scalar_broadcast", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          const Var<double> y = add_bias(v[0], v[1]);
          return project(mul(y, sum(v[1])), s + 3);
        },
        {random_tensor({5, 3}, s + 4), random_tensor({3}, s + 5)});
  });
  run("matmul_transpose_reduce", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          const Var<double> y = matmul(v[0], transpose(v[1]));
          return add(project(y, s + 6), mul_scalar(mean(y), 2.0));
        },
        {random_tensor({4, 5}, s + 7), random_tensor({3, 5}, s + 8)});
  });
  run("softmax", [&] {
    return check_all([&](Tape<double>&, VarsD v) { return add(project(softmax(v[0], 1), s + 9), project(softmax(v[0], 0), s + 10)); },
                             {random_tensor({4, 6}, s + 11, 2.0)});
  });
  run("concat_slice_split_reshape", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          const Var<double> c = concat(std::vector<Var<double>>{v[0], v[1]}, 1);
          const auto parts = split(reshape(c, {2, 3, 4}), 2, 0);
          return add(project(slice(c, 1, 1, 3), s + 12), project(mul(parts[0], parts[1]), s + 13));
        },
        {random_tensor({3, 3}, s + 14), random_tensor({3, 5}, s + 15)});
  });
  run("conv3d", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          return project(nn::conv3d(v[0], v[1], v[2], {{1, 2, 2}, {1, 1, 1}}), s + 16);
        },
        {random_tensor({2, 2, 4, 6, 5}, s + 17), random_tensor({3, 2, 3, 3, 3}, s + 18, 0.3),
         random_tensor({3}, s + 19)});
  });
  run("conv3d_pointwise_strided", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) { return project(nn::conv3d(v[0], v[1], Var<double>(), {{2, 2, 2}, {0, 0, 0}}), s + 20); },
        {random_tensor({2, 3, 4, 4, 4}, s + 21), random_tensor({2, 3, 1, 1, 1}, s + 22)});
  });
  run("maxpool3d", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) { return project(nn::maxpool3d(v[0], {{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}), s + 23); },
        {random_tensor({2, 2, 5, 6, 4}, s + 24)});
  });
  for (bool training : {true, false}) {
    run(training ? "batchnorm3d_train" : "batchnorm3d_eval", [&, training] {
      Tensor<double> rm = random_tensor({3}, s + 25, 0.1);
      Tensor<double> rv = Tensor<double>({3}, std::vector<double>{0.8, 1.3, 0.5});
      return check_all(
          [&, training](Tape<double>&, VarsD v) {
            Tensor<double> m = rm, var = rv;  // each evaluation starts from the same statistics
            return project(nn::batchnorm3d(v[0], v[1], v[2], m, var, training, {}), s + 26);
          },
          {random_tensor({3, 3, 2, 3, 2}, s + 27), random_tensor({3}, s + 28), random_tensor({3}, s + 29)});
    });
  }
  run("linear", [&] {
    return check_all([&](Tape<double>&, VarsD v) { return project(nn::linear(v[0], v[1], v[2]), s + 30); },
                             {random_tensor({4, 6}, s + 31), random_tensor({3, 6}, s + 32), random_tensor({3}, s + 33)});
  });
  run("weighted_pool", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          return add(project(model::branch_weighted_pool(v[0], v[1]), s + 34),
                     project(model::weighted_pool_tokens(reshape(v[0], {4, 6}), v[2]), s + 35));
        },
        {random_tensor({4, 2, 1, 3}, s + 36), random_tensor({6}, s + 37), random_tensor({4}, s + 38)});
  });
  run("full_attention", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) { return project(fusion::full_attention(v[0], v[1], v[2], v[3], true).output, s + 39); },
        {random_tensor({8, 4}, s + 40), random_tensor({4, 4}, s + 41, 0.5), random_tensor({4, 4}, s + 42, 0.5),
         random_tensor({4, 4}, s + 43, 0.5)});
  });
  run("linformer_attention", [&] {
    return check_all(
        [&](Tape<double>&, VarsD v) {
          return project(fusion::linformer_attention(v[0], v[1], v[2], v[3], v[4], v[5], true).output, s + 44);
        },
        {random_tensor({8, 4}, s + 45), random_tensor({4, 4}, s + 46, 0.5), random_tensor({4, 4}, s + 47, 0.5),
         random_tensor({4, 4}, s + 48, 0.5), random_tensor({3, 8}, s + 49, 0.4), random_tensor({3, 8}, s + 50, 0.4)});
  });
  run("mnaffm", [&] {
    fusion::FusionModuleConfig cfg = fusion::FusionModuleConfig::for_scale(4, 2, fusion::AttentionVariant::Linformer, 3);
    return check_all(
        [&](Tape<double>&, VarsD v) {
          std::array<Var<double>, kModalityCount> f{reshape(slice(v[0], 0, 0, 1), {4, 1, 1, 2}),
                                                    reshape(slice(v[0], 0, 1, 1), {4, 1, 1, 2}),
                                                    reshape(slice(v[0], 0, 2, 1), {4, 1, 1, 2}),
                                                    reshape(slice(v[0], 0, 3, 1), {4, 1, 1, 2})};
          const auto r = fusion::FusionModule::mnaffm_forward(f, cfg, v[1], v[2], v[3], v[4], v[5]);
          Var<double> y = add(project(r.f3, s + 51), project(r.f1, s + 52));
          for (std::size_t m = 0; m < kModalityCount; ++m) y = add(y, project(r.outputs[m], s + 53 + m));
          return y;
        },
        {random_tensor({4, 4, 1, 1, 2}, s + 57), random_tensor({4, 4}, s + 58, 0.5), random_tensor({4, 4}, s + 59, 0.5),
         random_tensor({4, 4}, s + 60, 0.5), random_tensor({3, 8}, s + 61, 0.4), random_tensor({3, 8}, s + 62, 0.4)});
  });
  run("focal_loss", [&] {
    const std::vector<int> labels{0, 2, 1};
    const Tensor<double> y = model::one_hot<double>(labels, 3);
    return check_all([&](Tape<double>&, VarsD v) { return model::focal_loss(v[0], y, 0.25, 2.0); },
                             {random_tensor({3, 3}, s + 63, 1.5)});
  });
  run("mmmna_end_to_end", [&] {
    model::MMMNAConfig cfg;  // desk configuration
    cfg.seed = s;
    return model_gradcheck(cfg, 2, 10, s + 64, 1e-6);
  });
  return out;
}

}  // namespace mmmna::harness
