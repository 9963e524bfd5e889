#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmmna/data/phantom.hpp"
#include "mmmna/model/mmmna.hpp"
#include "mmmna/nn/adam.hpp"

using namespace mmmna;
using namespace mmmna::model;

namespace {

constexpr Extent3 kDesk{16, 16, 16};

std::vector<SubjectInput<double>> subjects(std::size_t n, std::uint64_t seed = 3) {
  data::PhantomSpec spec;
  spec.seed = seed;
  spec.subjects = n;
  spec.shape = kDesk;
  std::vector<SubjectInput<double>> out;
  for (const auto& s : data::generate_phantoms(spec)) out.push_back(prepare_subject<double>(s, kDesk));
  return out;
}

MMMNAConfig desk_config() {
  MMMNAConfig c;
  c.input_shape = kDesk;
  c.seed = 11;
  return c;
}

BranchOutputs<double> run(const MMMNAModel& m, nn::ParamStore<double>& store, Tape<double>& tape,
                          std::span<const SubjectInput<double>> batch, bool training = false) {
  const nn::Bound<double> bound(tape, store, false);
  return m.forward<double>(bound, batch, training);
}

// Copies every parameter of `src` whose name also exists in `dst`.
void copy_shared(const nn::ParamStore<double>& src, nn::ParamStore<double>& dst) {
  for (const auto& e : src.params()) dst.param(dst.find(e.name)).value = e.value;
}

void zero_param(nn::ParamStore<double>& store, const std::string& name) {
  auto& v = store.param(store.find(name)).value;
  for (double& x : v.data()) x = 0.0;
}

}  // namespace

TEST(Config, RejectsInvalidValues) {
  EXPECT_NO_THROW(desk_config().validate());
  auto bad = [](auto edit) {
    MMMNAConfig c = desk_config();
    edit(c);
    return c;
  };
  EXPECT_THROW(bad([](MMMNAConfig& c) { c.lambda = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](MMMNAConfig& c) { c.alpha = 1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](MMMNAConfig& c) { c.gamma = -1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](MMMNAConfig& c) { c.input_shape = {16, 24, 32}; }).validate(), ConfigError);
}

TEST(NonImageFeatures, CompositionExample) {
  data::LabelVolume seg({10, 20, 20});
  Tensor<float> volume({10, 20, 20}, 1.0f);
  std::size_t at = 0;
  for (std::size_t i = 0; i < 100; ++i) seg[at++] = 1;
  for (std::size_t i = 0; i < 200; ++i) seg[at++] = 2;
  for (std::size_t i = 0; i < 100; ++i) seg[at++] = 4;
  const auto f = build_nonimage_features(seg, volume, 65.0);
  EXPECT_DOUBLE_EQ(f.s1, 0.25);
  EXPECT_DOUBLE_EQ(f.s2, 0.5);
  EXPECT_DOUBLE_EQ(f.s4, 0.25);
  EXPECT_DOUBLE_EQ(f.s_total, 0.1);
  EXPECT_DOUBLE_EQ(f.s_age, 0.65);
}

TEST(NonImageFeatures, DegenerateInputs) {
  data::LabelVolume seg({2, 2, 2});
  Tensor<float> volume({2, 2, 2}, 3.0f);
  EXPECT_EQ(build_nonimage_features(seg, volume, 40.0), (NonImageFeatures{0, 0, 0, 0, 0.4}));
  EXPECT_THROW(build_nonimage_features(seg, Tensor<float>({2, 2, 2}), 40.0), ContractError);
  seg[0] = 3;
  EXPECT_THROW(build_nonimage_features(seg, volume, 40.0), ContractError);
}

TEST(FocalLoss, SingleTermValue) {
  EXPECT_NEAR(focal_term(1, 0.9, 0.25, 2.0), 0.25 * 0.01 * -std::log(0.9), 1e-15);
  EXPECT_NEAR(focal_term(1, 0.9, 0.25, 2.0), 2.634e-4, 1e-7);
}

TEST(FocalLoss, GammaZeroIsHalfCrossEntropy) {
  const double logits[] = {0.3, -1.2, 0.8};
  double z = 0;
  for (double v : logits) z += std::exp(v);
  double bce = 0;
  for (int c = 0; c < 3; ++c) {
    const double p = std::exp(logits[c]) / z;
    bce += c == 1 ? -std::log(p) : -std::log(1 - p);
  }
  EXPECT_NEAR(focal_loss(logits, 1, 0.5, 0.0), 0.5 * bce, 1e-12);

  const double uniform[] = {0, 0, 0};
  const double ce = -std::log(1.0 / 3) - 2 * std::log(2.0 / 3);
  EXPECT_NEAR(focal_loss(uniform, 0, 0.5, 0.0), 0.5 * ce, 1e-12);
}

TEST(FocalLoss, ConfidentCorrectPredictionVanishes) {
  const double logits[] = {40, 0, 0};
  EXPECT_LT(focal_loss(logits, 0, 0.25, 2.0), 1e-6);
}

TEST(FocalLoss, TapeMatchesScalarAndRejectsNonOneHot) {
  Tape<double> tape;
  const Tensor<double> logits({2, 3}, {0.2, -0.4, 1.1, 2.0, 0.5, -1.0});
  const std::vector<int> labels{2, 1};
  const auto l = focal_loss(tape.leaf(logits), one_hot<double>(labels, 3), 0.25, 2.0).value()[0];
  const double ref = (focal_loss(std::span<const double>(logits.data().subspan(0, 3)), 2, 0.25, 2.0) +
                      focal_loss(std::span<const double>(logits.data().subspan(3, 3)), 1, 0.25, 2.0)) /
                     2;
  EXPECT_NEAR(l, ref, 1e-12);
  EXPECT_THROW(focal_loss(tape.leaf(logits), Tensor<double>({2, 3}, {1, 1, 0, 0, 0, 1}), 0.25, 2.0), ContractError);
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_EQ(total_loss({1, 1, 1, 1}, 2.0, 0.25), 3.0);
  EXPECT_EQ(total_loss({5, 1, 2, 7}, 2.0, 0.0), 2.0);
  EXPECT_EQ(total_loss({0, 0, 0, 0}, 0.0, 0.25), 0.0);
}

TEST(Backbone, DeskScaleExtents) {
  nn::ParamStore<double> store;
  nn::Rng rng = nn::seeded_rng(1);
  const auto b = Backbone::create(store, "backbone", 2, 8, rng);
  const auto e = b.scale_extents({16, 32, 32});
  for (std::size_t s = 0; s < kScaleCount; ++s) {
    const std::size_t side = 8 >> s;
    EXPECT_EQ(e[s], (Extent3{side, side, side}));
    EXPECT_EQ(b.stage_channels(s), std::size_t{8} << s);
  }
}

TEST(Backbone, SharedWeightsGiveIdenticalFeatures) {
  nn::ParamStore<double> store;
  nn::Rng rng = nn::seeded_rng(2);
  const auto b = Backbone::create(store, "backbone", 2, 4, rng);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> dist;
  Tensor<double> one({1, 2, 16, 16, 16});
  for (double& v : one.data()) v = dist(gen);
  Tensor<double> x({2, 2, 16, 16, 16});
  std::copy(one.data().begin(), one.data().end(), x.data().begin());
  std::copy(one.data().begin(), one.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(one.size()));
  Tape<double> tape;
  const nn::Bound<double> bound(tape, store, false);
  const auto f = b.forward(bound, tape.constant(x), false)[3].value();
  const std::size_t half = f.size() / 2;
  for (std::size_t i = 0; i < half; ++i) EXPECT_EQ(f[i], f[half + i]);
}

TEST(WeightedPool, UniformIsAverageAndOneHotSelects) {
  Tape<double> tape;
  Tensor<double> x({2, 1, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
  const auto avg = branch_weighted_pool(tape.constant(x), tape.constant(Tensor<double>({4}, 0.25))).value();
  EXPECT_DOUBLE_EQ(avg[0], 2.5);
  EXPECT_DOUBLE_EQ(avg[1], 25.0);
  const auto pick = branch_weighted_pool(tape.constant(x), tape.constant(Tensor<double>({4}, {0, 0, 1, 0}))).value();
  EXPECT_EQ(pick[0], 3.0);
  EXPECT_EQ(pick[1], 30.0);
  EXPECT_THROW(branch_weighted_pool(tape.constant(x), tape.constant(Tensor<double>({3}))), DimensionError);
  EXPECT_THROW(weighted_pool_tokens(tape.constant(Tensor<double>({4, 2})), tape.constant(Tensor<double>({5}))),
               DimensionError);
}

TEST(Model, FiveFiniteLogitTriplesAndNormalizedSoftmax) {
  nn::ParamStore<double> store;
  const auto m = MMMNAModel::create(store, desk_config());
  const auto batch = subjects(3);
  Tape<double> tape;
  const auto out = run(m, store, tape, batch);
  for (const auto& logits : out.logits) {
    ASSERT_EQ(logits.shape(), (Shape{3, 3}));
    const auto p = softmax(logits, 1).value();
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_TRUE(std::isfinite(logits.value()[b * 3 + c]));
        s += p[b * 3 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  ASSERT_EQ(out.scales.size(), kScaleCount);
  for (const auto& t : out.scales) {
    EXPECT_TRUE(t.fused);
    EXPECT_EQ(t.fusion_input, t.fusion_output);
  }
}

TEST(Model, BackboneParameterCountIndependentOfModalities) {
  nn::ParamStore<double> store, alone;
  MMMNAModel::create(store, desk_config());
  nn::Rng rng = nn::seeded_rng(0);
  Backbone::create(alone, "backbone", 2, 8, rng);
  EXPECT_EQ(store.count_scalars("backbone."), alone.count_scalars());
}

TEST(Model, IdenticalModalitiesAndMatchingHeadsGiveIdenticalBranchLogits) {
  nn::ParamStore<double> store;
  const auto m = MMMNAModel::create(store, desk_config());
  for (std::size_t s = 1; s <= kScaleCount; ++s)
    for (const char* w : {".wq", ".wk", ".wv"}) zero_param(store, "fusion.scale" + std::to_string(s) + w);
  for (const char* b : {"t1", "t1ce", "t2"}) {
    store.param(store.find(std::string("pool.") + b)).value = store.param(store.find("pool.flair")).value;
    store.param(store.find(std::string("head.") + b + ".weight")).value =
        store.param(store.find("head.flair.weight")).value;
    store.param(store.find(std::string("head.") + b + ".bias")).value = store.param(store.find("head.flair.bias")).value;
  }
  auto batch = subjects(2);
  for (auto& s : batch) s = substitute_missing(s, availability(true, false, false, false));
  Tape<double> tape;
  const auto out = run(m, store, tape, batch);
  for (std::size_t b = 2; b < kBranchCount; ++b) EXPECT_EQ(out.logits[b].value().storage(), out.logits[1].value().storage());
}

TEST(Model, SingleScaleEqualsMultiScaleWithIdentityFusionBelowTheTop) {
  auto cfg = desk_config();
  nn::ParamStore<double> multi, single;
  const auto mm = MMMNAModel::create(multi, cfg);
  cfg.single_scale = true;
  const auto sm = MMMNAModel::create(single, cfg);
  copy_shared(single, multi);
  for (std::size_t s = 1; s < kScaleCount; ++s)
    for (const char* w : {".wq", ".wk", ".wv"}) zero_param(multi, "fusion.scale" + std::to_string(s) + w);
  const auto batch = subjects(2);
  Tape<double> t1, t2;
  const auto a = run(mm, multi, t1, batch);
  const auto b = run(sm, single, t2, batch);
  for (std::size_t k = 0; k < kBranchCount; ++k) EXPECT_LT(max_abs_diff(a.logits[k].value(), b.logits[k].value()), 1e-12);
  EXPECT_FALSE(b.scales[0].fused);
  EXPECT_TRUE(b.scales[3].fused);
}

TEST(Model, SameSeedSameInitialLoss) {
  const auto batch = subjects(2);
  const std::vector<int> labels{batch[0].label, batch[1].label};
  double losses[2];
  for (double& l : losses) {
    nn::ParamStore<double> store;
    const auto m = MMMNAModel::create(store, desk_config());
    Tape<double> tape;
    const nn::Bound<double> bound(tape, store);
    l = m.loss(m.forward<double>(bound, batch, true), labels).total.value()[0];
  }
  EXPECT_EQ(losses[0], losses[1]);
}

TEST(Model, SubstitutionMatchesGenuineCopies) {
  nn::ParamStore<double> store;
  const auto m = MMMNAModel::create(store, desk_config());
  const auto batch = subjects(2);
  std::vector<SubjectInput<double>> substituted, genuine;
  for (const auto& s : batch) {
    substituted.push_back(substitute_missing(s, availability(true, false, false, false)));
    SubjectInput<double> g = s;
    g.modalities.fill(s.modalities[0]);
    genuine.push_back(g);
  }
  Tape<double> t1, t2;
  const auto a = run(m, store, t1, substituted), b = run(m, store, t2, genuine);
  for (std::size_t k = 0; k < kBranchCount; ++k) EXPECT_EQ(a.logits[k].value().storage(), b.logits[k].value().storage());
}

TEST(Model, EveryAvailabilityConfigurationRuns) {
  nn::ParamStore<double> store;
  const auto m = MMMNAModel::create(store, desk_config());
  const auto batch = subjects(2);
  const auto configs = missing_modality_configurations();
  EXPECT_EQ(availability_label(configs[0]), "flair");
  EXPECT_EQ(availability_label(configs[7]), "flair+t1+t1ce+t2");
  for (const auto& a : configs) {
    std::vector<SubjectInput<double>> in;
    for (const auto& s : batch) in.push_back(substitute_missing(s, a));
    Tape<double> tape;
    EXPECT_EQ(run(m, store, tape, in).logits[0].shape(), (Shape{2, 3}));
  }
  EXPECT_EQ(substitute_missing(batch[0], configs[7]).modalities[2].volume.storage(),
            batch[0].modalities[2].volume.storage());
  EXPECT_THROW(substitute_missing(batch[0], availability(false, true, true, true)), ContractError);
}

TEST(Model, BaselineSharesOneHeadAndLossIsFusionOnly) {
  auto cfg = desk_config();
  cfg.baseline_concat = true;
  nn::ParamStore<double> store;
  const auto m = MMMNAModel::create(store, cfg);
  EXPECT_EQ(store.param(0).value.shape()[1], 8u);
  const auto batch = subjects(2);
  Tape<double> tape;
  const nn::Bound<double> bound(tape, store);
  const auto out = m.forward<double>(bound, batch, true);
  for (const auto& l : out.logits) EXPECT_EQ(l.value().storage(), out.logits[0].value().storage());
  const std::vector<int> labels{0, 2};
  const auto loss = m.loss(out, labels);
  EXPECT_EQ(loss.total.value()[0], loss.fusion.value()[0]);
}

TEST(Model, TrainingReducesLossOnAFixedBatch) {
  const auto batch = subjects(4, 9);
  std::vector<int> labels;
  for (const auto& s : batch) labels.push_back(s.label);
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = desk_config();
    cfg.seed = seed;
    cfg.base_channels = 4;
    nn::ParamStore<double> store;
    const auto m = MMMNAModel::create(store, cfg);
    nn::Adam<double> adam({1e-3, 0.9, 0.999, 1e-8, 0.0});
    double first = 0, last = 0;
    for (int step = 0; step < 50; ++step) {
      Tape<double> tape;
      const nn::Bound<double> bound(tape, store);
      const auto loss = m.loss(m.forward<double>(bound, batch, true), labels).total;
      (step == 0 ? first : last) = loss.value()[0];
      const auto grads = tape.backward(loss);
      adam.step(store, bound.gradients(grads));
    }
    decreased += last <= first;
  }
  EXPECT_GE(decreased, 9);
}
