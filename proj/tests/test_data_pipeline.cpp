#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <unistd.h>

#include "mmmna/data/augment.hpp"
#include "mmmna/data/folds.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/data/phantom.hpp"
#include "mmmna/data/resample.hpp"
#include "mmmna/data/survival.hpp"

using namespace mmmna;
using namespace mmmna::data;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmmna_data_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

PhantomSpec small_spec(std::size_t n, std::uint64_t seed = 1) {
  PhantomSpec s;
  s.subjects = n;
  s.seed = seed;
  s.shape = {8, 12, 12};
  s.max_radius = 3.0;
  s.min_radius = 1.0;
  return s;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Phantom, DeterministicAndValidLabels) {
  const auto a = generate_phantoms(small_spec(4)), b = generate_phantoms(small_spec(4));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seg.storage(), b[i].seg.storage());
    for (std::size_t m = 0; m < kModalityCount; ++m) EXPECT_EQ(a[i].modalities[m].storage(), b[i].modalities[m].storage());
    for (auto v : a[i].seg.data()) EXPECT_TRUE(is_tumor_label(v));
  }
  EXPECT_NE(a[0].modalities[0].storage(), a[0].modalities[1].storage());
}

TEST(Phantom, ClassMarginalsNearTarget) {
  auto spec = small_spec(200, 5);
  std::array<double, 3> counts{};
  for (const auto& s : generate_phantoms(spec)) counts[class_index(bin_survival(s.survival_days))] += 1;
  for (std::size_t c = 0; c < 3; ++c) {
    const double target = 200 * spec.class_prior[c];
    EXPECT_NEAR(counts[c], target, 0.2 * target) << "class " << c;
  }
}

TEST(Phantom, OversizedLesionIsAConfigError) {
  auto spec = small_spec(1);
  spec.max_radius = 10;
  EXPECT_THROW(generate_phantoms(spec), ConfigError);
}

TEST(Resample, ConstantAndIdentity) {
  Volume c({3, 4, 5}, 2.5f);
  const auto up = resample_volume(c, {6, 7, 9});
  EXPECT_EQ(up.shape(), (Shape{6, 7, 9}));
  for (float v : up.data()) EXPECT_NEAR(v, 2.5f, 1e-6);

  const auto v = generate_phantoms(small_spec(1))[0].modalities[0];
  const auto same = resample_volume(v, {8, 12, 12});
  EXPECT_LT(max_abs_diff(same, v), 1e-6);
}

TEST(Resample, NearestUpsampleMatchesLoopOracle) {
  LabelVolume m({2, 3, 4});
  std::mt19937 rng(3);
  for (auto& v : m.data()) v = static_cast<std::uint8_t>(rng() % 2);
  const auto up = resample_mask(m, {4, 6, 8});
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t w = 0; w < 8; ++w) EXPECT_EQ(up.at({d, h, w}), m.at({d / 2, h / 2, w / 2}));
}

TEST(Resample, MaskNeverInventsLabels) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = generate_phantoms(small_spec(1, seed))[0];
    std::set<std::uint8_t> in(s.seg.data().begin(), s.seg.data().end());
    for (Extent3 t : {Extent3{5, 7, 9}, Extent3{16, 20, 3}}) {
      const auto out = resample_mask(s.seg, t);
      for (auto v : out.data()) EXPECT_TRUE(in.contains(v));
    }
  }
}

TEST(Resample, DegenerateSourceAxis) {
  EXPECT_THROW(resample_volume(Volume({1, 4, 4}), {4, 4, 4}), ContractError);
}

TEST(Survival, MonthThresholds) {
  EXPECT_EQ(bin_survival(274), SurvivalClass::Short);
  EXPECT_EQ(bin_survival(365), SurvivalClass::Mid);
  EXPECT_EQ(bin_survival(609), SurvivalClass::Long);
  EXPECT_THROW(bin_survival(0), ContractError);
  int prev = 0;
  for (int d = 1; d < 2000; ++d) {
    const int c = class_index(bin_survival(d));
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Augment, InvolutionsAndHistogram) {
  const auto s = generate_phantoms(small_spec(1))[0];
  const Subject& sq = s;
  const auto h2 = apply_augmentation(apply_augmentation(sq, {true, false, 0}), {true, false, 0});
  EXPECT_EQ(h2.modalities[2].storage(), sq.modalities[2].storage());
  Subject r = sq;
  for (int i = 0; i < 4; ++i) r = apply_augmentation(r, {false, false, 1});
  EXPECT_EQ(r.seg.storage(), sq.seg.storage());
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto a = augment(sq, seed);
    std::map<int, int> ha, hb;
    for (auto v : a.seg.data()) ++ha[v];
    for (auto v : sq.seg.data()) ++hb[v];
    EXPECT_EQ(ha, hb);
    EXPECT_EQ(a.survival_days, sq.survival_days);
  }
}

TEST(Augment, SameTransformForAllModalitiesAndMask) {
  const auto s = generate_phantoms(small_spec(1))[0];
  const Augmentation aug{true, true, 1};
  const auto a = apply_augmentation(s, aug);
  EXPECT_EQ(a.seg.storage(), apply_augmentation(s.seg, aug).storage());
  for (std::size_t m = 0; m < kModalityCount; ++m)
    EXPECT_EQ(a.modalities[m].storage(), apply_augmentation(s.modalities[m], aug).storage());
}

TEST(Folds, CohortOf237Subjects) {
  std::vector<std::string> ids;
  std::vector<int> classes;
  for (int i = 0; i < 237; ++i) {
    ids.push_back("s" + std::to_string(i));
    classes.push_back(i % 7 < 3 ? 0 : i % 7 < 5 ? 1 : 2);
  }
  const auto split = split_folds(ids, classes, 10, 4);
  std::set<std::string> all;
  std::vector<std::map<int, int>> per_class(10);
  std::map<std::string, int> cls;
  for (std::size_t i = 0; i < ids.size(); ++i) cls[ids[i]] = classes[i];
  for (std::size_t f = 0; f < 10; ++f) {
    EXPECT_TRUE(split.ids[f].size() == 23 || split.ids[f].size() == 24);
    for (const auto& id : split.ids[f]) {
      EXPECT_TRUE(all.insert(id).second) << id << " appears twice";
      ++per_class[f][cls[id]];
    }
  }
  EXPECT_EQ(all.size(), 237u);
  for (int c = 0; c < 3; ++c) {
    int lo = 1000, hi = 0;
    for (auto& m : per_class) {
      lo = std::min(lo, m[c]);
      hi = std::max(hi, m[c]);
    }
    EXPECT_LE(hi - lo, 1);
  }
  EXPECT_EQ(split_folds(ids, classes, 10, 4).ids, split.ids);
}

TEST(Folds, EvenSplitAndTooManyFolds) {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(std::to_string(i));
  for (const auto& f : split_folds(ids, 10, 0).ids) EXPECT_EQ(f.size(), 2u);
  EXPECT_THROW(split_folds(ids, 21, 0), ConfigError);
}

TEST(Mmv, TensorFormatIsBitExact) {
  const Tensor<float> t({2, 1, 3}, {1.5f, -2.0f, 0.0f, 3.25f, 1e-3f, -7.0f});
  const auto bytes = encode_tensor(t);
  ASSERT_EQ(bytes.size(), 4u + 2 + 3 * 4 + 6 * 4);
  EXPECT_EQ(std::string(bytes.data(), 4), "MMV1");
  EXPECT_EQ(bytes[4], 0);
  EXPECT_EQ(bytes[5], 3);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2u);  // little-endian extent
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(decode_tensor<float>(bytes, "mem").storage(), t.storage());
  EXPECT_THROW(decode_tensor<std::uint8_t>(bytes, "mem"), ParseError);
}

TEST(Mmv, DatasetRoundTripIsByteExact) {
  const fs::path a = scratch("a"), b = scratch("b");
  const auto subjects = generate_phantoms(small_spec(3));
  write_dataset(a, subjects);
  const auto back = read_dataset(a);
  ASSERT_EQ(back.size(), subjects.size());
  EXPECT_EQ(read_manifest(a).size(), 3u);
  write_dataset(b, back);
  for (const auto& s : subjects) {
    EXPECT_EQ(back[&s - subjects.data()].age, s.age);
    for (const char* f : {"flair.mmv", "t1.mmv", "t1ce.mmv", "t2.mmv", "seg.mmv", "meta.txt"}) {
      EXPECT_EQ(file_bytes(a / s.id / f), file_bytes(b / s.id / f)) << f;
    }
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Mmv, CorruptionIsAParseErrorWithOffset) {
  const fs::path dir = scratch("bad");
  write_dataset(dir, generate_phantoms(small_spec(1)));
  const fs::path f = dir / "phantom_0000" / "t1.mmv";
  auto bytes = file_bytes(f);
  bytes[0] = 'X';
  std::ofstream(f, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  try {
    read_dataset(dir);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("t1.mmv"), std::string::npos);
    EXPECT_EQ(e.offset(), 0u);
  }
  bytes[0] = 'M';
  bytes.resize(bytes.size() - 3);
  std::ofstream(f, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(read_dataset(dir), ParseError);
  fs::remove_all(dir);
}
