#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <unistd.h>

#include "mmmna/harness/cli.hpp"

using namespace mmmna;
using namespace mmmna::harness;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmmna_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

// Hand enumeration of the one-vs-rest counts, independent of the confusion matrix.
FoldMetrics brute_force(const std::vector<int>& pred, const std::vector<int>& label) {
  FoldMetrics m;
  m.count = label.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < label.size(); ++i) correct += pred[i] == label[i];
  m.accuracy = label.empty() ? 0 : double(correct) / double(label.size());
  for (int c = 0; c < 3; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
      tp += pred[i] == c && label[i] == c;
      fp += pred[i] == c && label[i] != c;
      fn += pred[i] != c && label[i] == c;
    }
    m.precision += tp + fp ? double(tp) / (tp + fp) : 0.0;
    m.recall += tp + fn ? double(tp) / (tp + fn) : 0.0;
  }
  m.precision /= 3;
  m.recall /= 3;
  m.f_score = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
  return m;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.input_shape = {16, 16, 16};
  c.base_channels = 4;
  c.max_epochs = 2;
  c.patience = 1;
  c.batch_size = 2;
  c.lr = 1e-3;
  c.seed = 5;
  return c;
}

std::vector<Input> tiny_inputs(std::size_t n) {
  data::PhantomSpec spec;
  spec.subjects = n;
  spec.seed = 2;
  spec.shape = {16, 16, 16};
  std::vector<Input> out;
  for (const auto& s : data::generate_phantoms(spec)) out.push_back(model::prepare_subject<float>(s, spec.shape));
  return out;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "mmmna_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST(Evaluate, PerfectAndWorkedExample) {
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const auto perfect = evaluate(y, y);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.f_score, 1.0);

  const std::vector<int> p{0, 1, 1, 2, 2, 0};
  const auto m = evaluate(p, y);
  EXPECT_EQ(m.accuracy, 0.5);
  // Every class: one TP, one FP, one FN.
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f_score, 0.5);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_THROW(evaluate(std::vector<int>{0}, y), ContractError);
}

TEST(Evaluate, MatchesBruteForceOnRandomCases) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = rng() % 51;
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = int(rng() % 3);
      y[i] = int(rng() % 3);
    }
    const auto got = evaluate(p, y), ref = brute_force(p, y);
    EXPECT_EQ(got.accuracy, ref.accuracy);
    EXPECT_EQ(got.precision, ref.precision);
    EXPECT_EQ(got.recall, ref.recall);
    EXPECT_EQ(got.f_score, ref.f_score);
  }
}

TEST(Evaluate, FScoreSymmetricPoint) { EXPECT_DOUBLE_EQ(f_score(0.5, 0.5), 0.5); }

TEST(MeanStd, SampleStandardDeviation) {
  const double v[] = {0.6, 0.7, 0.8};
  const auto r = mean_std(v);
  EXPECT_NEAR(r.mean, 0.7, 1e-15);
  EXPECT_NEAR(r.std, 0.1, 1e-15);
}

TEST(McNemar, ReferenceValues) {
  auto run = [](std::size_t b, std::size_t c) { return mcnemar_test({0, b, c, 0}); };
  EXPECT_NEAR(run(10, 10).chi_square, 0.05, 1e-12);
  EXPECT_NEAR(run(10, 10).p_value, 0.823, 1e-3);
  EXPECT_NEAR(run(15, 5).chi_square, 4.05, 1e-12);
  EXPECT_NEAR(run(15, 5).p_value, 0.0442, 1e-4);
  EXPECT_EQ(run(1, 0).chi_square, 0.0);
  EXPECT_EQ(run(1, 0).p_value, 1.0);
  const auto none = run(0, 0);
  EXPECT_TRUE(none.degenerate);
  EXPECT_EQ(none.p_value, 1.0);
}

TEST(McNemar, GridAgainstErfc) {
  for (std::size_t b = 0; b <= 50; ++b)
    for (std::size_t c = 0; c <= 50; ++c) {
      if (b + c == 0) continue;
      const double d = std::abs(double(b) - double(c)) - 1;
      const double chi = d * d / double(b + c);
      EXPECT_NEAR(mcnemar_test({0, b, c, 0}).p_value, std::erfc(std::sqrt(chi / 2)), 1e-6);
    }
}

TEST(McNemar, ContingencyCounts) {
  const std::vector<int> y{0, 1, 2, 0}, a{0, 1, 0, 1}, b{0, 0, 2, 1};
  const auto t = contingency(a, b, y);
  EXPECT_EQ(t.both_correct, 1u);
  EXPECT_EQ(t.b, 1u);
  EXPECT_EQ(t.c, 1u);
  EXPECT_EQ(t.both_wrong, 1u);
  EXPECT_EQ(t.total(), 4u);
}

TEST(Report, FormattingAndRoundTrip) {
  EXPECT_EQ(format_mean_std({0.69891, 0.03712}), "0.6989±0.0371");
  MetricsReport empty;
  EXPECT_EQ(format_summary_csv(empty), "accuracy,recall,precision,f_score\n");
  EXPECT_EQ(format_rows_csv(empty), "name,accuracy,recall,precision,f_score\n");

  MetricsReport r;
  r.add("fold_00", evaluate(std::vector<int>{0, 1, 2, 1}, std::vector<int>{0, 1, 1, 1}));
  r.add("fold_01", evaluate(std::vector<int>{2, 2, 0}, std::vector<int>{2, 1, 0}));
  const fs::path dir = scratch("report");
  emit_report(r, dir, "Test");
  const auto back = read_rows_csv(dir / "rows.csv");
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(metric_values(back.rows[i])[k], metric_values(r.rows[i])[k], 1e-9);
  EXPECT_TRUE(fs::exists(dir / "table.txt"));
  const auto s = r.summary();
  EXPECT_NEAR(s[0].mean, (r.rows[0].accuracy + r.rows[1].accuracy) / 2, 1e-9);
  fs::remove_all(dir);
}

TEST(TrainConfig, KeyValueRoundTripAndErrors) {
  TrainConfig c = tiny_config();
  c.fusion = fusion::AttentionVariant::Full;
  c.single_scale = true;
  const auto back = parse_train_config(data::parse_key_values(format_train_config(c), "mem"));
  EXPECT_EQ(format_train_config(back), format_train_config(c));
  EXPECT_THROW(parse_train_config({{"learning_rate", "1"}}), ConfigError);
  TrainConfig bad = tiny_config();
  bad.patience = bad.max_epochs;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.batch_size = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Trainer, BatchesNeverLeaveASingleton) {
  std::vector<std::size_t> order(9);
  for (std::size_t i = 0; i < 9; ++i) order[i] = i;
  const auto b = harness::detail::make_batches(order, 4);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].size(), 5u);
}

TEST(Trainer, DeterministicAndRestoresBestValidation) {
  const auto inputs = tiny_inputs(8);
  const std::span<const Input> all(inputs);
  auto cfg = tiny_config();
  cfg.max_epochs = 3;
  cfg.patience = 2;
  const auto a = train(all.subspan(0, 6), all.subspan(6), cfg);
  const auto b = train(all.subspan(0, 6), all.subspan(6), cfg);
  EXPECT_EQ(a.history[0].train_loss, b.history[0].train_loss);
  double best = INFINITY;
  for (const auto& r : a.history) best = std::min(best, *r.val_loss);
  EXPECT_EQ(fusion_loss(a.trained, all.subspan(6)), best);
  EXPECT_THROW(train(all.subspan(0, 6), all.subspan(5), cfg), ContractError);
}

TEST(Checkpoint, SaveLoadPreservesPredictions) {
  const auto inputs = tiny_inputs(4);
  const auto t = initialize_model(tiny_config());
  const fs::path dir = scratch("ckpt");
  save_model(dir, t);
  const auto back = load_model(dir);
  const auto p1 = predict(t, inputs), p2 = predict(back, inputs);
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].branch, p2[i].branch);
  for (std::size_t i = 0; i < t.params.size(); ++i)
    EXPECT_EQ(t.params.param(i).value.storage(), back.params.param(i).value.storage());
  harness::detail::write_text(dir / kCheckpointIndex, "param nope tensors/param_0000.mmv\n");
  EXPECT_THROW(load_model(dir), ParseError);
  fs::remove_all(dir);
}

TEST(CrossValidation, StructureAndDummy) {
  const auto inputs = tiny_inputs(12);
  CrossValidationOptions opt;
  opt.folds = 3;
  opt.workers = 2;
  const auto cv = run_cross_validation(inputs, tiny_config(), opt);
  ASSERT_EQ(cv.folds.size(), 3u);
  EXPECT_EQ(cv.report.rows.size(), 3u);
  EXPECT_EQ(cv.pooled_predictions().size(), 12u);
  for (const auto& f : cv.folds) {
    const auto labels = labels_of(f.predictions);
    const std::vector<int> dummy(labels.size(), f.majority);
    EXPECT_EQ(cv.dummy.rows[f.fold].accuracy, evaluate(dummy, labels).accuracy);
  }
  const auto again = run_cross_validation(inputs, tiny_config(), {3, 1, {}});
  EXPECT_EQ(format_rows_csv(again.report), format_rows_csv(cv.report));
}

TEST(Ablation, EightRowsAndFullRowEqualsPlainEvaluation) {
  auto inputs = tiny_inputs(4);
  const auto t = initialize_model(tiny_config());
  const auto rows = run_missing_modality_ablation(t, inputs);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].label, "flair");
  EXPECT_EQ(rows[7].label, "flair+t1+t1ce+t2");
  const auto plain = predict(t, inputs);
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(rows[7].predictions[i].branch, plain[i].branch);
  const model::Availability no_flair = model::availability(false, true, true, true);
  EXPECT_THROW(run_missing_modality_ablation(t, inputs, std::span(&no_flair, 1)), ConfigError);
}

TEST(Cli, UsageAndExitCodes) {
  std::string text;
  EXPECT_EQ(cli({}, &text), kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}, &text), kExitUsage);
  EXPECT_EQ(cli({"train", "--data", "/nonexistent", "--config", "/nonexistent.txt", "--out", "/tmp/x"}, &text), kExitIo);
}

TEST(Cli, GenerateTrainAblateCompare) {
  const fs::path root = scratch("cli");
  fs::create_directories(root);
  ASSERT_EQ(cli({"gen-data", "--out", (root / "data").string(), "--subjects", "6", "--shape", "16,16,16", "--seed", "3"}),
            kExitOk);
  harness::detail::write_text(root / "cfg.txt", format_train_config(tiny_config()));
  std::string text;
  ASSERT_EQ(cli({"train", "--data", (root / "data").string(), "--config", (root / "cfg.txt").string(), "--out",
                 (root / "model").string(), "--holdout-folds", "3"},
                &text),
            kExitOk)
      << text;
  ASSERT_EQ(cli({"ablate", "--data", (root / "data").string(), "--model", (root / "model").string(), "--out",
                 (root / "ablation").string()},
                &text),
            kExitOk)
      << text;
  const auto preds = (root / "ablation" / "predictions_flair+t1+t1ce+t2.csv").string();
  ASSERT_EQ(cli({"compare", "--preds-a", preds, "--preds-b", preds}, &text), kExitOk);
  EXPECT_NE(text.find("p_value=1"), std::string::npos) << text;

  harness::detail::write_text(root / "bad.txt", "nonsense=1\n");
  EXPECT_EQ(cli({"train", "--data", (root / "data").string(), "--config", (root / "bad.txt").string(), "--out",
                 (root / "m2").string()}),
            kExitUsage);
  fs::remove_all(root);
}
