// Acceptance checks for the desk-scale build. Prints one PASS/FAIL line per criterion and
// exits non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "mmmna/mmmna.hpp"

using namespace mmmna;
using namespace mmmna::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmmna_accept_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<Input> phantom_inputs(const data::PhantomSpec& spec) {
  std::vector<Input> out;
  for (const auto& s : data::generate_phantoms(spec)) out.push_back(model::prepare_subject<float>(s, spec.shape));
  return out;
}

template <class T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

Tensor<double> gaussian(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor<double> t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

Tensor<double> identity(std::size_t n) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : run_gradcheck_suite(0)) {
    if (!(e.error <= worst)) {
      worst = e.error;
      worst_name = e.name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 300.0,
          fmt("worst relative error %.2e (%s), %.1f s", worst, worst_name.c_str(), secs)};
}

Outcome attention_equivalence() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 1 + rng() % 64, d = 1 + rng() % 16;
    Tape<double> tape;
    const auto x = tape.constant(gaussian({n, d}, rng));
    const auto wq = tape.constant(gaussian({d, d}, rng, 0.5));
    const auto wk = tape.constant(gaussian({d, d}, rng, 0.5));
    const auto wv = tape.constant(gaussian({d, d}, rng, 0.5));
    const auto eye = tape.constant(identity(n));
    const auto full = fusion::full_attention(x, wq, wk, wv).output.value();
    const auto low = fusion::linformer_attention(x, wq, wk, wv, eye, eye).output.value();
    for (std::size_t i = 0; i < full.size(); ++i) worst = std::max(worst, std::abs(full[i] - low[i]));
  }

  // Long sequence: the weight matrix is n×k rather than n×n.
  const std::size_t n = 4096, k = 64, d = 8;
  std::mt19937_64 rng(99);
  Tape<double> tape;
  const auto x = tape.constant(gaussian({n, d}, rng));
  const auto w = tape.constant(gaussian({d, d}, rng, 0.3));
  const auto e = tape.constant(gaussian({k, n}, rng, 1.0 / 64));
  const auto r = fusion::linformer_attention(x, w, w, w, e, e);
  const bool shape_ok = r.weights.shape() == Shape{n, k} && r.output.shape() == Shape{n, d};
  return {worst < 1e-6 && shape_ok,
          fmt("max |full - linformer(k=n, E=F=I)| = %.2e over 20 seeds; n=4096 weights %s (%zux fewer than n×n)", worst,
              shape_str(r.weights.shape()).c_str(), n / k)};
}

Outcome shape_contract() {
  const auto t0 = Clock::now();
  model::MMMNAConfig cfg;
  cfg.input_shape = {64, 128, 128};
  cfg.base_channels = 8;
  cfg.projection_rank = {64, 64, 64, 64};  // the default n/8 rank would need gigabytes at 32³
  cfg.seed = 3;
  nn::ParamStore<float> store;
  const auto m = model::MMMNAModel::create(store, cfg);

  data::PhantomSpec spec;
  spec.subjects = 1;
  spec.seed = 4;
  spec.shape = cfg.input_shape;
  const auto inputs = phantom_inputs(spec);
  Tape<float> tape;
  const nn::Bound<float> bound(tape, store, false);
  const auto out = m.forward<float>(bound, inputs, false);

  bool ok = out.scales.size() == model::kScaleCount;
  std::string seen;
  for (std::size_t s = 0; ok && s < model::kScaleCount; ++s) {
    const std::size_t side = 32 >> s;
    const Shape expect{cfg.base_channels << s, side, side, side};
    const auto& t = out.scales[s];
    ok = t.fused && t.fusion_input == expect && t.fusion_output == expect;
    seen += (s ? " " : "") + shape_str(t.fusion_input);
  }
  for (const auto& l : out.logits) ok = ok && l.shape() == Shape{1, 3};
  return {ok, fmt("fusion inputs %s, outputs preserved, %.1f s", seen.c_str(), seconds_since(t0))};
}

Outcome loss_identities() {
  const double total = model::total_loss({1.0, 1.0, 1.0, 1.0}, 2.0, 0.25);
  const double term = model::focal_term(1, 0.9, 0.25, 2.0);

  // γ = 0, α = 0.5 against an independent one-vs-rest cross-entropy over a random batch.
  std::mt19937_64 rng(5);
  const std::size_t rows = 20;
  const Tensor<double> logits = gaussian({rows, 3}, rng, 2.0);
  std::vector<int> labels(rows);
  for (auto& y : labels) y = int(rng() % 3);
  double ce = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[b * 3 + c]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double p = std::exp(logits[b * 3 + c]) / z;
      ce -= int(c) == labels[b] ? std::log(p) : std::log(1.0 - p);
    }
  }
  ce /= double(rows);
  Tape<double> tape;
  const double focal =
      model::focal_loss(tape.constant(logits), model::one_hot<double>(labels, 3), 0.5, 0.0).value()[0];
  const double gap = std::abs(focal - 0.5 * ce);
  return {total == 3.0 && gap < 1e-10 && std::abs(term - 2.634e-4) < 1e-7,
          fmt("total %.17g; |focal(γ=0) - 0.5·CE| = %.2e; single term %.4e", total, gap, term)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  data::PhantomSpec spec;
  spec.subjects = 16;
  spec.seed = 1;
  spec.shape = {16, 32, 32};
  const auto inputs = phantom_inputs(spec);
  TrainConfig cfg;
  cfg.input_shape = spec.shape;
  cfg.max_epochs = 200;
  cfg.patience = 20;
  cfg.lr = 1e-3;
  cfg.augment = false;
  TrainOptions opt;
  opt.target_train_accuracy = 0.95;
  const auto r = train(inputs, {}, cfg, opt);
  const double acc = fusion_accuracy(r.trained, inputs);
  const double secs = seconds_since(t0);
  return {acc >= 0.95 && secs < 900.0,
          fmt("train accuracy %.3f after %zu epochs, %.0f s", acc, r.history.size(), secs)};
}

Outcome beats_chance() {
  const auto t0 = Clock::now();
  data::PhantomSpec spec;
  spec.subjects = 100;
  spec.seed = 7;
  spec.shape = {16, 16, 16};
  spec.signal_strength = 1.0;
  const auto inputs = phantom_inputs(spec);
  TrainConfig cfg;
  cfg.input_shape = spec.shape;
  cfg.lr = 1e-2;
  cfg.augment = true;
  cfg.max_epochs = 40;
  cfg.patience = 20;
  CrossValidationOptions opt;
  opt.folds = 10;
  opt.workers = std::max(1u, std::thread::hardware_concurrency());
  opt.on_fold = [&](const FoldResult& f) {
    std::printf("  fold %zu: accuracy %.3f, %zu epochs, %.0f s\n", f.fold, f.metrics.accuracy, f.epochs,
                seconds_since(t0));
    std::fflush(stdout);
  };
  const auto cv = run_cross_validation(inputs, cfg, opt);
  const auto labels = labels_of(inputs);
  std::array<std::size_t, 3> counts{};
  for (int y : labels) ++counts[std::size_t(y)];
  const double prevalence = double(*std::max_element(counts.begin(), counts.end())) / double(labels.size());
  const double acc = cv.report.summary()[0].mean;
  const auto preds = cv.pooled_predictions();
  const auto table = contingency(branch_predictions(preds), cv.pooled_dummy_predictions(), labels_of(preds));
  const auto test = mcnemar_test(table);
  const double secs = seconds_since(t0);
  return {acc >= prevalence + 0.10 && test.p_value < 0.05 && secs < 7200.0,
          fmt("mean fusion accuracy %.3f vs prevalence %.2f; McNemar b=%zu c=%zu chi2=%.2f p=%.2e; %.0f s", acc,
              prevalence, table.b, table.c, test.chi_square, test.p_value, secs)};
}

Outcome metric_oracles() {
  std::mt19937 rng(23);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = int(rng() % 3);
      y[i] = int(rng() % 3);
    }
    const auto m = evaluate(p, y);
    std::size_t cell[3][3] = {};
    for (std::size_t i = 0; i < n; ++i) ++cell[y[i]][p[i]];
    bool same = true;
    double correct = 0, prec = 0, rec = 0;
    for (int a = 0; a < 3; ++a) {
      correct += double(cell[a][a]);
      double col = 0, row = 0;
      for (int b = 0; b < 3; ++b) {
        same = same && m.confusion[a][b] == cell[a][b];
        col += double(cell[b][a]);
        row += double(cell[a][b]);
      }
      prec += col > 0 ? double(cell[a][a]) / col : 0.0;
      rec += row > 0 ? double(cell[a][a]) / row : 0.0;
    }
    prec /= 3;
    rec /= 3;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    same = same && m.accuracy == correct / double(n) && m.precision == prec && m.recall == rec && m.f_score == f;
    mismatches += !same;
  }
  const auto r = mcnemar_test({0, 15, 5, 0});
  return {mismatches == 0 && std::abs(r.chi_square - 4.05) < 1e-4 && std::abs(r.p_value - 0.0442) < 1e-4,
          fmt("%zu/100 brute-force mismatches; (b=15, c=5) chi2=%.4f p=%.4f", mismatches, r.chi_square, r.p_value)};
}

std::array<Tensor<float>, model::kBranchCount> logits_of(const TrainedModel& t, std::span<const Input> batch) {
  nn::ParamStore<float> params = t.params;
  Tape<float> tape;
  const nn::Bound<float> bound(tape, params, false);
  const auto out = t.model.forward<float>(bound, batch, false);
  std::array<Tensor<float>, model::kBranchCount> r;
  for (std::size_t b = 0; b < model::kBranchCount; ++b) r[b] = out.logits[b].value();
  return r;
}

Outcome missing_modality() {
  data::PhantomSpec spec;
  spec.subjects = 10;
  spec.seed = 12;
  spec.shape = {16, 16, 16};
  auto inputs = phantom_inputs(spec);
  TrainConfig cfg;
  cfg.input_shape = spec.shape;
  cfg.max_epochs = 3;
  cfg.patience = 1;
  cfg.augment = false;
  const auto t = train(std::span<const Input>(inputs).subspan(0, 8), std::span<const Input>(inputs).subspan(8), cfg).trained;

  const auto rows = run_missing_modality_ablation(t, inputs);
  const auto configs = model::missing_modality_configurations();
  bool ok = rows.size() == 8;

  // All-modalities row versus plain evaluation, on predictions and raw logits.
  const auto plain = predict(t, inputs);
  for (std::size_t i = 0; ok && i < plain.size(); ++i) ok = rows[7].predictions[i].branch == plain[i].branch;
  std::vector<Input> full_sub;
  for (const auto& s : inputs) full_sub.push_back(model::substitute_missing(s, configs[7]));
  const auto a = logits_of(t, inputs), b = logits_of(t, full_sub);
  for (std::size_t k = 0; k < model::kBranchCount; ++k) ok = ok && same_bits(a[k], b[k]);

  // Four identical modalities: every configuration must score the same, bit for bit.
  Input twin = inputs[0];
  for (auto& m : twin.modalities) m = twin.modalities[index_of(Modality::Flair)];
  const std::vector<Input> one{twin};
  const auto ref = logits_of(t, one);
  bool twin_ok = true;
  for (const auto& c : configs) {
    const std::vector<Input> sub{model::substitute_missing(twin, c)};
    const auto got = logits_of(t, sub);
    for (std::size_t k = 0; k < model::kBranchCount; ++k) twin_ok = twin_ok && same_bits(got[k], ref[k]);
  }
  const auto twin_rows = run_missing_modality_ablation(t, one);
  for (const auto& r : twin_rows) twin_ok = twin_ok && r.predictions[0].branch == twin_rows[0].predictions[0].branch;

  std::string labels;
  for (const auto& r : rows) labels += (labels.empty() ? "" : ", ") + r.label;
  return {ok && twin_ok, fmt("%zu configurations (%s); full row bit-identical: %s; identical-modality subject invariant: %s",
                             rows.size(), labels.c_str(), ok ? "yes" : "no", twin_ok ? "yes" : "no")};
}

Outcome determinism() {
  // Dataset write, read, write again: every file byte-identical and the subjects equal.
  data::PhantomSpec spec;
  spec.subjects = 6;
  spec.seed = 21;
  spec.shape = {16, 16, 16};
  const auto subjects = data::generate_phantoms(spec);
  const fs::path a = scratch("a"), b = scratch("b");
  data::write_dataset(a, subjects);
  const auto back = data::read_dataset(a);
  data::write_dataset(b, back);
  bool bytes_ok = back == subjects;
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path twin = b / fs::relative(entry.path(), a);
    bytes_ok = bytes_ok && fs::exists(twin) && data::detail::read_bytes(entry.path()) == data::detail::read_bytes(twin);
    ++files;
  }
  fs::remove_all(a);
  fs::remove_all(b);

  // Same seeds: epoch-0 loss and the full cross-validation report.
  const auto inputs = phantom_inputs(spec);
  TrainConfig cfg;
  cfg.input_shape = spec.shape;
  cfg.base_channels = 4;
  cfg.max_epochs = 2;
  cfg.patience = 1;
  const auto r1 = train(inputs, {}, cfg), r2 = train(inputs, {}, cfg);
  const double l1 = r1.history[0].train_loss, l2 = r2.history[0].train_loss;
  const bool loss_ok = std::memcmp(&l1, &l2, sizeof l1) == 0;
  const auto c1 = run_cross_validation(inputs, cfg, {3, 1, {}});
  const auto c2 = run_cross_validation(inputs, cfg, {3, 2, {}});
  const bool report_ok = format_rows_csv(c1.report) == format_rows_csv(c2.report) &&
                         format_predictions(c1.pooled_predictions()) == format_predictions(c2.pooled_predictions());
  return {bytes_ok && loss_ok && report_ok,
          fmt("%zu files byte-identical: %s; epoch-0 loss %.17g twice: %s; CV report identical: %s", files,
              bytes_ok ? "yes" : "no", l1, loss_ok ? "yes" : "no", report_ok ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "attention equivalence", attention_equivalence},
      {3, "shape contract at 64x128x128", shape_contract},
      {4, "loss identities", loss_identities},
      {5, "overfit 16 subjects", overfit},
      {6, "10-fold CV beats chance", beats_chance},
      {7, "metrics and McNemar oracles", metric_oracles},
      {8, "missing-modality protocol", missing_modality},
      {9, "determinism and round trips", determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
