#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/folds.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/data/phantom.hpp"
#include "mmmna/harness/ablation.hpp"
#include "mmmna/harness/checkpoint.hpp"
#include "mmmna/harness/cross_validation.hpp"
#include "mmmna/harness/gradcheck_suite.hpp"
#include "mmmna/harness/mcnemar.hpp"
#include "mmmna/harness/report.hpp"
#include "mmmna/harness/train_config.hpp"
#include "mmmna/harness/trainer.hpp"

namespace mmmna::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // usage, contract, or configuration problems
inline constexpr int kExitIo = 2;     // unreadable, unwritable, or malformed files

inline constexpr double kGradCheckTolerance = 1e-4;

/// Loads a dataset directory and prepares every subject for the given input shape.
inline std::vector<Input> load_inputs(const fs::path& dir, const model::Extent3& shape) {
  std::vector<Input> out;
  for (const auto& s : data::read_dataset(dir)) out.push_back(model::prepare_subject<float>(s, shape));
  if (out.empty()) throw ConfigError("dataset " + dir.string() + " has no subjects");
  return out;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string s = "epoch,train_loss,val_loss\n";
  for (const auto& r : history) {
    s += std::to_string(r.epoch) + "," + exact(r.train_loss) + "," + (r.val_loss ? exact(*r.val_loss) : "") + "\n";
  }
  return s;
}

struct Args {
  fs::path out, data, config, model, preds_a, preds_b;
  std::size_t subjects = 16, folds = 10, workers = 1, holdout_folds = 10;
  std::string shape = "16,32,32";
  std::uint64_t seed = 0;
  double signal = 0.9;
};

inline int cmd_gen_data(const Args& a, std::ostream& out) {
  data::PhantomSpec spec;
  spec.seed = a.seed;
  spec.subjects = a.subjects;
  spec.shape = parse_shape(a.shape);
  spec.signal_strength = a.signal;
  const auto subjects = data::generate_phantoms(spec);
  data::write_dataset(a.out, subjects);
  out << "wrote " << subjects.size() << " subjects to " << a.out.string() << "\n";
  return kExitOk;
}

inline int cmd_train(const Args& a, std::ostream& out) {
  const TrainConfig config = read_train_config(a.config);
  const auto inputs = load_inputs(a.data, config.input_shape);
  std::vector<Input> train_set, val_set;
  if (a.holdout_folds >= 2 && inputs.size() >= a.holdout_folds) {
    std::vector<std::string> ids;
    for (const auto& s : inputs) ids.push_back(s.id);
    const auto split = data::split_folds(ids, labels_of(std::span<const Input>(inputs)), a.holdout_folds, config.seed);
    const std::set<std::string> held(split.ids[0].begin(), split.ids[0].end());
    for (const auto& s : inputs) (held.contains(s.id) ? val_set : train_set).push_back(s);
  } else {
    train_set = inputs;
  }
  TrainOptions opt;
  opt.on_epoch = [&](const EpochRecord& r, const TrainedModel&) {
    out << "epoch " << r.epoch << " train_loss " << fmt("%.6f", r.train_loss);
    if (r.val_loss) out << " val_loss " << fmt("%.6f", *r.val_loss);
    out << "\n";
  };
  const TrainResult result = train(train_set, val_set, config, opt);
  save_model(a.out, result.trained);
  detail::write_text(a.out / "history.csv", history_csv(result.history));
  const auto preds = predict(result.trained, train_set);
  out << "best epoch " << result.best_epoch << ", train accuracy "
      << fmt("%.4f", evaluate(branch_predictions(preds), labels_of(preds)).accuracy) << "\n";
  return kExitOk;
}

inline int cmd_cv(const Args& a, std::ostream& out) {
  const TrainConfig config = read_train_config(a.config);
  const auto inputs = load_inputs(a.data, config.input_shape);
  CrossValidationOptions opt;
  opt.folds = a.folds;
  opt.workers = a.workers;
  opt.on_fold = [&](const FoldResult& f) {
    out << "fold " << f.fold << " accuracy " << fmt("%.4f", f.metrics.accuracy) << " epochs " << f.epochs << "\n";
  };
  const auto cv = run_cross_validation(inputs, config, opt);
  for (const auto& f : cv.folds) write_predictions(a.out / fold_prediction_name(f.fold), f.predictions);
  emit_report(cv.report, a.out / "report", "Cross-validation (fusion branch)");
  emit_report(cv.dummy, a.out / "dummy", "Cross-validation (majority-class predictor)");
  const auto test = cv.versus_dummy();
  detail::write_text(a.out / "mcnemar.txt", "chi_square=" + exact(test.chi_square) + "\np_value=" + exact(test.p_value) +
                                                "\ndegenerate=" + (test.degenerate ? "true" : "false") + "\n");
  out << format_table(cv.report, "Cross-validation (fusion branch)");
  out << "versus majority class: chi2 " << fmt("%.4f", test.chi_square) << ", p " << fmt("%.4g", test.p_value) << "\n";
  return kExitOk;
}

inline int cmd_ablate(const Args& a, std::ostream& out) {
  const TrainedModel t = load_model(a.model);
  const auto inputs = load_inputs(a.data, t.config.input_shape);
  const auto rows = run_missing_modality_ablation(t, inputs);
  for (const auto& row : rows) write_predictions(a.out / ("predictions_" + row.label + ".csv"), row.predictions);
  const auto report = ablation_report(rows);
  emit_report(report, a.out, "Missing-modality evaluation (fusion branch)");
  out << format_table(report, "Missing-modality evaluation (fusion branch)");
  return kExitOk;
}

inline int cmd_compare(const Args& a, std::ostream& out) {
  const auto pa = read_predictions(a.preds_a);
  const auto pb = read_predictions(a.preds_b);
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : pb) by_id[p.id] = &p;
  std::vector<int> xa, xb, labels;
  for (const auto& p : pa) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) throw ContractError("compare: subject '" + p.id + "' missing from " + a.preds_b.string());
    if (it->second->label != p.label) throw ContractError("compare: label mismatch for subject '" + p.id + "'");
    xa.push_back(p.branch[model::kFusionBranch]);
    xb.push_back(it->second->branch[model::kFusionBranch]);
    labels.push_back(p.label);
  }
  if (pa.size() != pb.size()) throw ContractError("compare: prediction files cover different subjects");
  const auto table = contingency(xa, xb, labels);
  const auto r = mcnemar_test(table);
  out << "b=" << table.b << " c=" << table.c << " chi_square=" << fmt("%.6f", r.chi_square)
      << " p_value=" << fmt("%.6g", r.p_value) << (r.degenerate ? " (no discordant pairs)" : "") << "\n";
  return kExitOk;
}

inline int cmd_gradcheck(const Args& a, std::ostream& out) {
  bool ok = true;
  run_gradcheck_suite(a.seed, [&](const GradCheckEntry& e) {
    const bool pass = e.error < kGradCheckTolerance;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << e.name << " max_rel_error " << fmt("%.3e", e.error) << " ("
        << fmt("%.2f", e.seconds) << " s)\n";
  });
  return ok ? kExitOk : kExitUsage;
}

}  // namespace detail

/// Entry point of the command-line tool; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal survival classification: data generation, training, evaluation"};
  app.require_subcommand(1);
  detail::Args a;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic phantom dataset");
  gen->add_option("--out", a.out, "Output directory")->required();
  gen->add_option("--subjects", a.subjects, "Number of subjects")->check(CLI::PositiveNumber);
  gen->add_option("--shape", a.shape, "Volume shape D,H,W");
  gen->add_option("--seed", a.seed, "Generator seed");
  gen->add_option("--signal", a.signal, "Class signal strength in [0, 1]");

  auto* tr = app.add_subcommand("train", "Train one model");
  tr->add_option("--data", a.data, "Dataset directory")->required();
  tr->add_option("--config", a.config, "key=value training config")->required();
  tr->add_option("--out", a.out, "Model output directory")->required();
  tr->add_option("--holdout-folds", a.holdout_folds, "Hold out one of K stratified folds for early stopping (0 = none)");

  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv->add_option("--data", a.data, "Dataset directory")->required();
  cv->add_option("--config", a.config, "key=value training config")->required();
  cv->add_option("--folds", a.folds, "Fold count");
  cv->add_option("--workers", a.workers, "Folds trained concurrently");
  cv->add_option("--out", a.out, "Output directory")->required();

  auto* ab = app.add_subcommand("ablate", "Missing-modality evaluation of a trained model");
  ab->add_option("--data", a.data, "Dataset directory")->required();
  ab->add_option("--model", a.model, "Model directory written by train")->required();
  ab->add_option("--out", a.out, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "McNemar test between two prediction files");
  cmp->add_option("--preds-a", a.preds_a, "Prediction CSV of model A")->required();
  cmp->add_option("--preds-b", a.preds_b, "Prediction CSV of model B")->required();

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", a.seed, "Seed for random test tensors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) return detail::cmd_gen_data(a, out);
    if (*tr) return detail::cmd_train(a, out);
    if (*cv) return detail::cmd_cv(a, out);
    if (*ab) return detail::cmd_ablate(a, out);
    if (*cmp) return detail::cmd_compare(a, out);
    if (*gc) return detail::cmd_gradcheck(a, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mmmna::harness
