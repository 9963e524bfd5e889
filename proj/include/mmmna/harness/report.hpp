#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/harness/metrics.hpp"
#include "mmmna/harness/trainer.hpp"
#include "mmmna/model/mmmna.hpp"

namespace mmmna::harness {

namespace fs = std::filesystem;

inline constexpr const char* kPredictionHeader = "subject_id,label,pred_fusion,pred_flair,pred_t1,pred_t1ce,pred_t2";

namespace detail {

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (true) {
    const std::size_t comma = line.find(',', at);
    out.push_back(line.substr(at, comma == std::string::npos ? std::string::npos : comma - at));
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

/// Lines of a text file with trailing CR removed and empty lines skipped, plus their offsets.
inline std::vector<std::pair<std::size_t, std::string>> lines_of(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t at = 0;
  while (at < text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(at, end - at);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.emplace_back(at, std::move(line));
    at = end + 1;
  }
  return out;
}

}  // namespace detail

/// "0.6989±0.0371"
inline std::string format_mean_std(const MeanStd& m) { return detail::fixed4(m.mean) + "±" + detail::fixed4(m.std); }

inline std::string format_rows_csv(const MetricsReport& report) {
  std::string s = "name,accuracy,recall,precision,f_score\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    s += report.names[i];
    for (double v : metric_values(report.rows[i])) s += "," + detail::exact(v);
    s += "\n";
  }
  return s;
}

inline std::string format_summary_csv(const MetricsReport& report) {
  std::string s = "accuracy,recall,precision,f_score\n";
  if (report.rows.empty()) return s;
  const auto summary = report.summary();
  for (std::size_t k = 0; k < summary.size(); ++k) s += (k ? "," : "") + format_mean_std(summary[k]);
  return s + "\n";
}

/// Plain-text table: one line per row, then the mean±std line.
inline std::string format_table(const MetricsReport& report, const std::string& title) {
  std::size_t width = 12;
  for (const auto& n : report.names) width = std::max(width, n.size() + 2);
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string s = title + "\n" + pad("", width) + pad("Accuracy", 17) + pad("Recall", 17) + pad("Precision", 17) +
                  "F-score\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    s += pad(report.names[i], width);
    const auto v = metric_values(report.rows[i]);
    for (std::size_t k = 0; k < v.size(); ++k) s += k + 1 < v.size() ? pad(detail::fixed4(v[k]), 17) : detail::fixed4(v[k]);
    s += "\n";
  }
  if (!report.rows.empty()) {
    const auto summary = report.summary();
    s += pad("mean±std", width + 1);  // '±' is two bytes but one column
    for (std::size_t k = 0; k < summary.size(); ++k) {
      s += k + 1 < summary.size() ? pad(format_mean_std(summary[k]), 18) : format_mean_std(summary[k]);
    }
    s += "\n";
  }
  return s;
}

/// Writes rows.csv (full precision per row), summary.csv (mean±std) and table.txt.
inline void emit_report(const MetricsReport& report, const fs::path& dir, const std::string& title) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  detail::write_text(dir / "rows.csv", format_rows_csv(report));
  detail::write_text(dir / "summary.csv", format_summary_csv(report));
  detail::write_text(dir / "table.txt", format_table(report, title));
}

/// Parses rows.csv back into a report (confusion matrices are not stored there).
inline MetricsReport read_rows_csv(const fs::path& path) {
  const auto lines = detail::lines_of(detail::read_text(path));
  if (lines.empty() || lines[0].second != "name,accuracy,recall,precision,f_score") {
    throw ParseError(path.string(), 0, "missing report header");
  }
  MetricsReport r;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = detail::split_csv_line(lines[i].second);
    if (cells.size() != 5) throw ParseError(path.string(), lines[i].first, "expected 5 columns");
    FoldMetrics m;
    m.accuracy = data::parse_double(cells[1], path.string());
    m.recall = data::parse_double(cells[2], path.string());
    m.precision = data::parse_double(cells[3], path.string());
    m.f_score = data::parse_double(cells[4], path.string());
    r.add(cells[0], m);
  }
  return r;
}

inline std::string format_predictions(std::span<const Prediction> preds) {
  std::string s = std::string(kPredictionHeader) + "\n";
  for (const auto& p : preds) {
    s += p.id + "," + std::to_string(p.label);
    for (int b : p.branch) s += "," + std::to_string(b);
    s += "\n";
  }
  return s;
}

inline void write_predictions(const fs::path& path, std::span<const Prediction> preds) {
  detail::write_text(path, format_predictions(preds));
}

inline std::vector<Prediction> read_predictions(const fs::path& path) {
  const auto lines = detail::lines_of(detail::read_text(path));
  if (lines.empty() || lines[0].second != kPredictionHeader) {
    throw ParseError(path.string(), 0, "missing prediction header");
  }
  std::vector<Prediction> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = detail::split_csv_line(lines[i].second);
    if (cells.size() != 2 + model::kBranchCount) {
      throw ParseError(path.string(), lines[i].first, "expected " + std::to_string(2 + model::kBranchCount) + " columns");
    }
    Prediction p;
    p.id = cells[0];
    auto cls = [&](const std::string& c) {
      const long long v = data::parse_integer(c, path.string());
      if (v < 0 || v >= static_cast<long long>(kClasses)) {
        throw ParseError(path.string(), lines[i].first, "class " + c + " out of range");
      }
      return static_cast<int>(v);
    };
    p.label = cls(cells[1]);
    for (std::size_t b = 0; b < model::kBranchCount; ++b) p.branch[b] = cls(cells[2 + b]);
    out.push_back(std::move(p));
  }
  return out;
}

/// Recomputes the fusion-branch report from per-fold prediction files alone.
inline MetricsReport report_from_predictions(const std::vector<fs::path>& files) {
  MetricsReport r;
  for (const auto& f : files) {
    const auto preds = read_predictions(f);
    r.add(f.stem().string(), evaluate(branch_predictions(preds), labels_of(preds)));
  }
  return r;
}

inline std::string fold_prediction_name(std::size_t fold) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fold_%02zu.csv", fold);
  return buf;
}

}  // namespace mmmna::harness
