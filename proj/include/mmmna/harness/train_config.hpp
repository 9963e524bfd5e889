#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/model/config.hpp"

namespace mmmna::harness {

/// Optimizer, schedule, and model-variant settings. Serialized as key=value text.
struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::size_t batch_size = 4;
  double lambda = 0.25;
  double alpha = 0.25;
  double gamma = 2.0;
  std::uint64_t seed = 0;
  fusion::AttentionVariant fusion = fusion::AttentionVariant::Linformer;
  bool single_scale = false;
  bool baseline_concat = false;
  bool augment = true;
  std::size_t base_channels = 8;
  model::Extent3 input_shape{16, 32, 32};

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
    if (max_epochs == 0) throw ConfigError("config: max_epochs must be positive");
    if (patience == 0 || patience >= max_epochs) throw ConfigError("config: patience must lie in [1, max_epochs)");
    if (batch_size < 2) throw ConfigError("config: batch_size must be at least 2");
    model_config().validate();
  }

  model::MMMNAConfig model_config() const {
    model::MMMNAConfig m;
    m.input_shape = input_shape;
    m.base_channels = base_channels;
    m.lambda = lambda;
    m.alpha = alpha;
    m.gamma = gamma;
    m.variant = fusion;
    m.single_scale = single_scale;
    m.baseline_concat = baseline_concat;
    m.seed = seed;
    return m;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " must be true or false, got '" + v + "'");
}

inline std::size_t parse_count(const std::string& v, const std::string& key) {
  long long n = 0;
  try {
    n = data::parse_integer(v, key);
  } catch (const ParseError&) {
    throw ConfigError("config: " + key + " must be an integer, got '" + v + "'");
  }
  if (n < 0) throw ConfigError("config: " + key + " must be non-negative");
  return static_cast<std::size_t>(n);
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    return data::parse_double(v, key);
  } catch (const ParseError&) {
    throw ConfigError("config: " + key + " must be a number, got '" + v + "'");
  }
}

}  // namespace detail

/// Parses "D,H,W".
inline model::Extent3 parse_shape(const std::string& text) {
  model::Extent3 e{};
  std::size_t at = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t comma = text.find(',', at);
    if ((a < 2) != (comma != std::string::npos)) throw ConfigError("shape must be D,H,W, got '" + text + "'");
    e[a] = detail::parse_count(text.substr(at, a < 2 ? comma - at : std::string::npos), "shape");
    if (e[a] == 0) throw ConfigError("shape extents must be positive, got '" + text + "'");
    at = comma + 1;
  }
  return e;
}

inline std::string shape_text(const model::Extent3& e) {
  return std::to_string(e[0]) + "," + std::to_string(e[1]) + "," + std::to_string(e[2]);
}

/// Every key is optional; unknown keys are errors.
inline TrainConfig parse_train_config(const data::KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "lr") c.lr = detail::parse_real(v, key);
    else if (key == "weight_decay") c.weight_decay = detail::parse_real(v, key);
    else if (key == "max_epochs") c.max_epochs = detail::parse_count(v, key);
    else if (key == "patience") c.patience = detail::parse_count(v, key);
    else if (key == "batch_size") c.batch_size = detail::parse_count(v, key);
    else if (key == "lambda") c.lambda = detail::parse_real(v, key);
    else if (key == "alpha") c.alpha = detail::parse_real(v, key);
    else if (key == "gamma") c.gamma = detail::parse_real(v, key);
    else if (key == "seed") c.seed = detail::parse_count(v, key);
    else if (key == "fusion") c.fusion = fusion::parse_variant(v);
    else if (key == "single_scale") c.single_scale = detail::parse_bool(v, key);
    else if (key == "baseline_concat") c.baseline_concat = detail::parse_bool(v, key);
    else if (key == "augment") c.augment = detail::parse_bool(v, key);
    else if (key == "base_channels") c.base_channels = detail::parse_count(v, key);
    else if (key == "input_shape") c.input_shape = parse_shape(v);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

inline TrainConfig read_train_config(const std::filesystem::path& path) {
  return parse_train_config(data::read_key_values(path));
}

inline std::string format_train_config(const TrainConfig& c) {
  std::ostringstream os;
  auto real = [](double v) { return data::detail::format_double(v); };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  os << "lr=" << real(c.lr) << "\nweight_decay=" << real(c.weight_decay) << "\nmax_epochs=" << c.max_epochs
     << "\npatience=" << c.patience << "\nbatch_size=" << c.batch_size << "\nlambda=" << real(c.lambda)
     << "\nalpha=" << real(c.alpha) << "\ngamma=" << real(c.gamma) << "\nseed=" << c.seed
     << "\nfusion=" << fusion::variant_name(c.fusion) << "\nsingle_scale=" << flag(c.single_scale)
     << "\nbaseline_concat=" << flag(c.baseline_concat) << "\naugment=" << flag(c.augment)
     << "\nbase_channels=" << c.base_channels << "\ninput_shape=" << shape_text(c.input_shape) << "\n";
  return os.str();
}

}  // namespace mmmna::harness
