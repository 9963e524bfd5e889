#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/harness/report.hpp"
#include "mmmna/harness/train_config.hpp"
#include "mmmna/harness/trainer.hpp"

// A model directory holds config.txt (TrainConfig), checkpoint.txt (one "param NAME FILE" or
// "buffer NAME FILE" line per tensor), and one MMV1 file per tensor.
namespace mmmna::harness {

inline constexpr const char* kCheckpointIndex = "checkpoint.txt";
inline constexpr const char* kConfigName = "config.txt";

inline void save_model(const fs::path& dir, const TrainedModel& t) {
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  detail::write_text(dir / kConfigName, format_train_config(t.config));
  std::string index;
  auto dump = [&](const char* kind, const auto& entries) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      char file[48];
      std::snprintf(file, sizeof(file), "tensors/%s_%04zu.mmv", kind, i);
      data::write_tensor(dir / file, entries[i].value);
      index += std::string(kind) + " " + entries[i].name + " " + file + "\n";
    }
  };
  dump("param", t.params.params());
  dump("buffer", t.params.buffers());
  detail::write_text(dir / kCheckpointIndex, index);
}

/// Rebuilds the model from config.txt and loads every tensor, checking names and shapes.
inline TrainedModel load_model(const fs::path& dir) {
  TrainedModel t = initialize_model(read_train_config(dir / kConfigName));
  const fs::path index_path = dir / kCheckpointIndex;
  const auto lines = detail::lines_of(detail::read_text(index_path));
  std::size_t params = 0, buffers = 0;
  for (const auto& [offset, line] : lines) {
    const std::size_t s1 = line.find(' ');
    const std::size_t s2 = s1 == std::string::npos ? s1 : line.find(' ', s1 + 1);
    if (s2 == std::string::npos) throw ParseError(index_path.string(), offset, "expected 'kind name file'");
    const std::string kind = line.substr(0, s1);
    const std::string name = line.substr(s1 + 1, s2 - s1 - 1);
    const Tensor<float> value = data::read_tensor<float>(dir / line.substr(s2 + 1));
    nn::ParamStore<float>::Entry* slot = nullptr;
    if (kind == "param" && params < t.params.size()) {
      slot = &t.params.param(params++);
    } else if (kind == "buffer" && buffers < t.params.buffer_count()) {
      slot = &t.params.buffer(buffers++);
    } else {
      throw ParseError(index_path.string(), offset, "unexpected entry '" + kind + " " + name + "'");
    }
    auto& entry = *slot;
    if (entry.name != name || entry.value.shape() != value.shape()) {
      throw ParseError(index_path.string(), offset,
                       "entry '" + name + "' " + shape_str(value.shape()) + " does not match model entry '" +
                           entry.name + "' " + shape_str(entry.value.shape()));
    }
    entry.value = value;
  }
  if (params != t.params.size() || buffers != t.params.buffer_count()) {
    throw ParseError(index_path.string(), 0, "checkpoint does not cover every model tensor");
  }
  return t;
}

}  // namespace mmmna::harness
