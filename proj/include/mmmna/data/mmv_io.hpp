#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"
#include "mmmna/data/subject.hpp"

// MMV1 tensor files:
//   "MMV1" | u8 dtype (0 = f32, 1 = u8) | u8 rank | rank × u32 LE extents | LE data, W fastest.
// A subject is a directory holding flair/t1/t1ce/t2/seg.mmv and meta.txt (key=value lines);
// a dataset is a directory of subject directories indexed by manifest.txt.
namespace mmmna::data {

namespace fs = std::filesystem;

inline constexpr char kMagic[4] = {'M', 'M', 'V', '1'};
inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kMetaName = "meta.txt";

enum class DType : std::uint8_t { F32 = 0, U8 = 1 };

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) {
    return DType::F32;
  } else {
    static_assert(std::is_same_v<T, std::uint8_t>, "MMV1 stores f32 or u8 only");
    return DType::U8;
  }
}

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::vector<char>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

template <class T>
std::vector<char> encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) throw ContractError("MMV1 supports rank up to 255");
  std::vector<char> out(kMagic, kMagic + 4);
  out.push_back(static_cast<char>(dtype_of<T>()));
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t e : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
  for (T v : t.data()) {
    if constexpr (std::is_same_v<T, float>) {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

template <class T>
Tensor<T> decode_tensor(const std::vector<char>& bytes, const std::string& source) {
  if (bytes.size() < 6) throw ParseError(source, bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError(source, 0, "bad magic (expected MMV1)");
  const auto dtype = static_cast<std::uint8_t>(bytes[4]);
  if (dtype != static_cast<std::uint8_t>(dtype_of<T>())) {
    throw ParseError(source, 4, "dtype code " + std::to_string(dtype) + " does not match the requested type");
  }
  const std::size_t rank = static_cast<unsigned char>(bytes[5]);
  std::size_t at = 6;
  if (bytes.size() < at + 4 * rank) throw ParseError(source, bytes.size(), "truncated extents");
  Shape shape;
  for (std::size_t i = 0; i < rank; ++i, at += 4) {
    const std::uint32_t e = detail::get_u32(bytes, at);
    if (e == 0) throw ParseError(source, at, "zero extent");
    shape.push_back(e);
  }
  const std::size_t count = shape_numel(shape);
  const std::size_t width = sizeof(T);
  if (bytes.size() != at + count * width) {
    throw ParseError(source, std::min(bytes.size(), at + count * width),
                     "payload holds " + std::to_string(bytes.size() - at) + " bytes, shape " + shape_str(shape) +
                         " needs " + std::to_string(count * width));
  }
  std::vector<T> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    if constexpr (std::is_same_v<T, float>) {
      data[i] = std::bit_cast<float>(detail::get_u32(bytes, at + 4 * i));
    } else {
      data[i] = static_cast<T>(static_cast<unsigned char>(bytes[at + i]));
    }
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <class T>
void write_tensor(const fs::path& path, const Tensor<T>& t) {
  detail::write_bytes(path, encode_tensor(t));
}

template <class T>
Tensor<T> read_tensor(const fs::path& path) {
  return decode_tensor<T>(detail::read_bytes(path), path.string());
}

// ---------------------------------------------------------------------------
// key=value text

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(offset, end - offset);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] != '#') {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, offset, "expected key=value");
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(source, offset, "empty key");
      if (kv.contains(key)) throw ParseError(source, offset, "duplicate key '" + key + "'");
      kv[key] = trim(line.substr(eq + 1));
    }
    offset = end + 1;
  }
  return kv;
}

inline KeyValues read_key_values(const fs::path& path) {
  const auto bytes = detail::read_bytes(path);
  return parse_key_values(std::string(bytes.begin(), bytes.end()), path.string());
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(what, 0, "not a number: '" + s + "'");
  return v;
}

inline long long parse_integer(const std::string& s, const std::string& what) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(what, 0, "not an integer: '" + s + "'");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Subjects and datasets

inline void write_subject(const fs::path& dir, const Subject& s) {
  s.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (Modality m : kModalities) write_tensor(dir / (std::string(modality_name(m)) + ".mmv"), s.modality(m));
  write_tensor(dir / "seg.mmv", s.seg);
  const std::string meta = "id=" + s.id + "\nage=" + detail::format_double(s.age) +
                           "\nsurvival_days=" + std::to_string(s.survival_days) + "\n";
  detail::write_bytes(dir / kMetaName, std::vector<char>(meta.begin(), meta.end()));
}

inline Subject read_subject(const fs::path& dir) {
  Subject s;
  const fs::path meta_path = dir / kMetaName;
  const KeyValues meta = read_key_values(meta_path);
  for (const char* key : {"id", "age", "survival_days"}) {
    if (!meta.contains(key)) throw ParseError(meta_path.string(), 0, std::string("missing key '") + key + "'");
  }
  if (meta.size() != 3) throw ParseError(meta_path.string(), 0, "unexpected keys in subject metadata");
  s.id = meta.at("id");
  s.age = parse_double(meta.at("age"), meta_path.string());
  s.survival_days = static_cast<int>(parse_integer(meta.at("survival_days"), meta_path.string()));
  for (Modality m : kModalities) {
    s.modality(m) = read_tensor<float>(dir / (std::string(modality_name(m)) + ".mmv"));
  }
  s.seg = read_tensor<std::uint8_t>(dir / "seg.mmv");
  try {
    s.validate();
  } catch (const Error& e) {
    throw ParseError(dir.string(), 0, e.what());
  }
  return s;
}

/// One subject directory per subject (named by id) plus manifest.txt listing them.
inline void write_dataset(const fs::path& dir, const std::vector<Subject>& subjects) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string manifest;
  for (const Subject& s : subjects) {
    write_subject(dir / s.id, s);
    manifest += s.id + "\n";
  }
  detail::write_bytes(dir / kManifestName, std::vector<char>(manifest.begin(), manifest.end()));
}

inline std::vector<std::string> read_manifest(const fs::path& dir) {
  const auto bytes = detail::read_bytes(dir / kManifestName);
  std::vector<std::string> names;
  std::string line;
  for (char ch : bytes) {
    if (ch == '\n') {
      if (!line.empty()) names.push_back(line);
      line.clear();
    } else if (ch != '\r') {
      line.push_back(ch);
    }
  }
  if (!line.empty()) names.push_back(line);
  return names;
}

inline std::vector<Subject> read_dataset(const fs::path& dir) {
  std::vector<Subject> subjects;
  for (const std::string& name : read_manifest(dir)) subjects.push_back(read_subject(dir / name));
  return subjects;
}

}  // namespace mmmna::data
