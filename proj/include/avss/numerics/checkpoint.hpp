// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Checkpoint container:
//   "AVSSCKPT" | u32 version | records...
//   record := u32 name_len | name bytes | u32 rank | u64 extents[rank] |
//             f32 values[prod(extents)]
// All integers and floats little-endian.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/numerics/tensor.hpp"

namespace avss::checkpoint {

inline constexpr std::array<char, 8> kMagic{'A', 'V', 'S', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Record {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

template <typename U>
void put(std::ostream& os, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<unsigned char, sizeof(U)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) {
    throw FormatError("checkpoint: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

}  // namespace detail

inline void write(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  detail::put<std::uint32_t>(os, kVersion);
  for (const auto& r : records) {
    if (numel(r.shape) != r.values.size()) {
      throw FormatError("checkpoint: record '" + r.name + "' length does not match its shape");
    }
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) detail::put<std::uint64_t>(os, e);
    for (float v : r.values) detail::put<float>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline std::vector<Record> read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("checkpoint: bad magic in '" + path + "'");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<Record> records;
  while (is.peek() != std::char_traits<char>::eof()) {
    Record r;
    const auto name_len = detail::get<std::uint32_t>(is);
    r.name.resize(name_len);
    if (!is.read(r.name.data(), name_len)) throw FormatError("checkpoint: truncated name");
    const auto rank = detail::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.shape.push_back(static_cast<std::size_t>(detail::get<std::uint64_t>(is)));
    }
    r.values.resize(numel(r.shape));
    for (float& v : r.values) v = detail::get<float>(is);
    records.push_back(std::move(r));
  }
  return records;
}

template <typename T>
Record to_record(const std::string& name, const Tensor<T>& t) {
  Record r{name, t.shape(), {}};
  r.values.reserve(t.size());
  for (T v : t.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

inline Record scalar_record(const std::string& name, double value) {
  return Record{name, Shape{1}, {static_cast<float>(value)}};
}

inline std::map<std::string, const Record*> index(const std::vector<Record>& records) {
  std::map<std::string, const Record*> out;
  for (const auto& r : records) out[r.name] = &r;
  return out;
}

/// Copies a record into an existing tensor; shapes must agree exactly.
template <typename T>
void load_into(const Record& r, Tensor<T>& t) {
  if (r.shape != t.shape()) {
    throw DimensionError("checkpoint: record '" + r.name + "' has shape " + to_string(r.shape) +
                         " but model expects " + to_string(t.shape()));
  }
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(r.values[i]);
}

}  // namespace avss::checkpoint
