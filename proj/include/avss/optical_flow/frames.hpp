// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Grayscale frame stacks and dense flow fields, plus their on-disk forms:
//   PGM directory : P5 8-bit files, read in lexicographic order
//   AVSSFRM       : "AVSSFRM" | u32 N | u32 H | u32 W | f32 fps | N*H*W bytes
//   AVSSFLW       : "AVSSFLW" | u32 N-1 | u32 H | u32 W | per step: f32 dx[H*W], f32 dy[H*W]
// Integers and floats are little-endian.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace avss::flow {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // row-major, intensities in [0, 1]

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  /// Replicated-edge access.
  double clamped(long y, long x) const {
    y = std::clamp(y, 0L, static_cast<long>(height) - 1);
    x = std::clamp(x, 0L, static_cast<long>(width) - 1);
    return pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
  }
};

struct FrameSequence {
  std::vector<GrayImage> frames;
  double frame_rate = 25.0;

  std::size_t size() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }

  void validate() const {
    for (const auto& f : frames) {
      if (f.height != height() || f.width != width()) {
        throw std::invalid_argument("frame sequence: frames differ in size");
      }
    }
  }
};

/// Per-pixel displacement from one frame to the next, in pixels.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> dx;
  std::vector<double> dy;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w) : height(h), width(w), dx(h * w, 0.0), dy(h * w, 0.0) {}
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

inline void expect_magic(std::istream& is, const char* magic, const std::string& path) {
  char buf[7];
  if (!is.read(buf, 7) || std::memcmp(buf, magic, 7) != 0) {
    throw IoError("'" + path + "' is not an " + std::string(magic) + " file");
  }
}

inline unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline void write_frames(const std::string& path, const FrameSequence& seq) {
  seq.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("AVSSFRM", 7);
  detail::put_u32(os, static_cast<std::uint32_t>(seq.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(seq.height()));
  detail::put_u32(os, static_cast<std::uint32_t>(seq.width()));
  detail::put_f32(os, static_cast<float>(seq.frame_rate));
  std::vector<char> row;
  for (const auto& f : seq.frames) {
    row.resize(f.pixels.size());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<char>(detail::quantize(f.pixels[i]));
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline FrameSequence read_frames(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  detail::expect_magic(is, "AVSSFRM", path);
  const auto n = detail::get_u32(is), h = detail::get_u32(is), w = detail::get_u32(is);
  FrameSequence seq;
  seq.frame_rate = detail::get_f32(is);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  for (std::uint32_t k = 0; k < n; ++k) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw IoError("'" + path + "': truncated frame data");
    }
    GrayImage img(h, w);
    for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) os.put(static_cast<char>(detail::quantize(v)));
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  auto token = [&]() {
    std::string t;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
      } else {
        t.push_back(c);
      }
    }
    return t;
  };
  if (token() != "P5") throw IoError("'" + path + "' is not a binary PGM (P5)");
  const std::size_t w = std::stoul(token()), h = std::stoul(token());
  const unsigned long maxval = std::stoul(token());
  if (maxval == 0 || maxval > 255) throw IoError("'" + path + "': only 8-bit PGM is supported");
  GrayImage img(h, w);
  std::vector<unsigned char> buf(h * w);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw IoError("'" + path + "': truncated pixel data");
  }
  for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / static_cast<double>(maxval);
  return img;
}

/// Reads every *.pgm file of a directory in lexicographic order.
inline FrameSequence read_pgm_directory(const std::string& dir, double frame_rate = 25.0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") names.push_back(e.path().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("'" + dir + "' contains no .pgm frames");
  FrameSequence seq;
  seq.frame_rate = frame_rate;
  for (const auto& n : names) seq.frames.push_back(read_pgm(n));
  seq.validate();
  return seq;
}

inline void write_pgm_directory(const std::string& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::ostringstream name;
    name << dir << "/frame_" << std::setw(4) << std::setfill('0') << i << ".pgm";
    write_pgm(name.str(), seq.frames[i]);
  }
}

/// Loads an AVSSFRM file or a PGM directory, whichever `path` names.
inline FrameSequence load_frames(const std::string& path, double frame_rate = 25.0) {
  if (std::filesystem::is_directory(path)) return read_pgm_directory(path, frame_rate);
  return read_frames(path);
}

inline void write_flows(const std::string& path, const std::vector<FlowField>& flows) {
  if (flows.empty()) throw std::invalid_argument("write_flows: empty flow stack");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write("AVSSFLW", 7);
  detail::put_u32(os, static_cast<std::uint32_t>(flows.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(flows.front().height));
  detail::put_u32(os, static_cast<std::uint32_t>(flows.front().width));
  for (const auto& f : flows) {
    for (double v : f.dx) detail::put_f32(os, static_cast<float>(v));
    for (double v : f.dy) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline std::vector<FlowField> read_flows(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  detail::expect_magic(is, "AVSSFLW", path);
  const auto n = detail::get_u32(is), h = detail::get_u32(is), w = detail::get_u32(is);
  std::vector<FlowField> flows;
  for (std::uint32_t k = 0; k < n; ++k) {
    FlowField f(h, w);
    for (double& v : f.dx) v = detail::get_f32(is);
    for (double& v : f.dy) v = detail::get_f32(is);
    flows.push_back(std::move(f));
  }
  return flows;
}

}  // namespace avss::flow
