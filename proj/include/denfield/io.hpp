#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "denfield/errors.hpp"
#include "denfield/grid.hpp"

// DMAP1 raster file: one UTF-8 header line
//   DMAP1 width=<W> height=<H> dtype=<f64|i64|u8> kind=<counts|mask|density|gaussian|spectrum>
// terminated by '\n', followed by raw little-endian row-major samples.

namespace denfield {

static_assert(std::endian::native == std::endian::little,
              "DMAP1 writer assumes a little-endian host");

enum class MapKind { counts, mask, density, gaussian, spectrum };
enum class MapDtype { f64, i64, u8 };

inline const char* to_string(MapKind k) {
  switch (k) {
    case MapKind::counts: return "counts";
    case MapKind::mask: return "mask";
    case MapKind::density: return "density";
    case MapKind::gaussian: return "gaussian";
    case MapKind::spectrum: return "spectrum";
  }
  return "?";
}

inline const char* to_string(MapDtype d) {
  switch (d) {
    case MapDtype::f64: return "f64";
    case MapDtype::i64: return "i64";
    case MapDtype::u8: return "u8";
  }
  return "?";
}

namespace detail {

template <typename T> struct dtype_of;
template <> struct dtype_of<double> { static constexpr MapDtype value = MapDtype::f64; };
template <> struct dtype_of<std::int64_t> { static constexpr MapDtype value = MapDtype::i64; };
template <> struct dtype_of<std::uint8_t> { static constexpr MapDtype value = MapDtype::u8; };

inline std::size_t dtype_size(MapDtype d) {
  switch (d) {
    case MapDtype::f64: return 8;
    case MapDtype::i64: return 8;
    case MapDtype::u8: return 1;
  }
  return 0;
}

// Writes to a sibling temp file, then renames; readers never see partial files.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

struct Dmap1Header {
  std::size_t width = 0;
  std::size_t height = 0;
  MapDtype dtype = MapDtype::f64;
  MapKind kind = MapKind::density;
  std::size_t header_bytes = 0;  // including the terminating '\n'
};

inline Dmap1Header parse_dmap1_header(const std::string& bytes, const std::string& path) {
  const auto nl = bytes.find('\n');
  if (bytes.rfind("DMAP1", 0) != 0)
    throw FormatError(path + ": bad magic, expected DMAP1", 0);
  if (nl == std::string::npos)
    throw FormatError(path + ": unterminated header line", bytes.size());

  Dmap1Header h;
  h.header_bytes = nl + 1;

  const std::string line = bytes.substr(0, nl);
  std::istringstream fields(line);
  std::string token;
  fields >> token;  // magic, already checked
  bool saw_w = false, saw_h = false, saw_dtype = false, saw_kind = false;
  while (fields >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ": malformed header field '" + token + "'",
                        static_cast<std::size_t>(line.find(token)));
    const std::string key = token.substr(0, eq);
    const std::string val = token.substr(eq + 1);
    const std::size_t val_offset = line.find(token) + eq + 1;
    if (key == "width" || key == "height") {
      std::size_t parsed = 0;
      try {
        parsed = static_cast<std::size_t>(std::stoull(val));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad " + key + " '" + val + "'", val_offset);
      }
      (key == "width" ? h.width : h.height) = parsed;
      (key == "width" ? saw_w : saw_h) = true;
    } else if (key == "dtype") {
      if (val == "f64") h.dtype = MapDtype::f64;
      else if (val == "i64") h.dtype = MapDtype::i64;
      else if (val == "u8") h.dtype = MapDtype::u8;
      else throw FormatError(path + ": unknown dtype '" + val + "'", val_offset);
      saw_dtype = true;
    } else if (key == "kind") {
      if (val == "counts") h.kind = MapKind::counts;
      else if (val == "mask") h.kind = MapKind::mask;
      else if (val == "density") h.kind = MapKind::density;
      else if (val == "gaussian") h.kind = MapKind::gaussian;
      else if (val == "spectrum") h.kind = MapKind::spectrum;
      else throw FormatError(path + ": unknown kind '" + val + "'", val_offset);
      saw_kind = true;
    } else {
      throw FormatError(path + ": unknown header key '" + key + "'",
                        static_cast<std::size_t>(line.find(token)));
    }
  }
  if (!saw_w || !saw_h || !saw_dtype || !saw_kind)
    throw FormatError(path + ": header missing required keys", nl);
  return h;
}

}  // namespace detail

template <typename T>
void map_save(const std::string& path, const Grid<T>& map, MapKind kind) {
  const MapDtype dtype = detail::dtype_of<T>::value;
  std::string bytes;
  bytes += "DMAP1 width=" + std::to_string(map.width()) + " height=" + std::to_string(map.height()) +
           " dtype=" + to_string(dtype) + " kind=" + to_string(kind) + "\n";
  const char* raw = reinterpret_cast<const char*>(map.data().data());
  bytes.append(raw, raw + map.size() * sizeof(T));
  detail::write_file_atomic(path, bytes);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline detail::Dmap1Header map_peek(const std::string& path) {
  return detail::parse_dmap1_header(read_file_bytes(path), path);
}

template <typename T>
Grid<T> map_load(const std::string& path, MapKind* kind_out = nullptr) {
  const std::string bytes = read_file_bytes(path);
  const auto h = detail::parse_dmap1_header(bytes, path);
  if (h.dtype != detail::dtype_of<T>::value)
    throw FormatError(path + ": dtype is " + to_string(h.dtype) + ", requested " +
                          to_string(detail::dtype_of<T>::value),
                      6);  // offset of the first header field
  const std::size_t expected = h.width * h.height * sizeof(T);
  const std::size_t have = bytes.size() - h.header_bytes;
  if (have < expected)
    throw FormatError(path + ": truncated payload, expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(have),
                      bytes.size());
  if (have > expected)
    throw FormatError(path + ": trailing bytes after payload", h.header_bytes + expected);
  std::vector<T> data(h.width * h.height);
  std::copy_n(bytes.data() + h.header_bytes, expected, reinterpret_cast<char*>(data.data()));
  if (kind_out) *kind_out = h.kind;
  return Grid<T>(h.width, h.height, std::move(data));
}

// 8-bit binary PGM (P5) with a linear stretch over the [p1, p99] percentiles.
inline void write_pgm(const std::string& path, const RealGrid& map) {
  std::vector<double> sorted(map.data());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n == 0) throw std::domain_error("write_pgm: empty map");
  const double lo = sorted[static_cast<std::size_t>(0.01 * static_cast<double>(n - 1))];
  const double hi = sorted[static_cast<std::size_t>(0.99 * static_cast<double>(n - 1))];
  const double span = hi > lo ? hi - lo : 1.0;

  std::string bytes;
  bytes += "P5\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n255\n";
  bytes.reserve(bytes.size() + map.size());
  for (double v : map) {
    double t = (v - lo) / span * 255.0;
    t = std::clamp(t, 0.0, 255.0);
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(t))));
  }
  detail::write_file_atomic(path, bytes);
}

}  // namespace denfield
