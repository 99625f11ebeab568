#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace denfield {

// Raised when two rasters (or a raster and an operator) disagree on grid size.
class DimensionError : public std::invalid_argument {
public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Raised by the DMAP1 reader; carries the byte offset at which parsing failed.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

}  // namespace denfield
