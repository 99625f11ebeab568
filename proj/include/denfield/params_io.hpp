#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "denfield/io.hpp"
#include "denfield/randfield.hpp"

// LNPAR1 text file: the log-normal prior parameters (mu, binned spectrum)
// together with the grid and bin edges that define the spectral operator.
// Values are printed with 17 significant digits so doubles round-trip.

namespace denfield {

namespace detail {

inline std::string format_doubles(const std::vector<double>& values) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    if (i) out += ",";
    out += buf;
  }
  return out;
}

inline std::vector<double> parse_doubles(const std::string& csv, const std::string& path) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      out.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw FormatError(path + ": bad numeric value '" + token + "'", 0);
    }
  }
  return out;
}

}  // namespace detail

inline void params_save(const std::string& path, const LogNormalParams& params) {
  char buf[64];
  std::string out = "LNPAR1\n";
  out += "width=" + std::to_string(params.cov.width()) + "\n";
  out += "height=" + std::to_string(params.cov.height()) + "\n";
  std::snprintf(buf, sizeof buf, "mu=%.17g\n", params.mu);
  out += buf;
  out += "edges=" + detail::format_doubles(params.cov.binning.edges()) + "\n";
  out += "spectrum=" + detail::format_doubles(params.cov.spectrum) + "\n";
  detail::write_file_atomic(path, out);
}

inline LogNormalParams params_load(const std::string& path) {
  std::istringstream in(read_file_bytes(path));
  std::string line;
  if (!std::getline(in, line) || line != "LNPAR1")
    throw FormatError(path + ": bad magic, expected LNPAR1", 0);
  std::size_t width = 0, height = 0;
  double mu = 0.0;
  std::vector<double> edges, spectrum;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": malformed line '" + line + "'", 0);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "width") width = std::stoull(val);
    else if (key == "height") height = std::stoull(val);
    else if (key == "mu") mu = std::stod(val);
    else if (key == "edges") edges = detail::parse_doubles(val, path);
    else if (key == "spectrum") spectrum = detail::parse_doubles(val, path);
    else throw FormatError(path + ": unknown key '" + key + "'", 0);
  }
  if (width == 0 || height == 0 || edges.size() < 2 || spectrum.empty())
    throw FormatError(path + ": missing required keys", 0);
  RadialBinning binning(width, height, std::move(edges));
  return LogNormalParams(mu, StationaryCovariance(std::move(binning), std::move(spectrum)));
}

}  // namespace denfield
