// SPDX-License-Identifier: Apache-2.0
#include "rinv/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "rinv/errors.hpp"

namespace rinv::io {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr std::string_view kGridMagic = "RINVGRID 1";
constexpr std::string_view kComplexMagic = "RINVCPLX 1";

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw IoError("truncated header");
    std::string_view out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  void floats(float* out, std::size_t n) {
    if (bytes_.size() - pos_ < n * sizeof(float)) throw IoError("truncated float payload");
    std::memcpy(out, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string header_line(const grid::PolarGrid& g) {
  return std::to_string(g.n_az) + " " + std::to_string(g.n_rng) + " " + format_double(g.az_min_deg) + " " +
         format_double(g.az_max_deg) + " " + format_double(g.rng_max_m) + "\n";
}

grid::PolarGrid parse_header(std::string_view line) {
  std::istringstream in{std::string(line)};
  int n_az = 0;
  int n_rng = 0;
  double lo = 0;
  double hi = 0;
  double rmax = 0;
  if (!(in >> n_az >> n_rng >> lo >> hi >> rmax)) throw IoError("malformed grid header '" + std::string(line) + "'");
  try {
    return grid::make_grid(n_az, n_rng, lo, hi, rmax);
  } catch (const ConfigError& e) {
    throw IoError(std::string("invalid grid header: ") + e.what());
  }
}

void append_floats(std::string& out, const float* data, std::size_t n) {
  out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string encode_grid(const grid::SceneMask& mask) {
  const grid::PolarGrid& g = mask.grid;
  std::string out;
  out += kGridMagic;
  out += '\n';
  out += header_line(g);
  std::vector<float> payload;
  payload.reserve(g.size());
  for (int i = 0; i < g.n_az; ++i) {
    for (int j = 0; j < g.n_rng; ++j) payload.push_back(static_cast<float>(mask.values(i, j)));
  }
  append_floats(out, payload.data(), payload.size());
  return out;
}

grid::SceneMask decode_grid(std::string_view bytes) {
  Reader r(bytes);
  if (r.line() != kGridMagic) throw IoError("not a RINVGRID 1 file");
  grid::SceneMask mask = grid::SceneMask::zeros(parse_header(r.line()));
  std::vector<float> payload(mask.grid.size());
  r.floats(payload.data(), payload.size());
  if (!r.done()) throw IoError("trailing bytes after grid payload");
  std::size_t k = 0;
  for (int i = 0; i < mask.grid.n_az; ++i) {
    for (int j = 0; j < mask.grid.n_rng; ++j) mask.values(i, j) = payload[k++];
  }
  return mask;
}

void write_grid(const std::filesystem::path& path, const grid::SceneMask& mask) {
  write_file_atomic(path, encode_grid(mask));
}

grid::SceneMask read_grid(const std::filesystem::path& path) {
  try {
    return decode_grid(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_heatmap(const std::filesystem::path& path, const radar::Heatmap& hm) {
  if (hm.mode == radar::HeatmapMode::kComplex) {
    write_file_atomic(path, encode_complex(hm));
  } else {
    write_grid(path, grid::SceneMask{hm.grid, hm.magnitude});
  }
}

radar::Heatmap read_heatmap(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    if (bytes.starts_with(kComplexMagic)) return decode_complex(bytes);
    grid::SceneMask m = decode_grid(bytes);
    if ((m.values.array() < 0.0).any()) throw IoError("magnitude heatmap has negative entries");
    return radar::Heatmap{m.grid, radar::HeatmapMode::kMagnitude, {}, std::move(m.values)};
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string encode_complex(const radar::Heatmap& hm) {
  if (hm.mode != radar::HeatmapMode::kComplex) throw ConfigError("encode_complex: expected a complex heatmap");
  const grid::PolarGrid& g = hm.grid;
  std::string out;
  out += kComplexMagic;
  out += '\n';
  out += header_line(g);
  std::vector<float> payload;
  payload.reserve(2 * g.size());
  for (int i = 0; i < g.n_az; ++i) {
    for (int j = 0; j < g.n_rng; ++j) {
      payload.push_back(static_cast<float>(hm.complex_values(i, j).real()));
      payload.push_back(static_cast<float>(hm.complex_values(i, j).imag()));
    }
  }
  append_floats(out, payload.data(), payload.size());
  return out;
}

radar::Heatmap decode_complex(std::string_view bytes) {
  Reader r(bytes);
  if (r.line() != kComplexMagic) throw IoError("not a RINVCPLX 1 file");
  const grid::PolarGrid g = parse_header(r.line());
  std::vector<float> payload(2 * g.size());
  r.floats(payload.data(), payload.size());
  if (!r.done()) throw IoError("trailing bytes after complex payload");
  radar::Heatmap hm{g, radar::HeatmapMode::kComplex, Eigen::MatrixXcd(g.n_az, g.n_rng), {}};
  std::size_t k = 0;
  for (int i = 0; i < g.n_az; ++i) {
    for (int j = 0; j < g.n_rng; ++j, k += 2) hm.complex_values(i, j) = {payload[k], payload[k + 1]};
  }
  return hm;
}

std::string encode_points(const grid::PointSet& points) {
  std::string out = "px_m,py_m\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", p.px_m, p.py_m);
    out += buf;
  }
  return out;
}

grid::PointSet decode_points(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "px_m,py_m") throw IoError("points CSV must start with 'px_m,py_m'");
  grid::PointSet out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    char* end = nullptr;
    grid::Point p;
    p.px_m = std::strtod(line.c_str(), &end);
    const bool ok_x = comma != std::string::npos && end == line.c_str() + comma;
    p.py_m = ok_x ? std::strtod(line.c_str() + comma + 1, &end) : 0.0;
    if (!ok_x || *end != '\0' || !std::isfinite(p.px_m) || !std::isfinite(p.py_m)) {
      throw IoError("malformed point on line " + std::to_string(lineno));
    }
    out.push_back(p);
  }
  return out;
}

void write_points(const std::filesystem::path& path, const grid::PointSet& points) {
  write_file_atomic(path, encode_points(points));
}

grid::PointSet read_points(const std::filesystem::path& path) {
  try {
    return decode_points(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const grid::SceneMask& mask, RenderMode mode) {
  const grid::PolarGrid& g = mask.grid;
  std::string out = "P5\n" + std::to_string(g.n_rng) + " " + std::to_string(g.n_az) + "\n255\n";
  const double peak = g.size() > 0 ? std::max(0.0, mask.values.maxCoeff()) : 0.0;
  auto map = [&](double v) -> double {
    v = std::max(0.0, v);
    if (mode == RenderMode::kLog) return std::log10(1.0 + 100.0 * v) / std::log10(1.0 + 100.0 * peak);
    return v / peak;
  };
  for (int i = 0; i < g.n_az; ++i) {
    for (int j = 0; j < g.n_rng; ++j) {
      const double level = peak > 0.0 ? std::clamp(map(mask.values(i, j)), 0.0, 1.0) : 0.0;
      out += static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * level)));
    }
  }
  return out;
}

}  // namespace rinv::io
