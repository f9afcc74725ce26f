// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "rinv/grid.hpp"
#include "rinv/radar.hpp"

namespace rinv::io {

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// RINV-GRID v1: "RINVGRID 1\n", "n_az n_rng az_min az_max rng_max\n", then
// n_az*n_rng little-endian float32, azimuth outer.
std::string encode_grid(const grid::SceneMask& mask);
grid::SceneMask decode_grid(std::string_view bytes);
void write_grid(const std::filesystem::path& path, const grid::SceneMask& mask);
grid::SceneMask read_grid(const std::filesystem::path& path);

/// Magnitude heatmaps share the grid format.
void write_heatmap(const std::filesystem::path& path, const radar::Heatmap& hm);
radar::Heatmap read_heatmap(const std::filesystem::path& path);

// RINVCPLX 1: same header, interleaved re/im float32 per cell.
std::string encode_complex(const radar::Heatmap& hm);
radar::Heatmap decode_complex(std::string_view bytes);

/// CSV "px_m,py_m", 9 significant digits.
std::string encode_points(const grid::PointSet& points);
grid::PointSet decode_points(std::string_view text);
void write_points(const std::filesystem::path& path, const grid::PointSet& points);
grid::PointSet read_points(const std::filesystem::path& path);

enum class RenderMode { kGray, kLog };

/// 8-bit binary PGM, width = n_rng, height = n_az; 0 maps to 0, max to 255.
std::string encode_pgm(const grid::SceneMask& mask, RenderMode mode);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace rinv::io
