#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>

#include "plainpt/geometry.hpp"
#include "plainpt/patchify.hpp"

namespace plainpt {

enum class CloudFormat { kXyz, kPly };

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedFormatError : FormatError {
  using FormatError::FormatError;
};

// ".ply" (any case) selects PLY, everything else XYZ.
CloudFormat format_for_path(const std::filesystem::path& path);

// XYZ: "x y z [r g b]" per line, colors 0-255, '#' starts a comment.
PointCloud parse_xyz(std::istream& in, const std::string& source = "<stream>");
// ASCII PLY with a single vertex element holding x, y, z and optionally
// red, green, blue (0-255).
PointCloud parse_ply(std::istream& in, const std::string& source = "<stream>");
PointCloud load_point_cloud(const std::filesystem::path& path);

// Coordinates printed with 9 significant digits; the output is a pure
// function of the cloud.
std::string format_point_cloud(const PointCloud& pc, CloudFormat format);
void save_point_cloud(const PointCloud& pc, const std::filesystem::path& path, CloudFormat format);
void save_point_cloud(const PointCloud& pc, const std::filesystem::path& path);

// Distinct pseudo-random colors, one per patch.
std::vector<std::array<double, 3>> patch_palette(std::size_t patches, std::uint64_t seed);

// The unique points of every patch, painted with that patch's color.
// Overlapping groupings repeat shared points once per patch.
PointCloud color_by_patch(const PointCloud& pc, const PatchSet& ps, std::uint64_t seed);

// One line per patch: key index, then the K assigned point indices.
std::string format_assignment(const PatchSet& ps);

}  // namespace plainpt
