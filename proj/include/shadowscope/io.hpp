#pragma once

// Point-cloud and label ingestion/serialization.
//
// Velodyne binary: four little-endian IEEE-754 float32 per point
// (x, y, z, reflectance), no header.
//
// Native labels: one box per line,
//   label cx cy z_bottom height length width yaw
// whitespace separated, sensor frame, '#' starts a comment. The fifth column
// is the box height, so z_top = z_bottom + height.
//
// KITTI labels (camera frame) are converted with the velodyne-to-camera
// transform of a KITTI calibration file.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shadowscope/core_model.hpp"

namespace shadowscope {

PointCloud parse_velodyne_bin(std::span<const std::byte> bytes);

/// Coordinates are stored as float32; values that are already float32
/// representable (every parsed cloud) round-trip bit-exactly.
std::vector<std::byte> serialize_velodyne_bin(const PointCloud& cloud);

enum class LabelFrame { kLidar, kKittiCamera };

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Rigid (or at least invertible) mapping from velodyne to rectified camera
/// coordinates: x_cam = rect * (rotation * x_velo + translation).
struct KittiCalibration {
  Mat3 rect{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> translation{0, 0, 0};
};

/// Reads R0_rect (or R_rect) and Tr_velo_to_cam (or Tr_velo_cam) from a KITTI
/// calib document; other keys are ignored.
KittiCalibration parse_kitti_calib(std::string_view text);

std::vector<BoundingBox3D> parse_labels(
    std::string_view text, LabelFrame frame,
    const std::optional<KittiCalibration>& calib = std::nullopt);

/// Native-format document; doubles are written in shortest round-trip form.
std::string format_labels(const std::vector<BoundingBox3D>& boxes);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace shadowscope
