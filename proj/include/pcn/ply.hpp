#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcn/point_cloud.hpp"

namespace pcn {

using Rgb = std::array<std::uint8_t, 3>;

// angle in degrees clamped to [0, 60], blue at 0 to yellow at 60
Rgb heatmap_color(double degrees);
// label 1 (plane point) red, label 0 grey
Rgb label_color(bool is_plane);

void write_ply(const std::vector<Vec3>& points, const std::vector<Rgb>& colors,
               const std::string& path);
void write_ply_heatmap(const PointCloud& cloud, const std::vector<double>& degrees,
                       const std::string& path);
void write_ply_labels(const std::vector<Vec3>& points, const std::vector<std::uint8_t>& labels,
                      const std::string& path);

}  // namespace pcn
