#include "pcn/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace pcn {

Rgb heatmap_color(double degrees) {
    double t = std::clamp(degrees / 60.0, 0.0, 1.0);
    auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
    return {ch(t), ch(t), ch(1.0 - t)};
}

Rgb label_color(bool is_plane) {
    return is_plane ? Rgb{255, 0, 0} : Rgb{160, 160, 160};
}

void write_ply(const std::vector<Vec3>& points, const std::vector<Rgb>& colors,
               const std::string& path) {
    if (points.size() != colors.size())
        throw Error(path + ": " + std::to_string(colors.size()) + " colors for " +
                    std::to_string(points.size()) + " points");
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open file for writing");
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    char buf[96];
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %d %d %d\n", points[i][0], points[i][1],
                      points[i][2], colors[i][0], colors[i][1], colors[i][2]);
        out << buf;
    }
    if (!out) throw Error(path + ": write failed");
}

void write_ply_heatmap(const PointCloud& cloud, const std::vector<double>& degrees,
                       const std::string& path) {
    if (degrees.size() != cloud.size())
        throw Error(path + ": " + std::to_string(degrees.size()) + " values for " +
                    std::to_string(cloud.size()) + " points");
    std::vector<Rgb> colors;
    colors.reserve(degrees.size());
    for (double d : degrees) colors.push_back(heatmap_color(d));
    write_ply(cloud.points, colors, path);
}

void write_ply_labels(const std::vector<Vec3>& points, const std::vector<std::uint8_t>& labels,
                      const std::string& path) {
    if (labels.size() != points.size())
        throw Error(path + ": " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(points.size()) + " points");
    std::vector<Rgb> colors;
    colors.reserve(labels.size());
    for (std::uint8_t l : labels) colors.push_back(label_color(l != 0));
    write_ply(points, colors, path);
}

}  // namespace pcn
