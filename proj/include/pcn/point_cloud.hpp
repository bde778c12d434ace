#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcn/tensor.hpp"

namespace pcn {

using Vec3 = std::array<double, 3>;

double norm3(const Vec3& v);
Vec3 normalized3(const Vec3& v);
double dot3(const Vec3& a, const Vec3& b);
Vec3 sub3(const Vec3& a, const Vec3& b);
Vec3 cross3(const Vec3& a, const Vec3& b);

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;              // empty, or one unit vector per point
    std::vector<std::size_t> eval_indices;  // empty means "evaluate everything"
    std::string name;
    double bbox_diagonal = 0.0;

    std::size_t size() const { return points.size(); }
    bool has_normals() const { return !normals.empty(); }
    void update_bbox();
};

// PCPNet-style file layout: one "x y z" line per point in .xyz, a parallel
// .normals file, integer indices in .pidx, shape names one per line in splits.
PointCloud load_xyz(const std::string& path);
void load_normals(const std::string& path, PointCloud& cloud);
void load_pidx(const std::string& path, PointCloud& cloud);
std::vector<std::string> load_split(const std::string& path);

void save_xyz(const PointCloud& cloud, const std::string& path);
void save_normals(const PointCloud& cloud, const std::string& path);
void save_pidx(const PointCloud& cloud, const std::string& path);

}  // namespace pcn
