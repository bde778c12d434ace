#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pcn/kdtree.hpp"
#include "pcn/point_cloud.hpp"

namespace pcn {

struct LabelConfig {
    double theta = 0.5;
    double theta_small = 0.8;          // weaker constraint for small scales
    double small_scale_cutoff = 0.03;  // theta_small applies when r <= cutoff
    double epsilon = 0.01;             // normalization denominator constant
};

// Fixed-size local neighborhood, translated to the center and divided by the
// absolute radius, so every coordinate lies in the unit ball. Row 0 is always
// the center point.
struct Patch {
    std::size_t center_index = 0;
    double radius = 0.0;  // fraction of the cloud's bbox diagonal
    std::vector<Vec3> coords;
    std::vector<std::size_t> source_indices;
    Vec3 gt_center_normal{0, 0, 0};
    std::vector<Vec3> gt_point_normals;  // empty when the cloud has no normals
    std::vector<std::uint8_t> plane_labels;  // empty until computed

    std::size_t size() const { return coords.size(); }
};

// Collects all points within r*bbox_diagonal of point t; subsamples without
// replacement above K, pads by replicating existing patch points below K.
Patch extract_patch(const PointCloud& cloud, const KdTree& tree, std::size_t t, double r_frac,
                    std::size_t k, std::uint64_t seed);

// distance of each neighbor normal to the center normal, min over sign
std::vector<double> error_distance(const std::vector<Vec3>& point_normals,
                                   const Vec3& center_normal);

// per-patch normalization: (P - min) / (max - min + epsilon)
std::vector<double> normalize_errors(std::vector<double> distances, double epsilon = 0.01);

double effective_theta(const LabelConfig& config, double r_frac);

// 1 = plane point (normalized error <= theta), 0 = error point
std::vector<std::uint8_t> plane_labels(const std::vector<double>& normalized,
                                       const LabelConfig& config, double r_frac);

// error_distance -> normalize_errors -> plane_labels on the patch's own normals
void compute_labels(Patch& patch, const LabelConfig& config);

}  // namespace pcn
