#pragma once

#include <cstdint>
#include <string>

#include "pcn/point_cloud.hpp"

namespace pcn {

struct ShapeParams {
    double dihedral_angle_deg = 90.0;  // interior angle between the two faces
};

// Uniform area-weighted surface sampling with analytic ground-truth normals.
// kind: plane | sphere | cylinder | cube | dihedral
PointCloud gen_shape(const std::string& kind, const ShapeParams& params, std::size_t n_points,
                     std::uint64_t seed);

struct NoiseSpec {
    double sigma = 0.0;  // fraction of the bounding-box diagonal
    std::uint64_t seed = 0;
};

// i.i.d. Gaussian perturbation of coordinates only; normals and eval indices
// keep referring to the clean surface.
PointCloud add_noise(const PointCloud& cloud, const NoiseSpec& spec);

struct DensityPattern {
    enum class Kind { stripes, gradient };
    Kind kind = Kind::gradient;
    double p_low = 0.1;
    double p_high = 1.0;
    int axis = 0;
    int stripe_count = 6;   // stripes only
    double stripe_duty = 0.5;
    std::uint64_t seed = 0;
};

PointCloud apply_density(const PointCloud& cloud, const DensityPattern& pattern);

}  // namespace pcn
