#include "pcn/patch.hpp"

#include <algorithm>
#include <cmath>

#include "pcn/rng.hpp"

namespace pcn {

Patch extract_patch(const PointCloud& cloud, const KdTree& tree, std::size_t t, double r_frac,
                    std::size_t k, std::uint64_t seed) {
    if (t >= cloud.size()) throw Error("extract_patch: center index out of range");
    if (r_frac <= 0.0) throw Error("extract_patch: radius must be positive");
    if (k == 0) throw Error("extract_patch: patch size must be positive");
    double r_abs = r_frac * cloud.bbox_diagonal;
    if (r_abs <= 0.0) throw Error("extract_patch: degenerate bounding box");

    auto neighbors = tree.radius_query(cloud.points[t], r_abs);
    if (neighbors.empty()) throw Error("extract_patch: empty neighborhood at point " +
                                       std::to_string(t));
    std::sort(neighbors.begin(), neighbors.end());
    // center first, remaining neighbors after it
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    chosen.push_back(t);
    auto self_it = std::find(neighbors.begin(), neighbors.end(), t);
    if (self_it != neighbors.end()) neighbors.erase(self_it);

    Rng rng(seed);
    if (neighbors.size() + 1 > k) {
        auto pick = rng.sample_without_replacement(neighbors.size(), k - 1);
        for (std::size_t i : pick) chosen.push_back(neighbors[i]);
    } else {
        for (std::size_t i : neighbors) chosen.push_back(i);
        std::size_t real = chosen.size();
        while (chosen.size() < k)
            chosen.push_back(chosen[static_cast<std::size_t>(rng.integer(real))]);
    }

    Patch patch;
    patch.center_index = t;
    patch.radius = r_frac;
    patch.source_indices = std::move(chosen);
    patch.coords.reserve(k);
    const Vec3& c = cloud.points[t];
    for (std::size_t idx : patch.source_indices) {
        Vec3 d = sub3(cloud.points[idx], c);
        patch.coords.push_back({d[0] / r_abs, d[1] / r_abs, d[2] / r_abs});
    }
    if (cloud.has_normals()) {
        patch.gt_center_normal = cloud.normals[t];
        patch.gt_point_normals.reserve(k);
        for (std::size_t idx : patch.source_indices)
            patch.gt_point_normals.push_back(cloud.normals[idx]);
    }
    return patch;
}

std::vector<double> error_distance(const std::vector<Vec3>& point_normals,
                                   const Vec3& center_normal) {
    std::vector<double> out;
    out.reserve(point_normals.size());
    for (const auto& n : point_normals) {
        Vec3 d{n[0] - center_normal[0], n[1] - center_normal[1], n[2] - center_normal[2]};
        Vec3 s{n[0] + center_normal[0], n[1] + center_normal[1], n[2] + center_normal[2]};
        out.push_back(std::min(norm3(d), norm3(s)));
    }
    return out;
}

std::vector<double> normalize_errors(std::vector<double> distances, double epsilon) {
    if (distances.empty()) throw Error("normalize_errors: empty input");
    auto [mn_it, mx_it] = std::minmax_element(distances.begin(), distances.end());
    double mn = *mn_it;
    double denom = *mx_it - mn + epsilon;
    for (double& v : distances) v = (v - mn) / denom;
    return distances;
}

double effective_theta(const LabelConfig& config, double r_frac) {
    return r_frac <= config.small_scale_cutoff ? config.theta_small : config.theta;
}

std::vector<std::uint8_t> plane_labels(const std::vector<double>& normalized,
                                       const LabelConfig& config, double r_frac) {
    double theta = effective_theta(config, r_frac);
    std::vector<std::uint8_t> labels;
    labels.reserve(normalized.size());
    for (double v : normalized) labels.push_back(v <= theta ? 1 : 0);
    return labels;
}

void compute_labels(Patch& patch, const LabelConfig& config) {
    if (patch.gt_point_normals.empty())
        throw Error("compute_labels: patch has no ground-truth normals");
    auto dist = error_distance(patch.gt_point_normals, patch.gt_center_normal);
    auto norm = normalize_errors(std::move(dist), config.epsilon);
    patch.plane_labels = plane_labels(norm, config, patch.radius);
}

}  // namespace pcn
