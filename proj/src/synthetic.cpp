#include "pcn/synthetic.hpp"

#include <cmath>

#include "pcn/rng.hpp"

namespace pcn {

namespace {

PointCloud gen_plane(std::size_t n, Rng& rng) {
    PointCloud c;
    c.name = "plane";
    for (std::size_t i = 0; i < n; ++i) {
        c.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.0});
        c.normals.push_back({0.0, 0.0, 1.0});
    }
    return c;
}

PointCloud gen_sphere(std::size_t n, Rng& rng) {
    PointCloud c;
    c.name = "sphere";
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 v;
        double len;
        do {
            v = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
            len = norm3(v);
        } while (len < 1e-12);
        Vec3 u{v[0] / len, v[1] / len, v[2] / len};
        c.points.push_back(u);  // unit sphere: the position is the normal
        c.normals.push_back(u);
    }
    return c;
}

PointCloud gen_cylinder(std::size_t n, Rng& rng) {
    // radius 0.5, height 1, with caps; area-weighted face choice
    PointCloud c;
    c.name = "cylinder";
    const double r = 0.5, h = 1.0;
    double lateral = 2.0 * M_PI * r * h;
    double cap = M_PI * r * r;
    double total = lateral + 2.0 * cap;
    for (std::size_t i = 0; i < n; ++i) {
        double pick = rng.uniform(0.0, total);
        if (pick < lateral) {
            double ang = rng.uniform(0.0, 2.0 * M_PI);
            double z = rng.uniform(-h / 2.0, h / 2.0);
            c.points.push_back({r * std::cos(ang), r * std::sin(ang), z});
            c.normals.push_back({std::cos(ang), std::sin(ang), 0.0});
        } else {
            double z = pick < lateral + cap ? h / 2.0 : -h / 2.0;
            double rad = r * std::sqrt(rng.uniform());
            double ang = rng.uniform(0.0, 2.0 * M_PI);
            c.points.push_back({rad * std::cos(ang), rad * std::sin(ang), z});
            c.normals.push_back({0.0, 0.0, z > 0.0 ? 1.0 : -1.0});
        }
    }
    return c;
}

PointCloud gen_cube(std::size_t n, Rng& rng) {
    PointCloud c;
    c.name = "cube";
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t face = rng.integer(6);
        int axis = static_cast<int>(face / 2);
        double sign = (face % 2 == 0) ? 1.0 : -1.0;
        double u = rng.uniform(-0.5, 0.5);
        double v = rng.uniform(-0.5, 0.5);
        Vec3 p{0, 0, 0}, nrm{0, 0, 0};
        p[axis] = 0.5 * sign;
        nrm[axis] = sign;
        p[(axis + 1) % 3] = u;
        p[(axis + 2) % 3] = v;
        c.points.push_back(p);
        c.normals.push_back(nrm);
    }
    return c;
}

PointCloud gen_dihedral(std::size_t n, double angle_deg, Rng& rng) {
    // two unit-extent half-planes joined along the y axis; face A lies in z=0
    if (!(angle_deg > 0.0 && angle_deg < 180.0))
        throw Error("gen_shape: dihedral angle must be in (0, 180) degrees, got " +
                    std::to_string(angle_deg));
    double a = angle_deg * M_PI / 180.0;
    Vec3 dir_a{1.0, 0.0, 0.0}, n_a{0.0, 0.0, 1.0};
    Vec3 dir_b{std::cos(a), 0.0, std::sin(a)};
    Vec3 n_b{-std::sin(a), 0.0, std::cos(a)};
    PointCloud c;
    c.name = "dihedral";
    for (std::size_t i = 0; i < n; ++i) {
        bool on_a = rng.integer(2) == 0;
        double s = rng.uniform();
        double y = rng.uniform(-0.5, 0.5);
        const Vec3& d = on_a ? dir_a : dir_b;
        c.points.push_back({s * d[0], y, s * d[2]});
        c.normals.push_back(on_a ? n_a : n_b);
    }
    return c;
}

}  // namespace

PointCloud gen_shape(const std::string& kind, const ShapeParams& params, std::size_t n_points,
                     std::uint64_t seed) {
    if (n_points < 100)
        throw Error("gen_shape: need at least 100 points, got " + std::to_string(n_points));
    Rng rng(seed);
    PointCloud c;
    if (kind == "plane")
        c = gen_plane(n_points, rng);
    else if (kind == "sphere")
        c = gen_sphere(n_points, rng);
    else if (kind == "cylinder")
        c = gen_cylinder(n_points, rng);
    else if (kind == "cube")
        c = gen_cube(n_points, rng);
    else if (kind == "dihedral")
        c = gen_dihedral(n_points, params.dihedral_angle_deg, rng);
    else
        throw Error("gen_shape: unknown kind '" + kind + "'");
    c.update_bbox();
    return c;
}

PointCloud add_noise(const PointCloud& cloud, const NoiseSpec& spec) {
    if (cloud.points.empty()) throw Error("add_noise: empty cloud");
    if (spec.sigma < 0.0) throw Error("add_noise: sigma must be non-negative");
    PointCloud out = cloud;
    if (spec.sigma == 0.0) return out;
    double s = spec.sigma * cloud.bbox_diagonal;
    Rng rng(spec.seed);
    for (auto& p : out.points)
        for (int a = 0; a < 3; ++a) p[a] += s * rng.gaussian();
    out.update_bbox();
    return out;
}

PointCloud apply_density(const PointCloud& cloud, const DensityPattern& pattern) {
    if (pattern.p_low < 0.0 || pattern.p_low > 1.0 || pattern.p_high < 0.0 ||
        pattern.p_high > 1.0)
        throw Error("apply_density: keep probabilities must lie in [0,1]");
    if (pattern.axis < 0 || pattern.axis > 2) throw Error("apply_density: axis must be 0..2");
    double lo = cloud.points.empty() ? 0.0 : cloud.points[0][pattern.axis];
    double hi = lo;
    for (const auto& p : cloud.points) {
        lo = std::min(lo, p[pattern.axis]);
        hi = std::max(hi, p[pattern.axis]);
    }
    double span = hi - lo;
    Rng rng(pattern.seed);
    PointCloud out;
    out.name = cloud.name;
    std::vector<std::size_t> remap(cloud.size(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double t = span > 0.0 ? (cloud.points[i][pattern.axis] - lo) / span : 0.0;
        double keep;
        if (pattern.kind == DensityPattern::Kind::stripes) {
            double phase = t * pattern.stripe_count;
            bool inside = phase - std::floor(phase) < pattern.stripe_duty;
            keep = inside ? pattern.p_low : pattern.p_high;
        } else {
            keep = pattern.p_low + (pattern.p_high - pattern.p_low) * t;
        }
        if (rng.uniform() < keep) {
            remap[i] = out.points.size();
            out.points.push_back(cloud.points[i]);
            if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
        }
    }
    for (std::size_t idx : cloud.eval_indices)
        if (remap[idx] != static_cast<std::size_t>(-1)) out.eval_indices.push_back(remap[idx]);
    out.update_bbox();
    return out;
}

}  // namespace pcn
