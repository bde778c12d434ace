#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "pcn/kdtree.hpp"
#include "pcn/patch.hpp"
#include "pcn/rng.hpp"
#include "pcn/synthetic.hpp"
#include "test_util.hpp"

using namespace pcn;

namespace {

std::vector<std::size_t> brute_force_query(const std::vector<Vec3>& pts, const Vec3& q,
                                           double r) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Vec3 d = sub3(pts[i], q);
        if (dot3(d, d) <= r * r) out.push_back(i);
    }
    return out;
}

}  // namespace

TEST_CASE("kd-tree radius queries") {
    SUBCASE("single point") {
        std::vector<Vec3> pts{{1, 2, 3}};
        KdTree tree(pts);
        CHECK(tree.radius_query({1, 2, 3}, 0.5) == std::vector<std::size_t>{0});
        CHECK(tree.radius_query({5, 5, 5}, 0.5).empty());
    }
    SUBCASE("radius zero returns only coincident points") {
        std::vector<Vec3> pts{{0, 0, 0}, {0, 0, 0}, {1e-9, 0, 0}};
        KdTree tree(pts);
        auto hits = tree.radius_query({0, 0, 0}, 0.0);
        std::sort(hits.begin(), hits.end());
        CHECK(hits == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("matches a brute-force scan on random data") {
        Rng rng(512);
        std::vector<Vec3> pts(1000);
        for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        KdTree tree(pts);
        for (int q = 0; q < 100; ++q) {
            Vec3 query{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            double r = rng.uniform(0.01, 0.8);
            auto got = tree.radius_query(query, r);
            std::sort(got.begin(), got.end());
            CHECK(got == brute_force_query(pts, query, r));
        }
    }
    SUBCASE("empty cloud is rejected") {
        std::vector<Vec3> none;
        CHECK_THROWS_AS(KdTree tree(none), Error);
    }
}

TEST_CASE("patch extraction") {
    auto cloud = gen_shape("sphere", {}, 2000, 99);
    KdTree tree(cloud.points);
    SUBCASE("the center row is exactly zero") {
        auto p = extract_patch(cloud, tree, 17, 0.1, 100, 1);
        CHECK(p.coords[0][0] == 0.0);
        CHECK(p.coords[0][1] == 0.0);
        CHECK(p.coords[0][2] == 0.0);
        CHECK(p.source_indices[0] == 17);
        CHECK(p.center_index == 17);
    }
    SUBCASE("replicate padding fills up to k from the real neighbors") {
        std::vector<Vec3> pts{{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {5, 5, 5}};
        PointCloud tiny;
        tiny.points = pts;
        tiny.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
        tiny.update_bbox();
        KdTree ttree(tiny.points);
        auto p = extract_patch(tiny, ttree, 0, 0.05, 500, 2);
        REQUIRE(p.size() == 500);
        std::set<std::size_t> sources(p.source_indices.begin(), p.source_indices.end());
        CHECK(sources == std::set<std::size_t>{0, 1, 2});
        std::set<std::array<double, 3>> coords(p.coords.begin(), p.coords.end());
        CHECK(coords.size() == 3);
    }
    SUBCASE("normalized coordinates stay inside the unit ball") {
        auto p = extract_patch(cloud, tree, 3, 0.08, 200, 5);
        for (const auto& c : p.coords) CHECK(norm3(c) <= 1.0 + 1e-9);
    }
    SUBCASE("same seed is bitwise deterministic") {
        auto a = extract_patch(cloud, tree, 11, 0.07, 64, 1234);
        auto b = extract_patch(cloud, tree, 11, 0.07, 64, 1234);
        CHECK(a.source_indices == b.source_indices);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (int ax = 0; ax < 3; ++ax) CHECK(a.coords[i][ax] == b.coords[i][ax]);
    }
    SUBCASE("subsampling keeps the center and draws from the neighborhood") {
        auto p = extract_patch(cloud, tree, 42, 0.5, 32, 7);
        CHECK(p.source_indices[0] == 42);
        std::set<std::size_t> unique(p.source_indices.begin(), p.source_indices.end());
        CHECK(unique.size() == 32);  // without replacement
    }
    SUBCASE("gt normals are gathered in patch order") {
        auto p = extract_patch(cloud, tree, 8, 0.1, 50, 3);
        REQUIRE(p.gt_point_normals.size() == 50);
        for (std::size_t i = 0; i < p.size(); ++i)
            for (int a = 0; a < 3; ++a)
                CHECK(p.gt_point_normals[i][a] == cloud.normals[p.source_indices[i]][a]);
    }
}

TEST_CASE("error distance") {
    Vec3 up{0, 0, 1};
    SUBCASE("identical and opposite normals score zero") {
        auto d = error_distance({{0, 0, 1}, {0, 0, -1}}, up);
        CHECK(d[0] == 0.0);
        CHECK(d[1] == 0.0);
    }
    SUBCASE("orthogonal normals score sqrt(2)") {
        auto d = error_distance({{0, 1, 0}}, up);
        CHECK(d[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("sign flips of either argument do not matter") {
        Rng rng(4);
        for (int it = 0; it < 200; ++it) {
            Vec3 n = normalized3({rng.gaussian(), rng.gaussian(), rng.gaussian()});
            Vec3 c = normalized3({rng.gaussian(), rng.gaussian(), rng.gaussian()});
            Vec3 nn{-n[0], -n[1], -n[2]};
            Vec3 nc{-c[0], -c[1], -c[2]};
            double base = error_distance({n}, c)[0];
            CHECK(error_distance({nn}, c)[0] == base);
            CHECK(error_distance({n}, nc)[0] == base);
            CHECK(base >= 0.0);
            CHECK(base <= std::sqrt(2.0) + 1e-12);
        }
    }
}

TEST_CASE("error normalization") {
    SUBCASE("all-equal input maps to zero") {
        auto out = normalize_errors({0.3, 0.3, 0.3});
        for (double v : out) CHECK(v == 0.0);
    }
    SUBCASE("binary input maps to 0 and 1/1.01") {
        auto out = normalize_errors({0.0, 1.0});
        CHECK(out[0] == 0.0);
        CHECK(out[1] == doctest::Approx(1.0 / 1.01).epsilon(1e-12));
    }
    SUBCASE("output always lies in [0,1)") {
        Rng rng(10);
        for (int it = 0; it < 100; ++it) {
            std::vector<double> v(32);
            for (auto& x : v) x = rng.uniform(0.0, std::sqrt(2.0));
            for (double o : normalize_errors(std::move(v))) {
                CHECK(o >= 0.0);
                CHECK(o < 1.0);
            }
        }
    }
}

TEST_CASE("plane labels") {
    LabelConfig cfg;
    SUBCASE("flat patch labels everything as plane") {
        std::vector<Vec3> normals(64, Vec3{0, 0, 1});
        auto dist = error_distance(normals, {0, 0, 1});
        auto labels = plane_labels(normalize_errors(std::move(dist)), cfg, 0.05);
        for (auto l : labels) CHECK(l == 1);
    }
    SUBCASE("right-angle faces split cleanly at the default threshold") {
        // face B scores sqrt(2)/(sqrt(2)+0.01) ~ 0.99298 against theta 0.5
        std::vector<Vec3> normals{{0, 0, 1}, {0, 0, 1}, {1, 0, 0}};
        auto norm = normalize_errors(error_distance(normals, {0, 0, 1}));
        CHECK(norm[2] == doctest::Approx(std::sqrt(2.0) / (std::sqrt(2.0) + 0.01)).epsilon(1e-9));
        auto labels = plane_labels(norm, cfg, 0.05);
        CHECK(labels == std::vector<std::uint8_t>{1, 1, 0});
    }
    SUBCASE("theta one labels everything as plane") {
        LabelConfig all = cfg;
        all.theta = 1.0;
        all.theta_small = 1.0;
        std::vector<Vec3> normals{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
        auto labels = plane_labels(normalize_errors(error_distance(normals, {0, 0, 1})), all, 0.1);
        for (auto l : labels) CHECK(l == 1);
    }
    SUBCASE("small scales use the weaker threshold") {
        CHECK(effective_theta(cfg, 0.05) == 0.5);
        CHECK(effective_theta(cfg, 0.03) == 0.8);
        CHECK(effective_theta(cfg, 0.01) == 0.8);
    }
    SUBCASE("labels are invariant under a rigid rotation of all normals") {
        Rng rng(6);
        auto cloud = gen_shape("dihedral", {.dihedral_angle_deg = 75.0}, 3000, 12);
        KdTree tree(cloud.points);
        auto patch = extract_patch(cloud, tree, 0, 0.1, 128, 9);
        auto base =
            plane_labels(normalize_errors(error_distance(patch.gt_point_normals,
                                                         patch.gt_center_normal)),
                         cfg, patch.radius);
        // rotate every normal by a random rotation built from two Givens turns
        double a = rng.uniform(0, 2 * M_PI), b = rng.uniform(0, 2 * M_PI);
        auto rot = [&](const Vec3& v) {
            Vec3 r1{v[0] * std::cos(a) - v[1] * std::sin(a),
                    v[0] * std::sin(a) + v[1] * std::cos(a), v[2]};
            return Vec3{r1[0], r1[1] * std::cos(b) - r1[2] * std::sin(b),
                        r1[1] * std::sin(b) + r1[2] * std::cos(b)};
        };
        std::vector<Vec3> rotated;
        for (const auto& n : patch.gt_point_normals) rotated.push_back(rot(n));
        auto turned = plane_labels(
            normalize_errors(error_distance(rotated, rot(patch.gt_center_normal))), cfg,
            patch.radius);
        CHECK(base == turned);
    }
}

TEST_CASE("compute_labels on a single-plane patch is all ones for any theta") {
    auto cloud = gen_shape("plane", {}, 1000, 20);
    KdTree tree(cloud.points);
    for (double theta : {0.05, 0.5, 0.99}) {
        LabelConfig cfg;
        cfg.theta = theta;
        cfg.theta_small = theta;
        auto patch = extract_patch(cloud, tree, 5, 0.1, 200, 1);
        compute_labels(patch, cfg);
        REQUIRE(patch.plane_labels.size() == 200);
        for (auto l : patch.plane_labels) CHECK(l == 1);
    }
}
