#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pcn/baselines.hpp"
#include "pcn/evaluate.hpp"
#include "pcn/kdtree.hpp"
#include "pcn/rng.hpp"
#include "pcn/synthetic.hpp"
#include "test_util.hpp"

using namespace pcn;

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
    return unoriented_angle_deg(a, b) * M_PI / 180.0;
}

// points on a unit-sphere cap of the given angular radius around +z
std::vector<Vec3> sphere_cap(double angular_radius_rad, std::size_t n, Rng& rng) {
    std::vector<Vec3> pts;
    double cos_min = std::cos(angular_radius_rad);
    while (pts.size() < n) {
        double z = rng.uniform(cos_min, 1.0);
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        pts.push_back({s * std::cos(phi), s * std::sin(phi), z});
    }
    return pts;
}

Vec3 rotate_xy(const Vec3& v, double a) {
    return {v[0] * std::cos(a) - v[1] * std::sin(a), v[0] * std::sin(a) + v[1] * std::cos(a),
            v[2]};
}

}  // namespace

TEST_CASE("symmetric 3x3 eigen decomposition") {
    Rng rng(31);
    for (int it = 0; it < 200; ++it) {
        // random symmetric PSD matrix A = B^T B
        double b[3][3];
        for (auto& row : b)
            for (auto& v : row) v = rng.uniform(-1, 1);
        std::array<double, 6> m{};
        auto at = [&](int i, int j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += b[k][i] * b[k][j];
            return acc;
        };
        m = {at(0, 0), at(0, 1), at(0, 2), at(1, 1), at(1, 2), at(2, 2)};
        auto eig = sym3_eigen(m);
        CHECK(eig.eigenvalues[0] >= 0.0);
        CHECK(eig.eigenvalues[0] <= eig.eigenvalues[1]);
        CHECK(eig.eigenvalues[1] <= eig.eigenvalues[2]);
        // A v = lambda v for each pair
        double full[3][3] = {{m[0], m[1], m[2]}, {m[1], m[3], m[4]}, {m[2], m[4], m[5]}};
        for (int e = 0; e < 3; ++e) {
            const Vec3& v = eig.eigenvectors[e];
            for (int i = 0; i < 3; ++i) {
                double av = full[i][0] * v[0] + full[i][1] * v[1] + full[i][2] * v[2];
                CHECK(av == doctest::Approx(eig.eigenvalues[e] * v[i]).epsilon(1e-8).scale(1.0));
            }
        }
    }
}

TEST_CASE("pca on an exact plane recovers the axis exactly") {
    Rng rng(5);
    std::vector<Vec3> pts;
    for (int i = 0; i < 100; ++i) pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
    auto res = pca_normal(pts);
    REQUIRE(res.flag == Condition::ok);
    CHECK(res.normal[0] == 0.0);
    CHECK(res.normal[1] == 0.0);
    CHECK(res.normal[2] == 1.0);
}

TEST_CASE("pca on a small sphere cap points along the radius") {
    Rng rng(8);
    auto pts = sphere_cap(10.0 * M_PI / 180.0, 200, rng);
    auto res = pca_normal(pts);
    REQUIRE(res.flag == Condition::ok);
    CHECK(angle_between(res.normal, {0, 0, 1}) < 1.0 * M_PI / 180.0);
}

TEST_CASE("degenerate configurations are flagged") {
    SUBCASE("collinear points") {
        std::vector<Vec3> pts;
        for (int i = 0; i < 30; ++i) pts.push_back({0.1 * i, 0.2 * i, -0.05 * i});
        CHECK(pca_normal(pts).flag == Condition::degenerate);
        CHECK(jet_normal(pts).flag == Condition::degenerate);
    }
    SUBCASE("too few points") {
        std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}};
        CHECK(pca_normal(pts).flag == Condition::degenerate);
        CHECK(jet_normal(pts).flag == Condition::degenerate);
    }
    SUBCASE("coincident points") {
        std::vector<Vec3> pts(20, Vec3{1, 1, 1});
        CHECK(pca_normal(pts).flag == Condition::degenerate);
    }
}

TEST_CASE("jet fit") {
    SUBCASE("matches pca on an exact plane") {
        Rng rng(12);
        std::vector<Vec3> pts;
        for (int i = 0; i < 64; ++i)
            pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
        auto pca = pca_normal(pts);
        auto jet = jet_normal(pts);
        REQUIRE(jet.flag == Condition::ok);
        CHECK(angle_between(pca.normal, jet.normal) < 1e-6);
    }
    SUBCASE("recovers the axis of a symmetric paraboloid at its apex") {
        std::vector<Vec3> pts{{0, 0, 0}};  // query point
        for (int i = -5; i <= 5; ++i)
            for (int j = -5; j <= 5; ++j) {
                if (i == 0 && j == 0) continue;
                double u = 0.05 * i, v = 0.05 * j;
                pts.push_back({u, v, u * u + v * v});
            }
        auto jet = jet_normal(pts);
        REQUIRE(jet.flag == Condition::ok);
        CHECK(angle_between(jet.normal, {0, 0, 1}) < 1e-9);
    }
}

TEST_CASE("estimators are rotation equivariant and scale invariant") {
    Rng rng(77);
    auto pts = sphere_cap(12.0 * M_PI / 180.0, 150, rng);
    auto base_pca = pca_normal(pts);
    auto base_jet = jet_normal(pts);
    SUBCASE("global rotation about z") {
        double a = 1.234;
        std::vector<Vec3> turned;
        for (const auto& p : pts) turned.push_back(rotate_xy(p, a));
        auto pca = pca_normal(turned);
        auto jet = jet_normal(turned);
        CHECK(angle_between(pca.normal, rotate_xy(base_pca.normal, a)) < 1e-6);
        CHECK(angle_between(jet.normal, rotate_xy(base_jet.normal, a)) < 1e-6);
    }
    SUBCASE("uniform scaling") {
        for (double s : {1e-3, 0.1, 10.0, 1e3}) {
            std::vector<Vec3> scaled;
            for (const auto& p : pts) scaled.push_back({s * p[0], s * p[1], s * p[2]});
            auto pca = pca_normal(scaled);
            auto jet = jet_normal(scaled);
            CHECK(angle_between(pca.normal, base_pca.normal) < 1e-9);
            CHECK(angle_between(jet.normal, base_jet.normal) < 1e-9);
        }
    }
}

TEST_CASE("jet beats pca on noiseless sphere neighborhoods") {
    auto cloud = gen_shape("sphere", {}, 4000, 50);
    KdTree tree(cloud.points);
    std::vector<double> pca_angles, jet_angles;
    for (std::size_t i = 0; i < 300; ++i) {
        double r_abs = 0.05 * cloud.bbox_diagonal;
        auto idx = tree.radius_query(cloud.points[i], r_abs);
        std::vector<Vec3> pts{cloud.points[i]};
        for (auto j : idx)
            if (j != i) pts.push_back(cloud.points[j]);
        auto pca = pca_normal(pts);
        auto jet = jet_normal(pts);
        if (pca.flag != Condition::ok || jet.flag != Condition::ok) continue;
        pca_angles.push_back(unoriented_angle_deg(cloud.normals[i], pca.normal));
        jet_angles.push_back(unoriented_angle_deg(cloud.normals[i], jet.normal));
    }
    REQUIRE(pca_angles.size() > 250);
    CHECK(rmse_deg(jet_angles) <= rmse_deg(pca_angles));
}
