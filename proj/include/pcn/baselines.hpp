#pragma once

#include <array>
#include <vector>

#include "pcn/point_cloud.hpp"

namespace pcn {

enum class Condition { ok, degenerate };

struct BaselineResult {
    Vec3 normal{0.0, 0.0, 1.0};
    std::array<double, 3> eigenvalues{0, 0, 0};  // ascending (PCA only)
    Condition flag = Condition::degenerate;
};

// eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi sweeps;
// eigenvalues ascending, eigenvecs[i] is the unit eigenvector of eigenvalue i
struct Sym3Eigen {
    std::array<double, 3> eigenvalues{0, 0, 0};
    std::array<Vec3, 3> eigenvectors{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
};
Sym3Eigen sym3_eigen(const std::array<double, 6>& m);  // packed xx,xy,xz,yy,yz,zz

// plane fit: normal is the eigenvector of the smallest covariance eigenvalue
BaselineResult pca_normal(const std::vector<Vec3>& pts);

// Order-2 height-function fit over the PCA frame, gradient evaluated at the
// query point; falls back to the PCA normal (flagged degenerate) when the
// normal equations cannot be solved. The first row of pts is the query point
// (extract_patch puts the patch center first).
BaselineResult jet_normal(const std::vector<Vec3>& pts, int order = 2);

}  // namespace pcn
