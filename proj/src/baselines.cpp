#include "pcn/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace pcn {

Sym3Eigen sym3_eigen(const std::array<double, 6>& m) {
    // a is overwritten with the diagonalized matrix, v accumulates rotations
    double a[3][3] = {{m[0], m[1], m[2]}, {m[1], m[3], m[4]}, {m[2], m[4], m[5]}};
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
        if (off == 0.0) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < 3; ++i) {
                    double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (int i = 0; i < 3; ++i) {
                    double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                a[p][q] = a[q][p] = 0.0;
                for (int i = 0; i < 3; ++i) {
                    double vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
    }
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return a[x][x] < a[y][y]; });
    Sym3Eigen out;
    for (int i = 0; i < 3; ++i) {
        out.eigenvalues[i] = std::max(a[idx[i]][idx[i]], 0.0);
        out.eigenvectors[i] = {v[0][idx[i]], v[1][idx[i]], v[2][idx[i]]};
    }
    return out;
}

namespace {

// positive z, then positive y, then positive x
Vec3 fix_sign(const Vec3& n) {
    if (n[2] != 0.0) return n[2] > 0.0 ? n : Vec3{-n[0], -n[1], -n[2]};
    if (n[1] != 0.0) return n[1] > 0.0 ? n : Vec3{-n[0], -n[1], -n[2]};
    return n[0] >= 0.0 ? n : Vec3{-n[0], -n[1], -n[2]};
}

struct Frame {
    Vec3 mean;
    Sym3Eigen eig;
};

bool pca_frame(const std::vector<Vec3>& pts, Frame& frame) {
    std::size_t n = pts.size();
    if (n < 3) return false;
    Vec3 mean{0, 0, 0};
    for (const auto& p : pts)
        for (int a = 0; a < 3; ++a) mean[a] += p[a];
    for (int a = 0; a < 3; ++a) mean[a] /= static_cast<double>(n);
    std::array<double, 6> cov{0, 0, 0, 0, 0, 0};
    for (const auto& p : pts) {
        Vec3 d = sub3(p, mean);
        cov[0] += d[0] * d[0];
        cov[1] += d[0] * d[1];
        cov[2] += d[0] * d[2];
        cov[3] += d[1] * d[1];
        cov[4] += d[1] * d[2];
        cov[5] += d[2] * d[2];
    }
    for (double& c : cov) c /= static_cast<double>(n);
    frame.mean = mean;
    frame.eig = sym3_eigen(cov);
    // rank < 2: the two smallest eigenvalues vanish relative to the largest
    double big = frame.eig.eigenvalues[2];
    if (big <= 0.0 || frame.eig.eigenvalues[1] <= 1e-12 * big) return false;
    return true;
}

// Cholesky solve of (A + damp*I) x = b for a symmetric 6x6 system
bool solve6(double a[6][6], const double b[6], double x[6], double damp) {
    double l[6][6] = {};
    for (int i = 0; i < 6; ++i) a[i][i] += damp;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[i][j];
            for (int k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
            if (i == j) {
                if (sum <= 0.0) return false;
                l[i][i] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    double y[6];
    for (int i = 0; i < 6; ++i) {
        double sum = b[i];
        for (int k = 0; k < i; ++k) sum -= l[i][k] * y[k];
        y[i] = sum / l[i][i];
    }
    for (int i = 5; i >= 0; --i) {
        double sum = y[i];
        for (int k = i + 1; k < 6; ++k) sum -= l[k][i] * x[k];
        x[i] = sum / l[i][i];
    }
    return true;
}

}  // namespace

BaselineResult pca_normal(const std::vector<Vec3>& pts) {
    BaselineResult res;
    Frame frame;
    bool ok = pca_frame(pts, frame);
    res.eigenvalues = frame.eig.eigenvalues;
    if (pts.size() >= 3) res.normal = fix_sign(frame.eig.eigenvectors[0]);
    res.flag = ok ? Condition::ok : Condition::degenerate;
    return res;
}

BaselineResult jet_normal(const std::vector<Vec3>& pts, int order) {
    if (order != 2) throw Error("jet_normal: only order 2 is implemented");
    Frame frame;
    bool frame_ok = pca_frame(pts, frame);
    BaselineResult pca;
    pca.eigenvalues = frame.eig.eigenvalues;
    if (pts.size() >= 3) pca.normal = fix_sign(frame.eig.eigenvectors[0]);
    pca.flag = frame_ok ? Condition::ok : Condition::degenerate;
    if (!frame_ok || pts.size() < 6) {
        pca.flag = Condition::degenerate;
        return pca;
    }
    const Vec3& t1 = frame.eig.eigenvectors[2];
    const Vec3& t2 = frame.eig.eigenvectors[1];
    const Vec3& nz = frame.eig.eigenvectors[0];

    // in-frame coordinates, rescaled to a unit-ish extent so the damping term
    // stays negligible at every patch scale
    double scale = 0.0;
    for (const auto& p : pts) scale = std::max(scale, norm3(sub3(p, frame.mean)));
    if (scale <= 0.0) {
        pca.flag = Condition::degenerate;
        return pca;
    }
    double ata[6][6] = {};
    double atb[6] = {};
    for (const auto& p : pts) {
        Vec3 d = sub3(p, frame.mean);
        double u = dot3(d, t1) / scale;
        double v = dot3(d, t2) / scale;
        double h = dot3(d, nz) / scale;
        double row[6] = {1.0, u, v, u * u, u * v, v * v};
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j <= i; ++j) ata[i][j] += row[i] * row[j];
            atb[i] += row[i] * h;
        }
    }
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) ata[i][j] = ata[j][i];

    double coef[6];
    if (!solve6(ata, atb, coef, 1e-12)) {
        pca.flag = Condition::degenerate;
        return pca;
    }
    // height gradient at the query point (first row) gives the normal
    Vec3 q = sub3(pts[0], frame.mean);
    double u0 = dot3(q, t1) / scale;
    double v0 = dot3(q, t2) / scale;
    double gu = coef[1] + 2.0 * coef[3] * u0 + coef[4] * v0;
    double gv = coef[2] + coef[4] * u0 + 2.0 * coef[5] * v0;
    Vec3 n{-gu * t1[0] - gv * t2[0] + nz[0], -gu * t1[1] - gv * t2[1] + nz[1],
           -gu * t1[2] - gv * t2[2] + nz[2]};
    BaselineResult res;
    res.eigenvalues = frame.eig.eigenvalues;
    res.normal = fix_sign(normalized3(n));
    res.flag = Condition::ok;
    return res;
}

}  // namespace pcn
