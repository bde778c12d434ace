#include "pcn/point_cloud.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace pcn {

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 normalized3(const Vec3& v) {
    double n = norm3(v);
    if (n <= 0.0) throw Error("normalized3: zero vector");
    return {v[0] / n, v[1] / n, v[2] / n};
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

void PointCloud::update_bbox() {
    if (points.empty()) {
        bbox_diagonal = 0.0;
        return;
    }
    Vec3 lo = points[0], hi = points[0];
    for (const auto& p : points)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    bbox_diagonal = norm3(sub3(hi, lo));
}

namespace {

// rows of whitespace-separated doubles, fixed column count
std::vector<std::vector<double>> parse_numeric_rows(const std::string& path,
                                                    std::size_t columns) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open file");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;  // blank line
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw Error(path + ":" + std::to_string(lineno) + ": non-numeric token '" + tok +
                            "'");
            row.push_back(v);
        }
        if (row.size() != columns)
            throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(columns) + " values, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(path + ": empty file");
    return rows;
}

void write_rows(const std::string& path, const std::vector<Vec3>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open file for writing");
    char buf[80];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", r[0], r[1], r[2]);
        out << buf;
    }
    if (!out) throw Error(path + ": write failed");
}

}  // namespace

PointCloud load_xyz(const std::string& path) {
    PointCloud cloud;
    for (const auto& row : parse_numeric_rows(path, 3))
        cloud.points.push_back({row[0], row[1], row[2]});
    auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    cloud.name = dot == std::string::npos ? base : base.substr(0, dot);
    cloud.update_bbox();
    return cloud;
}

void load_normals(const std::string& path, PointCloud& cloud) {
    auto rows = parse_numeric_rows(path, 3);
    if (rows.size() != cloud.size())
        throw Error(path + ": " + std::to_string(rows.size()) + " normals for " +
                    std::to_string(cloud.size()) + " points");
    cloud.normals.clear();
    cloud.normals.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Vec3 n{rows[i][0], rows[i][1], rows[i][2]};
        double len = norm3(n);
        if (len <= 0.0) throw Error(path + ":" + std::to_string(i + 1) + ": zero-length normal");
        cloud.normals.push_back({n[0] / len, n[1] / len, n[2] / len});
    }
}

void load_pidx(const std::string& path, PointCloud& cloud) {
    auto rows = parse_numeric_rows(path, 1);
    cloud.eval_indices.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double v = rows[i][0];
        if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(cloud.size()))
            throw Error(path + ":" + std::to_string(i + 1) + ": index " + std::to_string(v) +
                        " out of range for " + std::to_string(cloud.size()) + " points");
        cloud.eval_indices.push_back(static_cast<std::size_t>(v));
    }
}

std::vector<std::string> load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(path + ": cannot open file");
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t a = line.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r\n");
        names.push_back(line.substr(a, b - a + 1));
    }
    if (names.empty()) throw Error(path + ": empty split file");
    return names;
}

void save_xyz(const PointCloud& cloud, const std::string& path) { write_rows(path, cloud.points); }

void save_normals(const PointCloud& cloud, const std::string& path) {
    if (!cloud.has_normals()) throw Error(path + ": cloud has no normals to save");
    write_rows(path, cloud.normals);
}

void save_pidx(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open file for writing");
    for (std::size_t i : cloud.eval_indices) out << i << "\n";
    if (!out) throw Error(path + ": write failed");
}

}  // namespace pcn
