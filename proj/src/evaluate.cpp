#include "pcn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "pcn/patch.hpp"
#include "pcn/rng.hpp"

namespace pcn {

double unoriented_angle_deg(const Vec3& n, const Vec3& n_hat) {
    Vec3 a = normalized3(n);
    Vec3 b = normalized3(n_hat);
    double d = std::fabs(dot3(a, b));
    d = std::min(d, 1.0);
    return std::acos(d) * 180.0 / M_PI;
}

double rmse_deg(const std::vector<double>& angles) {
    if (angles.empty()) throw Error("rmse_deg: no angles");
    double acc = 0.0;
    for (double a : angles) acc += a * a;
    return std::sqrt(acc / static_cast<double>(angles.size()));
}

namespace {

// chunked over threads; each slot is written exactly once so the result does
// not depend on the worker count
template <typename Fn>
std::vector<PointEstimate> parallel_estimate(const std::vector<std::size_t>& idx, int workers,
                                             Fn fn) {
    std::vector<PointEstimate> out(idx.size());
    int t = std::max(1, workers);
    if (t == 1 || idx.size() < 64) {
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = fn(idx[i]);
        return out;
    }
    std::vector<std::thread> threads;
    std::size_t chunk = (idx.size() + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(idx.size(), begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&, begin, end] {
            for (std::size_t i = begin; i < end; ++i) out[i] = fn(idx[i]);
        });
    }
    for (auto& th : threads) th.join();
    return out;
}

// query point first, remaining neighbors in index order
std::vector<Vec3> gather_neighborhood(const PointCloud& cloud, const KdTree& tree,
                                      std::size_t point, double radius_frac) {
    double r_abs = radius_frac * cloud.bbox_diagonal;
    auto idx = tree.radius_query(cloud.points[point], r_abs);
    std::sort(idx.begin(), idx.end());
    std::vector<Vec3> pts;
    pts.reserve(idx.size());
    pts.push_back(cloud.points[point]);
    for (std::size_t i : idx)
        if (i != point) pts.push_back(cloud.points[i]);
    return pts;
}

PointEstimate from_baseline(const BaselineResult& r) {
    PointEstimate e;
    e.normal = r.normal;
    e.ok = r.flag == Condition::ok;
    return e;
}

}  // namespace

std::vector<PointEstimate> PcaEstimator::estimate(const PointCloud& cloud, const KdTree& tree,
                                                  const std::vector<std::size_t>& idx) const {
    return parallel_estimate(idx, workers_, [&](std::size_t point) {
        return from_baseline(pca_normal(gather_neighborhood(cloud, tree, point, radius_)));
    });
}

std::vector<PointEstimate> JetEstimator::estimate(const PointCloud& cloud, const KdTree& tree,
                                                  const std::vector<std::size_t>& idx) const {
    return parallel_estimate(idx, workers_, [&](std::size_t point) {
        return from_baseline(jet_normal(gather_neighborhood(cloud, tree, point, radius_)));
    });
}

std::vector<PointEstimate> SingleModelEstimator::estimate(
    const PointCloud& cloud, const KdTree& tree, const std::vector<std::size_t>& idx) const {
    std::vector<PointEstimate> out(idx.size());
    for (std::size_t start = 0; start < idx.size(); start += batch_) {
        std::size_t end = std::min(idx.size(), start + batch_);
        std::vector<Patch> patches;
        patches.reserve(end - start);
        for (std::size_t i = start; i < end; ++i)
            patches.push_back(extract_patch(cloud, tree, idx[i], radius_, model_.cfg.k,
                                            Rng::derive(seed_, idx[i])));
        std::vector<const Patch*> ptrs;
        for (const auto& p : patches) ptrs.push_back(&p);
        auto preds = predict_batch(model_, ptrs);
        for (std::size_t i = start; i < end; ++i) {
            out[i].normal = preds[i - start].normal;
            out[i].ok = true;
        }
    }
    return out;
}

std::vector<PointEstimate> MultiModelEstimator::estimate(
    const PointCloud& cloud, const KdTree& tree, const std::vector<std::size_t>& idx) const {
    std::vector<PointEstimate> out(idx.size());
    std::size_t s_count = model_.scales();
    for (std::size_t start = 0; start < idx.size(); start += batch_) {
        std::size_t end = std::min(idx.size(), start + batch_);
        std::vector<std::vector<Patch>> patches(s_count);
        for (std::size_t s = 0; s < s_count; ++s) {
            patches[s].reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                patches[s].push_back(extract_patch(cloud, tree, idx[i], model_.radii[s],
                                                   model_.subnets[s].cfg.k,
                                                   Rng::derive(seed_, idx[i] * s_count + s)));
        }
        std::vector<std::vector<const Patch*>> ptrs(s_count);
        for (std::size_t s = 0; s < s_count; ++s)
            for (const auto& p : patches[s]) ptrs[s].push_back(&p);
        auto preds = predict_multi_batch(model_, ptrs);
        for (std::size_t i = start; i < end; ++i) {
            out[i].normal = preds[i - start].normal;
            out[i].selected_scale = static_cast<int>(preds[i - start].selected_scale);
            out[i].ok = true;
        }
    }
    return out;
}

ShapeEval evaluate_shape(const PointCloud& cloud, const NormalEstimator& estimator) {
    if (!cloud.has_normals()) throw Error("evaluate_shape: cloud has no ground-truth normals");
    std::vector<std::size_t> idx = cloud.eval_indices;
    if (idx.empty()) {
        idx.resize(cloud.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    KdTree tree(cloud.points);
    auto estimates = estimator.estimate(cloud, tree, idx);

    ShapeEval ev;
    ev.shape = cloud.name;
    if (estimator.scale_count() > 0) ev.scale_histogram.assign(estimator.scale_count(), 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (!estimates[i].ok) {
            ++ev.excluded;
            continue;
        }
        ev.point_indices.push_back(idx[i]);
        ev.angles.push_back(unoriented_angle_deg(cloud.normals[idx[i]], estimates[i].normal));
        if (estimates[i].selected_scale >= 0 && !ev.scale_histogram.empty())
            ++ev.scale_histogram[estimates[i].selected_scale];
    }
    ev.evaluated = ev.angles.size();
    if (ev.evaluated == 0) throw Error("evaluate_shape: every estimate was degenerate");
    ev.rmse = rmse_deg(ev.angles);
    return ev;
}

void EvalReport::add(const std::string& category, ShapeEval eval) {
    entries.push_back({category, std::move(eval)});
}

std::vector<std::string> EvalReport::categories() const {
    std::vector<std::string> order;
    for (const auto& e : entries) {
        if (e.category.empty()) continue;
        if (std::find(order.begin(), order.end(), e.category) == order.end())
            order.push_back(e.category);
    }
    return order;
}

double EvalReport::category_rmse(const std::string& category) const {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries)
        if (e.category == category) {
            acc += e.eval.rmse;
            ++n;
        }
    if (n == 0) throw Error("EvalReport: unknown category " + category);
    return acc / static_cast<double>(n);
}

double EvalReport::overall_average() const {
    if (entries.empty()) throw Error("EvalReport: empty report");
    auto cats = categories();
    if (cats.empty()) {
        double acc = 0.0;
        for (const auto& e : entries) acc += e.eval.rmse;
        return acc / static_cast<double>(entries.size());
    }
    double acc = 0.0;
    for (const auto& c : cats) acc += category_rmse(c);
    return acc / static_cast<double>(cats.size());
}

std::vector<std::size_t> EvalReport::category_scale_histogram(const std::string& category) const {
    std::vector<std::size_t> hist;
    for (const auto& e : entries) {
        if (e.category != category) continue;
        if (hist.size() < e.eval.scale_histogram.size())
            hist.resize(e.eval.scale_histogram.size(), 0);
        for (std::size_t s = 0; s < e.eval.scale_histogram.size(); ++s)
            hist[s] += e.eval.scale_histogram[s];
    }
    return hist;
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    char buf[160];
    out << "shape                              category         RMSE(deg)  points  excluded\n";
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%-34s %-16s %9.4f %7zu %9zu\n", e.eval.shape.c_str(),
                      e.category.empty() ? "-" : e.category.c_str(), e.eval.rmse,
                      e.eval.evaluated, e.eval.excluded);
        out << buf;
    }
    auto cats = categories();
    if (!cats.empty()) {
        out << "\ncategory              mean RMSE(deg)\n";
        for (const auto& c : cats) {
            std::snprintf(buf, sizeof buf, "%-20s %14.4f\n", c.c_str(), category_rmse(c));
            out << buf;
            auto hist = category_scale_histogram(c);
            if (!hist.empty()) {
                out << "  scale selection:";
                for (std::size_t s = 0; s < hist.size(); ++s)
                    out << " s" << s << "=" << hist[s];
                out << "\n";
            }
        }
    }
    std::snprintf(buf, sizeof buf, "\naverage %.4f\n", overall_average());
    out << buf;
    return out.str();
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open file for writing");
    std::size_t max_scales = 0;
    for (const auto& e : entries)
        max_scales = std::max(max_scales, e.eval.scale_histogram.size());
    out << "shape,category,rmse_deg,evaluated,excluded";
    for (std::size_t s = 0; s < max_scales; ++s) out << ",scale" << s;
    out << "\n";
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%.10g", e.eval.rmse);
        out << e.eval.shape << "," << e.category << "," << buf << "," << e.eval.evaluated << ","
            << e.eval.excluded;
        for (std::size_t s = 0; s < max_scales; ++s)
            out << "," << (s < e.eval.scale_histogram.size() ? e.eval.scale_histogram[s] : 0);
        out << "\n";
    }
    if (!out) throw Error(path + ": write failed");
}

}  // namespace pcn
