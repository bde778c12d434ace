#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pcn/baselines.hpp"
#include "pcn/kdtree.hpp"
#include "pcn/model.hpp"
#include "pcn/point_cloud.hpp"

namespace pcn {

// arccos(|n . n_hat|) in degrees, range [0, 90]
double unoriented_angle_deg(const Vec3& n, const Vec3& n_hat);
double rmse_deg(const std::vector<double>& angles);

struct PointEstimate {
    Vec3 normal{0, 0, 1};
    int selected_scale = -1;
    bool ok = false;
};

class NormalEstimator {
  public:
    virtual ~NormalEstimator() = default;
    virtual std::string name() const = 0;
    virtual std::size_t scale_count() const { return 0; }  // > 0 for multi-scale
    virtual std::vector<PointEstimate> estimate(const PointCloud& cloud, const KdTree& tree,
                                                const std::vector<std::size_t>& idx) const = 0;
};

class PcaEstimator : public NormalEstimator {
  public:
    PcaEstimator(double radius_frac, int workers = 1)
        : radius_(radius_frac), workers_(workers) {}
    std::string name() const override { return "pca"; }
    std::vector<PointEstimate> estimate(const PointCloud&, const KdTree&,
                                        const std::vector<std::size_t>&) const override;

  private:
    double radius_;
    int workers_;
};

class JetEstimator : public NormalEstimator {
  public:
    JetEstimator(double radius_frac, int workers = 1)
        : radius_(radius_frac), workers_(workers) {}
    std::string name() const override { return "jet"; }
    std::vector<PointEstimate> estimate(const PointCloud&, const KdTree&,
                                        const std::vector<std::size_t>&) const override;

  private:
    double radius_;
    int workers_;
};

class SingleModelEstimator : public NormalEstimator {
  public:
    SingleModelEstimator(const SingleScaleModel& model, double radius_frac,
                         std::uint64_t seed = 0, std::size_t batch = 128)
        : model_(model), radius_(radius_frac), seed_(seed), batch_(batch) {}
    std::string name() const override { return "single"; }
    std::vector<PointEstimate> estimate(const PointCloud&, const KdTree&,
                                        const std::vector<std::size_t>&) const override;

  private:
    const SingleScaleModel& model_;
    double radius_;
    std::uint64_t seed_;
    std::size_t batch_;
};

class MultiModelEstimator : public NormalEstimator {
  public:
    MultiModelEstimator(const MultiScaleModel& model, std::uint64_t seed = 0,
                        std::size_t batch = 128)
        : model_(model), seed_(seed), batch_(batch) {}
    std::string name() const override { return "multi"; }
    std::size_t scale_count() const override { return model_.scales(); }
    std::vector<PointEstimate> estimate(const PointCloud&, const KdTree&,
                                        const std::vector<std::size_t>&) const override;

  private:
    const MultiScaleModel& model_;
    std::uint64_t seed_;
    std::size_t batch_;
};

struct ShapeEval {
    std::string shape;
    double rmse = 0.0;
    std::size_t evaluated = 0;  // scored points (degenerate estimates excluded)
    std::size_t excluded = 0;
    std::vector<std::size_t> point_indices;  // scored points, cloud indices
    std::vector<double> angles;              // parallel to point_indices, degrees
    std::vector<std::size_t> scale_histogram;  // per-scale selection counts
};

// uses cloud.eval_indices when present, otherwise every point
ShapeEval evaluate_shape(const PointCloud& cloud, const NormalEstimator& estimator);

struct EvalReport {
    struct Entry {
        std::string category;  // may be empty
        ShapeEval eval;
    };
    std::vector<Entry> entries;

    void add(const std::string& category, ShapeEval eval);
    std::vector<std::string> categories() const;  // first-appearance order
    double category_rmse(const std::string& category) const;  // mean over member shapes
    // mean over categories when categorized, else mean over shapes
    double overall_average() const;
    std::vector<std::size_t> category_scale_histogram(const std::string& category) const;

    std::string to_text() const;
    void write_csv(const std::string& path) const;
};

}  // namespace pcn
