#pragma once

#include <cstddef>
#include <vector>

#include "pcn/point_cloud.hpp"

namespace pcn {

// Median-split kd-tree over 3D points. Immutable after construction; radius
// queries are exact (<= radius) and safe to run from many threads at once.
class KdTree {
  public:
    explicit KdTree(const std::vector<Vec3>& points);

    // indices of all points with |p - q| <= radius
    std::vector<std::size_t> radius_query(const Vec3& q, double radius) const;
    std::size_t size() const { return points_.size(); }

  private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        std::size_t begin = 0, end = 0;  // leaf range into order_
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end);

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace pcn
