#include "pcn/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace pcn {

namespace {
constexpr std::size_t kLeafSize = 16;
}

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
    if (points_.empty()) throw Error("KdTree: empty cloud");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size() - 1);
    }
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                         return points_[a][axis] < points_[b][axis];
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    nodes_.push_back(node);
    int id = static_cast<int>(nodes_.size() - 1);
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<std::size_t> KdTree::radius_query(const Vec3& q, double radius) const {
    if (radius < 0.0) throw Error("radius_query: negative radius");
    std::vector<std::size_t> result;
    double r2 = radius * radius;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
        const Node& node = nodes_[stack.back()];
        stack.pop_back();
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                std::size_t idx = order_[i];
                Vec3 d = sub3(points_[idx], q);
                if (dot3(d, d) <= r2) result.push_back(idx);
            }
            continue;
        }
        double delta = q[node.axis] - node.split;
        // the split point itself lives in the right child
        if (delta <= radius) stack.push_back(node.left);
        if (-delta <= radius) stack.push_back(node.right);
    }
    return result;
}

}  // namespace pcn
