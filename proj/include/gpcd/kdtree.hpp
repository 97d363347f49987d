#pragma once

#include <vector>

#include "gpcd/point_cloud.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

// Exact nearest-neighbor index. Results match an O(n^2) scan bit-for-bit:
// candidates are ordered by (squared distance, index), and a subtree is
// pruned only when its bounding box is strictly farther than the current
// k-th candidate, so boundary ties are always visited.
class KdTree {
public:
    explicit KdTree(std::vector<Vec3> points);
    explicit KdTree(const PointCloud& cloud) : KdTree(cloud.points) {}

    int n() const { return static_cast<int>(points_.size()); }
    const std::vector<Vec3>& points() const { return points_; }

    // k nearest to query, ascending by (distance, index). exclude_index is
    // skipped entirely (-1 for none). Requires k <= n minus excluded.
    void knn(const Vec3& query, int k, int exclude_index, std::vector<int>& out_index,
             std::vector<double>& out_dist) const;

    // Indices with distance <= radius, ascending by index.
    std::vector<int> radius_query(const Vec3& query, double radius) const;

private:
    struct Node {
        Vec3 box_min, box_max;
        int left = -1, right = -1;   // children, or -1 for leaves
        int begin = 0, end = 0;      // leaf range into order_
    };

    int build(int begin, int end);
    double box_dist2(const Node& node, const Vec3& q) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace gpcd
