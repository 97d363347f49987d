#pragma once

#include <vector>

#include "gpcd/mesh.hpp"
#include "gpcd/point_cloud.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

// Exact squared distance from a point to a triangle (face, edge, and vertex
// regions all handled).
double point_triangle_sq(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Axis-aligned BVH over mesh triangles for closest-triangle queries. Queries
// are read-only and safe to issue concurrently.
class TriangleBvh {
public:
    explicit TriangleBvh(const Mesh& mesh);

    // Squared distance from p to the nearest triangle.
    double closest_sq(const Vec3& p) const;

private:
    struct Node {
        Vec3 box_min, box_max;
        int left = -1, right = -1;
        int begin = 0, end = 0;
    };

    int build(int begin, int end);

    std::vector<Vec3> va_, vb_, vc_;  // triangle vertices, indexed by order_
    std::vector<Vec3> centroid_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Mean over the cloud of squared distance to the nearest mesh triangle.
double point_to_mesh(const PointCloud& cloud, const Mesh& mesh);
double point_to_mesh(const PointCloud& cloud, const TriangleBvh& bvh);

}  // namespace gpcd
