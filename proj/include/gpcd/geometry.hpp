#pragma once

#include <vector>

#include "gpcd/kdtree.hpp"
#include "gpcd/point_cloud.hpp"

namespace gpcd {

// Row i lists the k nearest neighbors of query point i, ascending by
// (distance, index), self excluded when the query aliases the cloud.
struct NeighborGraph {
    int k = 0;
    std::vector<int> indices;       // n*k, row-major
    std::vector<double> distances;  // n*k, Euclidean, ascending per row

    int rows() const { return k > 0 ? static_cast<int>(indices.size()) / k : 0; }
    int index(int row, int j) const { return indices[static_cast<size_t>(row) * k + j]; }
    double distance(int row, int j) const { return distances[static_cast<size_t>(row) * k + j]; }
};

// A fixed-size neighborhood of a parent cloud, re-centered on its centroid
// and scaled so the farthest point has norm 1. source_index maps each patch
// point back to the parent.
struct Patch {
    PointCloud cloud;
    int seed_index = 0;
    Vec3 center;
    double scale = 1.0;
};

struct NormalizedCloud {
    PointCloud cloud;
    Vec3 center;
    double scale = 1.0;
};

NeighborGraph knn(const PointCloud& cloud, const PointCloud& query, int k);
NeighborGraph knn(const KdTree& tree, const PointCloud& query, int k, bool exclude_self);

std::vector<int> ball_query(const PointCloud& cloud, const Vec3& seed, double radius);
std::vector<int> ball_query(const KdTree& tree, const Vec3& seed, double radius);

std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int start);

NormalizedCloud normalize_unit_sphere(const PointCloud& cloud);
PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale);

// The patch_size nearest parent points around seed_index (seed included),
// normalized per the Patch contract.
Patch make_patch(const PointCloud& cloud, const KdTree& tree, int seed_index, int patch_size);

// Seeds via farthest-point sampling from index 0, count
// ceil(coverage_factor*n/patch_size); extra patches are appended afterwards
// if any index is left uncovered, so the union always covers the cloud.
std::vector<Patch> extract_patches(const PointCloud& cloud, int patch_size,
                                   double coverage_factor);

// Stitches denoised patches: point i takes its position from the covering
// patch whose seed is nearest to point i in the parent (ties toward the
// lower seed index), denormalized by that patch's (center, scale).
PointCloud merge_patches(const PointCloud& parent, const std::vector<Patch>& patches);

}  // namespace gpcd
