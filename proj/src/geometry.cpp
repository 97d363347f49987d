#include "gpcd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpcd/errors.hpp"

namespace gpcd {

NeighborGraph knn(const KdTree& tree, const PointCloud& query, int k, bool exclude_self) {
    check_cloud(query);
    const int avail = tree.n() - (exclude_self ? 1 : 0);
    if (k < 1 || k > avail) throw std::invalid_argument("knn: k out of range");
    NeighborGraph graph;
    graph.k = k;
    graph.indices.resize(static_cast<size_t>(query.n()) * k);
    graph.distances.resize(static_cast<size_t>(query.n()) * k);
    std::vector<int> idx;
    std::vector<double> dist;
    for (int i = 0; i < query.n(); ++i) {
        tree.knn(query.points[i], k, exclude_self ? i : -1, idx, dist);
        std::copy(idx.begin(), idx.end(), graph.indices.begin() + static_cast<size_t>(i) * k);
        std::copy(dist.begin(), dist.end(), graph.distances.begin() + static_cast<size_t>(i) * k);
    }
    return graph;
}

NeighborGraph knn(const PointCloud& cloud, const PointCloud& query, int k) {
    check_cloud(cloud);
    if (k >= cloud.n()) throw std::invalid_argument("knn: k must be < cloud size");
    const KdTree tree(cloud);
    return knn(tree, query, k, &cloud == &query);
}

std::vector<int> ball_query(const KdTree& tree, const Vec3& seed, double radius) {
    if (!is_finite(seed) || !std::isfinite(radius) || radius < 0.0)
        throw std::invalid_argument("ball_query: seed and radius must be finite, radius >= 0");
    return tree.radius_query(seed, radius);
}

std::vector<int> ball_query(const PointCloud& cloud, const Vec3& seed, double radius) {
    check_cloud(cloud);
    const KdTree tree(cloud);
    return ball_query(tree, seed, radius);
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int start) {
    check_cloud(cloud);
    const int n = cloud.n();
    if (m < 1 || m > n) throw std::invalid_argument("farthest_point_sample: m out of range");
    if (start < 0 || start >= n) throw std::invalid_argument("farthest_point_sample: bad start");

    std::vector<int> selected;
    selected.reserve(m);
    selected.push_back(start);
    std::vector<char> taken(n, 0);
    taken[start] = 1;
    std::vector<double> min_d2(n);
    for (int i = 0; i < n; ++i) min_d2[i] = dist2(cloud.points[i], cloud.points[start]);

    while (static_cast<int>(selected.size()) < m) {
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        taken[best] = 1;
        selected.push_back(best);
        for (int i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], dist2(cloud.points[i], cloud.points[best]));
    }
    return selected;
}

NormalizedCloud normalize_unit_sphere(const PointCloud& cloud) {
    check_cloud(cloud);
    NormalizedCloud out;
    out.center = centroid(cloud);
    double max_norm = 0.0;
    for (const Vec3& p : cloud.points) max_norm = std::max(max_norm, norm(p - out.center));
    out.scale = max_norm > 0.0 ? max_norm : 1.0;
    out.cloud.points.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) out.cloud.points.push_back((p - out.center) / out.scale);
    out.cloud.source_index = cloud.source_index;
    return out;
}

PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) out.points.push_back(p * scale + center);
    out.source_index = cloud.source_index;
    return out;
}

Patch make_patch(const PointCloud& cloud, const KdTree& tree, int seed_index, int patch_size) {
    if (patch_size < 1 || patch_size > cloud.n())
        throw std::invalid_argument("make_patch: patch_size out of range");
    if (seed_index < 0 || seed_index >= cloud.n())
        throw std::invalid_argument("make_patch: bad seed index");

    std::vector<int> idx;
    std::vector<double> dist;
    tree.knn(cloud.points[seed_index], patch_size, -1, idx, dist);

    Patch patch;
    patch.seed_index = seed_index;
    patch.cloud.points.reserve(patch_size);
    patch.cloud.source_index = idx;
    for (int i : idx) patch.cloud.points.push_back(cloud.points[i]);

    patch.center = centroid(patch.cloud);
    double max_norm = 0.0;
    for (const Vec3& p : patch.cloud.points)
        max_norm = std::max(max_norm, norm(p - patch.center));
    patch.scale = max_norm > 0.0 ? max_norm : 1.0;
    for (Vec3& p : patch.cloud.points) p = (p - patch.center) / patch.scale;
    return patch;
}

std::vector<Patch> extract_patches(const PointCloud& cloud, int patch_size,
                                   double coverage_factor) {
    check_cloud(cloud);
    const int n = cloud.n();
    if (patch_size < 1 || patch_size > n)
        throw std::invalid_argument("extract_patches: patch_size out of range");
    if (!(coverage_factor > 0.0) || !std::isfinite(coverage_factor))
        throw std::invalid_argument("extract_patches: coverage_factor must be positive");

    // n - patch_size + 1 caps the seed count: beyond it patches can only
    // repeat, and at patch_size == n a single patch already covers the cloud.
    int seed_count = static_cast<int>(std::ceil(coverage_factor * n / patch_size));
    seed_count = std::clamp(seed_count, 1, n - patch_size + 1);

    const KdTree tree(cloud);
    const std::vector<int> seeds = farthest_point_sample(cloud, seed_count, 0);

    std::vector<Patch> patches;
    patches.reserve(seeds.size());
    std::vector<char> covered(n, 0);
    for (int seed : seeds) {
        patches.push_back(make_patch(cloud, tree, seed, patch_size));
        for (int i : patches.back().cloud.source_index) covered[i] = 1;
    }
    for (int i = 0; i < n; ++i) {
        if (covered[i]) continue;
        patches.push_back(make_patch(cloud, tree, i, patch_size));
        for (int j : patches.back().cloud.source_index) covered[j] = 1;
    }
    return patches;
}

PointCloud merge_patches(const PointCloud& parent, const std::vector<Patch>& patches) {
    check_cloud(parent);
    const int n = parent.n();
    std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
    std::vector<int> best_seed(n, std::numeric_limits<int>::max());
    PointCloud out;
    out.points.resize(n);
    std::vector<char> covered(n, 0);

    for (const Patch& patch : patches) {
        if (!patch.cloud.has_source_index())
            throw std::invalid_argument("merge_patches: patch lacks source_index");
        if (patch.seed_index < 0 || patch.seed_index >= n)
            throw std::invalid_argument("merge_patches: seed index out of range");
        const Vec3 seed_pos = parent.points[patch.seed_index];
        for (size_t j = 0; j < patch.cloud.points.size(); ++j) {
            const int i = patch.cloud.source_index[j];
            if (i < 0 || i >= n)
                throw std::invalid_argument("merge_patches: source_index out of range");
            const double d2 = dist2(parent.points[i], seed_pos);
            if (d2 < best_d2[i] || (d2 == best_d2[i] && patch.seed_index < best_seed[i])) {
                best_d2[i] = d2;
                best_seed[i] = patch.seed_index;
                out.points[i] = patch.cloud.points[j] * patch.scale + patch.center;
                covered[i] = 1;
            }
        }
    }
    for (int i = 0; i < n; ++i)
        if (!covered[i]) throw invalid_state("merge_patches: point " + std::to_string(i) +
                                             " not covered by any patch");
    return out;
}

}  // namespace gpcd
