#pragma once

#include <vector>

#include "gpcd/point_cloud.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

// Symmetric Chamfer distance: mean squared nearest-neighbor distance from a
// to b plus the same from b to a.
double chamfer(const PointCloud& a, const PointCloud& b);

struct EmdResult {
    double value = 0.0;           // mean squared matched distance
    std::vector<int> assignment;  // a[i] is matched to b[assignment[i]]
};

// Exact Earth Mover's Distance between equal-size clouds: the bijection
// minimizing mean squared matched distance, found by exact assignment.
EmdResult emd(const PointCloud& a, const PointCloud& b);

// d EMD / d a_i = 2 (a_i - b_phi(i)) / n with the optimal matching phi held
// fixed; a subgradient wherever the matching is not unique. The second form
// reuses an already-solved matching.
std::vector<Vec3> emd_gradient(const PointCloud& a, const PointCloud& b);
std::vector<Vec3> emd_gradient(const PointCloud& a, const PointCloud& b,
                               const EmdResult& match);

struct UniformityConfig {
    double seed_ratio = 0.05;
    std::vector<double> area_fractions = {0.004, 0.006, 0.008, 0.010};
};

// Ball-population uniformity against a ground-truth cloud: for each FPS seed
// and each area fraction p, compares the denoised ball population and
// nearest-neighbor spacing at radius sqrt(p) with the ground truth's, as
// (|S|-n_hat)^2/n_hat * mean((d_k-d_hat)^2/d_hat); seed means are summed
// over the area fractions. Both clouds must be unit-sphere normalized.
double uniformity(const PointCloud& denoised, const PointCloud& ground_truth,
                  const UniformityConfig& cfg = {});

struct MetricReport {
    double cd = 0.0;
    double p2m = 0.0;
    double emd = 0.0;
    double uniformity = 0.0;
    double scaled_cd = 0.0;          // cd * 1e4
    double scaled_p2m = 0.0;         // p2m * 1e4
    double scaled_uniformity = 0.0;  // uniformity * 1e3
};

MetricReport make_report(double cd, double p2m, double emd_value, double uniformity_value);

}  // namespace gpcd
