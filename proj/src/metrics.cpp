#include "gpcd/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpcd/assignment.hpp"
#include "gpcd/errors.hpp"
#include "gpcd/geometry.hpp"
#include "gpcd/kdtree.hpp"

namespace gpcd {

namespace {

double one_sided_sq(const PointCloud& from, const KdTree& to) {
    std::vector<int> idx;
    std::vector<double> dist;
    double sum = 0.0;
    for (const Vec3& p : from.points) {
        to.knn(p, 1, -1, idx, dist);
        sum += dist[0] * dist[0];
    }
    return sum / from.n();
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
    check_cloud(a);
    check_cloud(b);
    const KdTree ta(a), tb(b);
    return one_sided_sq(a, tb) + one_sided_sq(b, ta);
}

EmdResult emd(const PointCloud& a, const PointCloud& b) {
    check_cloud(a);
    check_cloud(b);
    if (a.n() != b.n()) throw std::invalid_argument("emd: clouds must have equal size");
    const int n = a.n();
    std::vector<double> cost(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<size_t>(i) * n + j] = dist2(a.points[i], b.points[j]);

    EmdResult result;
    result.assignment = solve_assignment(cost, n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += cost[static_cast<size_t>(i) * n + result.assignment[i]];
    result.value = sum / n;
    return result;
}

std::vector<Vec3> emd_gradient(const PointCloud& a, const PointCloud& b,
                               const EmdResult& match) {
    if (static_cast<int>(match.assignment.size()) != a.n())
        throw std::invalid_argument("emd_gradient: assignment size mismatch");
    std::vector<Vec3> grad(a.n());
    const double scale = 2.0 / a.n();
    for (int i = 0; i < a.n(); ++i)
        grad[i] = (a.points[i] - b.points[match.assignment[i]]) * scale;
    return grad;
}

std::vector<Vec3> emd_gradient(const PointCloud& a, const PointCloud& b) {
    return emd_gradient(a, b, emd(a, b));
}

namespace {

// Mean nearest-neighbor distance among the ball members; requires >= 2.
double mean_nn_distance(const std::vector<Vec3>& points, const std::vector<int>& members) {
    double sum = 0.0;
    for (size_t i = 0; i < members.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < members.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, dist2(points[members[i]], points[members[j]]));
        }
        sum += std::sqrt(best);
    }
    return sum / members.size();
}

}  // namespace

double uniformity(const PointCloud& denoised, const PointCloud& ground_truth,
                  const UniformityConfig& cfg) {
    check_cloud(denoised);
    check_cloud(ground_truth);
    if (!(cfg.seed_ratio > 0.0) || cfg.seed_ratio > 1.0)
        throw std::invalid_argument("uniformity: seed_ratio must be in (0,1]");
    for (double p : cfg.area_fractions)
        if (!(p > 0.0) || p >= 1.0)
            throw std::invalid_argument("uniformity: area fractions must be in (0,1)");

    const int seed_count =
        static_cast<int>(std::ceil(cfg.seed_ratio * denoised.n()));
    const std::vector<int> seeds = farthest_point_sample(denoised, seed_count, 0);
    const KdTree dtree(denoised), gtree(ground_truth);

    double total = 0.0;
    for (const double p : cfg.area_fractions) {
        const double radius = std::sqrt(p);
        double sum = 0.0;
        int valid = 0;
        for (const int seed : seeds) {
            const Vec3 seed_pos = denoised.points[seed];
            const std::vector<int> g_ball = gtree.radius_query(seed_pos, radius);
            // d_hat needs two ground-truth points; skip the seed otherwise.
            if (g_ball.size() < 2) continue;
            const double n_hat = static_cast<double>(g_ball.size());
            const double d_hat = mean_nn_distance(ground_truth.points, g_ball);

            const std::vector<int> s_ball = dtree.radius_query(seed_pos, radius);
            const double imbalance =
                (s_ball.size() - n_hat) * (s_ball.size() - n_hat) / n_hat;
            double clutter = 0.0;
            if (s_ball.size() >= 2 && d_hat > 0.0) {
                for (size_t k = 0; k < s_ball.size(); ++k) {
                    double best = std::numeric_limits<double>::infinity();
                    for (size_t l = 0; l < s_ball.size(); ++l) {
                        if (k == l) continue;
                        best = std::min(best,
                                        dist2(denoised.points[s_ball[k]],
                                              denoised.points[s_ball[l]]));
                    }
                    const double d = std::sqrt(best);
                    clutter += (d - d_hat) * (d - d_hat) / d_hat;
                }
                clutter /= s_ball.size();
            }
            sum += imbalance * clutter;
            ++valid;
        }
        if (valid == 0)
            throw invalid_state("uniformity: no seed had a usable ground-truth ball");
        total += sum / valid;
    }
    return total;
}

MetricReport make_report(double cd, double p2m, double emd_value, double uniformity_value) {
    MetricReport r;
    r.cd = cd;
    r.p2m = p2m;
    r.emd = emd_value;
    r.uniformity = uniformity_value;
    r.scaled_cd = cd * 1e4;
    r.scaled_p2m = p2m * 1e4;
    r.scaled_uniformity = uniformity_value * 1e3;
    return r;
}

}  // namespace gpcd
