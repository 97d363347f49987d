#pragma once

#include <cstdint>
#include <string>

#include "gpcd/point_cloud.hpp"
#include "gpcd/rng.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

enum class NoiseKind {
    isotropic_gaussian,
    laplace,
    discrete,
    anisotropic_gaussian,
    unidirectional_gaussian,
    uniform_ball,
};

// scale is a fraction of the (unit) bounding-sphere radius; the caller is
// expected to pass clouds normalized to the unit sphere.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::isotropic_gaussian;
    double scale = 0.01;
    uint64_t seed = 0;
};

NoiseKind parse_noise_kind(const std::string& name);
std::string noise_kind_name(NoiseKind kind);

// One additive offset from the density selected by kind. The anisotropic
// covariance is s^2 * [[1,-1/2,-1/4],[-1/2,1,-1/4],[-1/4,-1/4,1]]; the
// unidirectional kind perturbs x only; uniform_ball is uniform over |v|<=s.
Vec3 sample_noise_offset(NoiseKind kind, double scale, Rng& rng);

// Per-point i.i.d. corruption, deterministic given spec.seed.
PointCloud apply_noise(const PointCloud& clean, const NoiseSpec& spec);

}  // namespace gpcd
