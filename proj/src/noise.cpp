#include "gpcd/noise.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace gpcd {

NoiseKind parse_noise_kind(const std::string& name) {
    if (name == "isotropic_gaussian" || name == "gaussian") return NoiseKind::isotropic_gaussian;
    if (name == "laplace") return NoiseKind::laplace;
    if (name == "discrete") return NoiseKind::discrete;
    if (name == "anisotropic_gaussian") return NoiseKind::anisotropic_gaussian;
    if (name == "unidirectional_gaussian") return NoiseKind::unidirectional_gaussian;
    if (name == "uniform_ball" || name == "uniform") return NoiseKind::uniform_ball;
    throw std::invalid_argument("unknown noise kind '" + name +
                                "' (valid: isotropic_gaussian, laplace, discrete, "
                                "anisotropic_gaussian, unidirectional_gaussian, uniform_ball)");
}

std::string noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::isotropic_gaussian: return "isotropic_gaussian";
        case NoiseKind::laplace: return "laplace";
        case NoiseKind::discrete: return "discrete";
        case NoiseKind::anisotropic_gaussian: return "anisotropic_gaussian";
        case NoiseKind::unidirectional_gaussian: return "unidirectional_gaussian";
        case NoiseKind::uniform_ball: return "uniform_ball";
    }
    throw std::invalid_argument("unknown noise kind");
}

namespace {

double sample_laplace(double b, Rng& rng) {
    // Inverse CDF; u is kept away from the endpoints so the log stays finite.
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    return u < 0.5 ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
}

// Cholesky factor of the fixed anisotropic covariance shape (unit s).
struct AnisoChol {
    double l11, l21, l31, l22, l32, l33;
    AnisoChol() {
        const double m[3][3] = {{1.0, -0.5, -0.25}, {-0.5, 1.0, -0.25}, {-0.25, -0.25, 1.0}};
        l11 = std::sqrt(m[0][0]);
        l21 = m[1][0] / l11;
        l31 = m[2][0] / l11;
        l22 = std::sqrt(m[1][1] - l21 * l21);
        l32 = (m[2][1] - l31 * l21) / l22;
        l33 = std::sqrt(m[2][2] - l31 * l31 - l32 * l32);
    }
};

}  // namespace

Vec3 sample_noise_offset(NoiseKind kind, double scale, Rng& rng) {
    switch (kind) {
        case NoiseKind::isotropic_gaussian:
            return rng.normal3() * scale;
        case NoiseKind::laplace:
            return {sample_laplace(scale, rng), sample_laplace(scale, rng),
                    sample_laplace(scale, rng)};
        case NoiseKind::discrete: {
            // 0.1 on each of the six +-s axis offsets, 0.4 on the origin.
            static const std::array<Vec3, 6> axes = {{{1, 0, 0},
                                                      {-1, 0, 0},
                                                      {0, 1, 0},
                                                      {0, -1, 0},
                                                      {0, 0, 1},
                                                      {0, 0, -1}}};
            const double u = rng.uniform();
            const int cell = static_cast<int>(u * 10.0);
            return cell < 6 ? axes[cell] * scale : Vec3{};
        }
        case NoiseKind::anisotropic_gaussian: {
            static const AnisoChol L;
            const Vec3 z = rng.normal3();
            return Vec3{L.l11 * z.x, L.l21 * z.x + L.l22 * z.y,
                        L.l31 * z.x + L.l32 * z.y + L.l33 * z.z} *
                   scale;
        }
        case NoiseKind::unidirectional_gaussian:
            return {scale * rng.normal(), 0.0, 0.0};
        case NoiseKind::uniform_ball:
            return rng.direction() * (scale * std::cbrt(rng.uniform()));
    }
    throw std::invalid_argument("unknown noise kind");
}

PointCloud apply_noise(const PointCloud& clean, const NoiseSpec& spec) {
    check_cloud(clean);
    if (!(spec.scale > 0.0) || !std::isfinite(spec.scale))
        throw std::invalid_argument("noise scale must be positive");
    Rng rng(spec.seed);
    PointCloud noisy;
    noisy.points.reserve(clean.points.size());
    for (const Vec3& p : clean.points) {
        const Vec3 offset = sample_noise_offset(spec.kind, spec.scale, rng);
        if (spec.kind == NoiseKind::unidirectional_gaussian)
            noisy.points.push_back({p.x + offset.x, p.y, p.z});
        else
            noisy.points.push_back(p + offset);
    }
    return noisy;
}

}  // namespace gpcd
