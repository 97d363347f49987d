#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>

#include "gpcd/noise.hpp"
#include "gpcd/rng.hpp"
#include "support/oracles.hpp"

using namespace gpcd;
using namespace gpcd::testing;

namespace {

struct Moments {
    Vec3 mean;
    double cov[3][3] = {};
};

Moments sample_moments(NoiseKind kind, double s, int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> draws(n);
    Vec3 sum;
    for (int i = 0; i < n; ++i) {
        draws[i] = sample_noise_offset(kind, s, rng);
        sum += draws[i];
    }
    Moments m;
    m.mean = sum / n;
    for (const Vec3& d : draws) {
        const Vec3 c = d - m.mean;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) m.cov[a][b] += c[a] * c[b];
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m.cov[a][b] /= n - 1;
    return m;
}

}  // namespace

TEST_CASE("isotropic gaussian: per-coordinate std within the stated band") {
    const double s = 0.02;
    const Moments m = sample_moments(NoiseKind::isotropic_gaussian, s, 1000000, 51);
    for (int a = 0; a < 3; ++a) {
        const double stddev = std::sqrt(m.cov[a][a]);
        CHECK(stddev >= 0.0196);
        CHECK(stddev <= 0.0204);
    }
}

TEST_CASE("laplace: per-coordinate variance is 2 s^2 within 3 sigma") {
    const double s = 0.02;
    const int n = 1000000;
    const Moments m = sample_moments(NoiseKind::laplace, s, n, 52);
    // Var of the Laplace variance estimate is (mu4 - sigma^4)/n = 20 b^4 / n.
    const double tol = 3.0 * std::sqrt(20.0 / n) * s * s;
    for (int a = 0; a < 3; ++a) CHECK(std::abs(m.cov[a][a] - 2 * s * s) <= tol);
}

TEST_CASE("discrete: seven-atom support with the stated frequencies") {
    const double s = 0.03;
    Rng rng(53);
    const int n = 100000;
    std::array<int, 7> counts = {};
    for (int i = 0; i < n; ++i) {
        const Vec3 d = sample_noise_offset(NoiseKind::discrete, s, rng);
        int atom = -1;
        if (d == Vec3{s, 0, 0}) atom = 0;
        else if (d == Vec3{-s, 0, 0}) atom = 1;
        else if (d == Vec3{0, s, 0}) atom = 2;
        else if (d == Vec3{0, -s, 0}) atom = 3;
        else if (d == Vec3{0, 0, s}) atom = 4;
        else if (d == Vec3{0, 0, -s}) atom = 5;
        else if (d == Vec3{0, 0, 0}) atom = 6;
        REQUIRE(atom >= 0);  // nothing outside the support
        ++counts[atom];
    }
    for (int a = 0; a < 6; ++a) {
        const double sigma = std::sqrt(n * 0.1 * 0.9);
        CHECK(std::abs(counts[a] - n * 0.1) <= 3 * sigma);
    }
    const double sigma0 = std::sqrt(n * 0.4 * 0.6);
    CHECK(std::abs(counts[6] - n * 0.4) <= 3 * sigma0);
}

TEST_CASE("anisotropic gaussian: empirical covariance matches the fixed shape") {
    const double s = 0.05;
    const Moments m = sample_moments(NoiseKind::anisotropic_gaussian, s, 1000000, 54);
    const double target[3][3] = {{1.0, -0.5, -0.25}, {-0.5, 1.0, -0.25}, {-0.25, -0.25, 1.0}};
    double num = 0.0, den = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            const double t = s * s * target[a][b];
            num += (m.cov[a][b] - t) * (m.cov[a][b] - t);
            den += t * t;
        }
    }
    CHECK(std::sqrt(num / den) <= 0.02);
}

TEST_CASE("uniform ball: support bound is exact and the mean vanishes") {
    const double s = 0.04;
    Rng rng(55);
    const int n = 100000;
    Vec3 sum;
    for (int i = 0; i < n; ++i) {
        const Vec3 d = sample_noise_offset(NoiseKind::uniform_ball, s, rng);
        REQUIRE(norm(d) <= s);
        sum += d;
    }
    // Per-coordinate variance inside the ball is s^2/5.
    const double bound = 3.0 * s / std::sqrt(5.0 * n);
    const Vec3 mean = sum / n;
    CHECK(std::abs(mean.x) <= bound);
    CHECK(std::abs(mean.y) <= bound);
    CHECK(std::abs(mean.z) <= bound);
}

TEST_CASE("unidirectional gaussian: y and z pass through bitwise") {
    Rng rng(56);
    const PointCloud clean = random_cloud(rng, 500);
    const PointCloud noisy = apply_noise(clean, {NoiseKind::unidirectional_gaussian, 0.02, 57});
    int x_changed = 0;
    for (int i = 0; i < clean.n(); ++i) {
        CHECK(std::memcmp(&noisy.points[i].y, &clean.points[i].y, sizeof(double)) == 0);
        CHECK(std::memcmp(&noisy.points[i].z, &clean.points[i].z, sizeof(double)) == 0);
        if (noisy.points[i].x != clean.points[i].x) ++x_changed;
    }
    CHECK(x_changed == 500);
}

TEST_CASE("unidirectional gaussian: x residual std is s within 3 sigma") {
    const double s = 0.02;
    const int n = 1000000;
    const Moments m = sample_moments(NoiseKind::unidirectional_gaussian, s, n, 58);
    const double stddev = std::sqrt(m.cov[0][0]);
    CHECK(std::abs(stddev - s) <= 3.0 * s / std::sqrt(2.0 * n));
    CHECK(m.cov[1][1] == 0.0);
    CHECK(m.cov[2][2] == 0.0);
}

TEST_CASE("vanishing scale returns the input cloud") {
    Rng rng(59);
    const PointCloud clean = random_cloud(rng, 100);
    const PointCloud noisy = apply_noise(clean, {NoiseKind::unidirectional_gaussian, 1e-300, 60});
    for (int i = 0; i < clean.n(); ++i) CHECK(noisy.points[i] == clean.points[i]);
}

TEST_CASE("apply_noise: fixed seed reproduces output bitwise; same size") {
    Rng rng(61);
    const PointCloud clean = random_cloud(rng, 300);
    for (const NoiseKind kind :
         {NoiseKind::isotropic_gaussian, NoiseKind::laplace, NoiseKind::discrete,
          NoiseKind::anisotropic_gaussian, NoiseKind::unidirectional_gaussian,
          NoiseKind::uniform_ball}) {
        const NoiseSpec spec{kind, 0.02, 62};
        const PointCloud a = apply_noise(clean, spec);
        const PointCloud b = apply_noise(clean, spec);
        REQUIRE(a.n() == clean.n());
        for (int i = 0; i < a.n(); ++i) CHECK(a.points[i] == b.points[i]);
    }
}

TEST_CASE("apply_noise: rejects bad scales; parser rejects unknown kinds") {
    Rng rng(63);
    const PointCloud clean = random_cloud(rng, 10);
    CHECK_THROWS_AS((void)apply_noise(clean, {NoiseKind::laplace, 0.0, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)apply_noise(clean, {NoiseKind::laplace, -0.1, 1}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_noise_kind("salt_and_pepper"), std::invalid_argument);
    CHECK(parse_noise_kind("uniform") == NoiseKind::uniform_ball);
    for (const NoiseKind kind :
         {NoiseKind::isotropic_gaussian, NoiseKind::laplace, NoiseKind::discrete,
          NoiseKind::anisotropic_gaussian, NoiseKind::unidirectional_gaussian,
          NoiseKind::uniform_ball})
        CHECK(parse_noise_kind(noise_kind_name(kind)) == kind);
}
