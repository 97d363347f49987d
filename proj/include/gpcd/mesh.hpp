#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gpcd/point_cloud.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

// Indexed triangle soup. Used as the ground-truth surface for sampling and
// point-to-mesh distance; no connectivity beyond shared vertex indices.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
};

// Throws invalid_argument unless all indices are in range, no triangle
// repeats a vertex, coordinates are finite, and the total area is positive.
void check_mesh(const Mesh& mesh);

double triangle_area(const Mesh& mesh, int t);
double total_area(const Mesh& mesh);

// Points on a mesh with provenance: triangle id and barycentric coordinates
// reconstruct each position exactly, which pins down sampling bugs quickly.
struct SampledCloud {
    PointCloud cloud;
    std::vector<int> triangle_id;
    std::vector<Vec3> barycentric;
};

// m points with triangle choice proportional to area and square-root-warped
// uniform barycentrics inside each triangle. Deterministic given seed.
SampledCloud area_uniform_sample(const Mesh& mesh, int m, uint64_t seed);

// Blue-noise sample of exactly m points: draws a 4m area-uniform pool, then
// runs weighted sample elimination (weight exponent 8) down to m.
SampledCloud poisson_disk_sample(const Mesh& mesh, int m, uint64_t seed);

// Hexagonal-packing spacing estimate for m points on area A; poisson-disk
// output is expected to keep min pairwise distance above half of this.
double hex_spacing_estimate(double area, int m);

Mesh load_obj(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);
Mesh load_ply_mesh(const std::string& path);
Mesh load_mesh(const std::string& path);  // dispatches on .obj / .ply

}  // namespace gpcd
