#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gpcd/errors.hpp"
#include "gpcd/vec3.hpp"

namespace gpcd {

// Ordered list of 3D positions. source_index, when non-empty, maps each point
// back to an index in an originating cloud and must match points in length.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<int> source_index;

    int n() const { return static_cast<int>(points.size()); }
    bool has_source_index() const { return !source_index.empty(); }
};

// Throws invalid_argument unless the cloud is non-empty, finite, and any
// source_index entries lie in [0, parent_n). Pass parent_n < 0 to skip the
// range check when the parent size is unknown.
void check_cloud(const PointCloud& cloud, int parent_n = -1);

Vec3 centroid(const PointCloud& cloud);

// File formats. XYZ is headerless ASCII, one "x y z" triple per line. PLY is
// written binary little-endian with float x/y/z; the reader also accepts
// ascii PLY and skips unknown vertex properties.
PointCloud load_xyz(const std::string& path);
void save_xyz(const PointCloud& cloud, const std::string& path);
PointCloud load_ply_points(const std::string& path);
void save_ply_points(const PointCloud& cloud, const std::string& path);

// Dispatch on the file extension (.xyz or .ply).
PointCloud load_points(const std::string& path);
void save_points(const PointCloud& cloud, const std::string& path);

}  // namespace gpcd
