#include "gpcd/point_cloud.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ply_detail.hpp"

namespace gpcd {

void check_cloud(const PointCloud& cloud, int parent_n) {
    if (cloud.points.empty()) throw std::invalid_argument("point cloud is empty");
    for (const Vec3& p : cloud.points)
        if (!is_finite(p)) throw std::invalid_argument("point cloud has non-finite coordinates");
    if (cloud.has_source_index()) {
        if (cloud.source_index.size() != cloud.points.size())
            throw std::invalid_argument("source_index length mismatch");
        for (int idx : cloud.source_index)
            if (idx < 0 || (parent_n >= 0 && idx >= parent_n))
                throw std::invalid_argument("source_index out of range");
    }
}

Vec3 centroid(const PointCloud& cloud) {
    if (cloud.points.empty()) throw std::invalid_argument("centroid of empty cloud");
    Vec3 sum;
    for (const Vec3& p : cloud.points) sum += p;
    return sum / static_cast<double>(cloud.n());
}

PointCloud load_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    PointCloud cloud;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p.x >> p.y >> p.z))
            throw io_error(path + ":" + std::to_string(lineno) + ": malformed xyz line");
        cloud.points.push_back(p);
    }
    if (cloud.points.empty()) throw io_error(path + ": no points");
    check_cloud(cloud);
    return cloud;
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
    check_cloud(cloud);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    char buf[128];
    for (const Vec3& p : cloud.points) {
        const int len = std::snprintf(buf, sizeof buf, "%.9f %.9f %.9f\n", p.x, p.y, p.z);
        out.write(buf, len);
    }
    if (!out) throw io_error("write failed: " + path);
}

PointCloud load_ply_points(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    const ply::Header header = ply::parse_header(in, path);

    PointCloud cloud;
    for (const ply::Element& elem : header.elements) {
        if (elem.name != "vertex") {
            ply::read_element(in, header.format, elem, path, [](auto&, auto&) {});
            continue;
        }
        int ix = -1, iy = -1, iz = -1;
        int scalar_pos = 0;
        for (const ply::Property& p : elem.props) {
            if (p.is_list) continue;
            if (p.name == "x") ix = scalar_pos;
            if (p.name == "y") iy = scalar_pos;
            if (p.name == "z") iz = scalar_pos;
            ++scalar_pos;
        }
        if (ix < 0 || iy < 0 || iz < 0) throw io_error(path + ": vertex element lacks x/y/z");
        cloud.points.reserve(elem.count);
        ply::read_element(in, header.format, elem, path,
                          [&](const std::vector<double>& s, const std::vector<std::vector<double>>&) {
                              cloud.points.push_back({s[ix], s[iy], s[iz]});
                          });
        check_cloud(cloud);
        return cloud;
    }
    throw io_error(path + ": no vertex element");
}

void save_ply_points(const PointCloud& cloud, const std::string& path) {
    check_cloud(cloud);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << cloud.n() << "\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "end_header\n";
    for (const Vec3& p : cloud.points) {
        const float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                              static_cast<float>(p.z)};
        out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
    }
    if (!out) throw io_error("write failed: " + path);
}

namespace {

std::string lower_ext(const std::string& path) {
    const size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

}  // namespace

PointCloud load_points(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "xyz") return load_xyz(path);
    if (ext == "ply") return load_ply_points(path);
    throw io_error(path + ": unsupported point format '." + ext + "'");
}

void save_points(const PointCloud& cloud, const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "xyz") return save_xyz(cloud, path);
    if (ext == "ply") return save_ply_points(cloud, path);
    throw io_error(path + ": unsupported point format '." + ext + "'");
}

}  // namespace gpcd
