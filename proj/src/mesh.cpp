#include "gpcd/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpcd/errors.hpp"
#include "gpcd/kdtree.hpp"
#include "gpcd/rng.hpp"
#include "ply_detail.hpp"

namespace gpcd {

void check_mesh(const Mesh& mesh) {
    if (mesh.vertices.empty() || mesh.triangles.empty())
        throw std::invalid_argument("mesh has no geometry");
    for (const Vec3& v : mesh.vertices)
        if (!is_finite(v)) throw std::invalid_argument("mesh has non-finite vertices");
    const int nv = mesh.vertex_count();
    for (const auto& t : mesh.triangles) {
        for (int i : t)
            if (i < 0 || i >= nv) throw std::invalid_argument("triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw std::invalid_argument("triangle repeats a vertex");
    }
    if (!(total_area(mesh) > 0.0)) throw std::invalid_argument("mesh has zero surface area");
}

double triangle_area(const Mesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 e1 = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
    const Vec3 e2 = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
    return 0.5 * norm(cross(e1, e2));
}

double total_area(const Mesh& mesh) {
    double area = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) area += triangle_area(mesh, t);
    return area;
}

SampledCloud area_uniform_sample(const Mesh& mesh, int m, uint64_t seed) {
    check_mesh(mesh);
    if (m < 1) throw std::invalid_argument("sample count must be >= 1");

    std::vector<double> cumulative(mesh.triangle_count());
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        acc += triangle_area(mesh, t);
        cumulative[t] = acc;
    }

    Rng rng(seed);
    SampledCloud out;
    out.cloud.points.reserve(m);
    out.triangle_id.reserve(m);
    out.barycentric.reserve(m);
    for (int i = 0; i < m; ++i) {
        const double u = rng.uniform() * acc;
        const int t = static_cast<int>(
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const int tc = std::min(t, mesh.triangle_count() - 1);

        // Square-root warp maps the unit square onto barycentric coordinates
        // uniformly in area.
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const Vec3 bary{1.0 - su, su * (1.0 - v), su * v};
        const auto& tri = mesh.triangles[tc];
        out.cloud.points.push_back(mesh.vertices[tri[0]] * bary.x +
                                   mesh.vertices[tri[1]] * bary.y +
                                   mesh.vertices[tri[2]] * bary.z);
        out.triangle_id.push_back(tc);
        out.barycentric.push_back(bary);
    }
    return out;
}

double hex_spacing_estimate(double area, int m) {
    return std::sqrt(area / (m * (std::sqrt(3.0) / 2.0) * (3.14159265358979323846 / 4.0)));
}

namespace {

// Binary max-heap over sample weights with position tracking, so a weight
// decrease can sift its entry down in O(log n).
class WeightHeap {
public:
    explicit WeightHeap(const std::vector<double>& weights)
        : weights_(weights), heap_(weights.size()), pos_(weights.size()) {
        for (size_t i = 0; i < heap_.size(); ++i) heap_[i] = static_cast<int>(i);
        for (int i = static_cast<int>(heap_.size()) / 2 - 1; i >= 0; --i) sift_down(i);
        for (size_t i = 0; i < heap_.size(); ++i) pos_[heap_[i]] = static_cast<int>(i);
    }

    int top() const { return heap_[0]; }
    bool contains(int id) const { return pos_[id] >= 0; }

    void remove(int id) {
        const int p = pos_[id];
        swap_entries(p, static_cast<int>(heap_.size()) - 1);
        heap_.pop_back();
        pos_[id] = -1;
        if (p < static_cast<int>(heap_.size())) {
            sift_down(p);
            sift_up(p);
        }
    }

    void decreased(int id) { sift_down(pos_[id]); }

private:
    bool greater(int a, int b) const { return weights_[heap_[a]] > weights_[heap_[b]]; }

    void swap_entries(int a, int b) {
        std::swap(heap_[a], heap_[b]);
        pos_[heap_[a]] = a;
        pos_[heap_[b]] = b;
    }

    void sift_down(int p) {
        const int n = static_cast<int>(heap_.size());
        while (true) {
            int largest = p;
            const int l = 2 * p + 1, r = 2 * p + 2;
            if (l < n && greater(l, largest)) largest = l;
            if (r < n && greater(r, largest)) largest = r;
            if (largest == p) return;
            swap_entries(p, largest);
            p = largest;
        }
    }

    void sift_up(int p) {
        while (p > 0) {
            const int parent = (p - 1) / 2;
            if (!greater(p, parent)) return;
            swap_entries(p, parent);
            p = parent;
        }
    }

    const std::vector<double>& weights_;
    std::vector<int> heap_;
    std::vector<int> pos_;
};

}  // namespace

SampledCloud poisson_disk_sample(const Mesh& mesh, int m, uint64_t seed) {
    check_mesh(mesh);
    if (m < 1) throw std::invalid_argument("sample count must be >= 1");

    const int pool_size = 4 * m;
    SampledCloud pool = area_uniform_sample(mesh, pool_size, mix_seed(seed, 0x9d5));
    if (pool.cloud.n() < m) throw invalid_state("poisson pool smaller than target");

    // Surface (2D) max Poisson-disk radius at density m over the mesh area;
    // elimination considers neighbors within twice that.
    const double area = total_area(mesh);
    const double r_max = std::sqrt(area / (2.0 * std::sqrt(3.0) * m));
    const double d_max = 2.0 * r_max;
    constexpr double kAlpha = 8.0;
    // Weight limiting keeps already-close pairs from dominating; the fraction
    // follows the sample-elimination reference parameters (beta 0.65, gamma 1.5).
    const double ratio = static_cast<double>(m) / pool_size;
    const double d_min = d_max * (1.0 - std::pow(ratio, 1.5)) * 0.65;

    auto pair_weight = [&](double d) {
        return std::pow(1.0 - std::max(d, d_min) / d_max, kAlpha);
    };

    const KdTree tree(pool.cloud.points);
    std::vector<std::vector<int>> neighbors(pool_size);
    std::vector<double> weights(pool_size, 0.0);
    for (int i = 0; i < pool_size; ++i) {
        std::vector<int> near = tree.radius_query(pool.cloud.points[i], d_max);
        neighbors[i].reserve(near.size());
        for (int j : near) {
            if (j == i) continue;
            neighbors[i].push_back(j);
            weights[i] += pair_weight(norm(pool.cloud.points[i] - pool.cloud.points[j]));
        }
    }

    WeightHeap heap(weights);
    int alive = pool_size;
    while (alive > m) {
        const int victim = heap.top();
        heap.remove(victim);
        --alive;
        for (int j : neighbors[victim]) {
            if (!heap.contains(j)) continue;
            weights[j] -= pair_weight(norm(pool.cloud.points[victim] - pool.cloud.points[j]));
            heap.decreased(j);
        }
    }

    SampledCloud out;
    out.cloud.points.reserve(m);
    out.triangle_id.reserve(m);
    out.barycentric.reserve(m);
    for (int i = 0; i < pool_size; ++i) {
        if (!heap.contains(i)) continue;
        out.cloud.points.push_back(pool.cloud.points[i]);
        out.triangle_id.push_back(pool.triangle_id[i]);
        out.barycentric.push_back(pool.barycentric[i]);
    }
    return out;
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

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    Mesh mesh;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        if (word == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw io_error(path + ":" + std::to_string(lineno) + ": malformed vertex");
            mesh.vertices.push_back(v);
        } else if (word == "f") {
            std::vector<int> poly;
            std::string item;
            while (ls >> item) {
                // "i", "i/t", "i/t/n", "i//n": the vertex index leads.
                const int idx = std::atoi(item.c_str());
                if (idx < 1)
                    throw io_error(path + ":" + std::to_string(lineno) + ": bad face index");
                poly.push_back(idx - 1);
            }
            if (poly.size() < 3)
                throw io_error(path + ":" + std::to_string(lineno) + ": face needs 3+ vertices");
            for (size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
        }
    }
    check_mesh(mesh);
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    check_mesh(mesh);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    char buf[160];
    for (const Vec3& v : mesh.vertices) {
        const int len = std::snprintf(buf, sizeof buf, "v %.9f %.9f %.9f\n", v.x, v.y, v.z);
        out.write(buf, len);
    }
    for (const auto& t : mesh.triangles) {
        const int len =
            std::snprintf(buf, sizeof buf, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out.write(buf, len);
    }
    if (!out) throw io_error("write failed: " + path);
}

Mesh load_ply_mesh(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    const ply::Header header = ply::parse_header(in, path);

    Mesh mesh;
    for (const ply::Element& elem : header.elements) {
        if (elem.name == "vertex") {
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
            mesh.vertices.reserve(elem.count);
            ply::read_element(in, header.format, elem, path,
                              [&](const std::vector<double>& s,
                                  const std::vector<std::vector<double>>&) {
                                  mesh.vertices.push_back({s[ix], s[iy], s[iz]});
                              });
        } else if (elem.name == "face") {
            int list_pos = -1;
            int lp = 0;
            for (const ply::Property& p : elem.props) {
                if (!p.is_list) continue;
                if (p.name == "vertex_indices" || p.name == "vertex_index") list_pos = lp;
                ++lp;
            }
            if (list_pos < 0) throw io_error(path + ": face element lacks vertex indices");
            mesh.triangles.reserve(elem.count);
            ply::read_element(
                in, header.format, elem, path,
                [&](const std::vector<double>&, const std::vector<std::vector<double>>& lists) {
                    const std::vector<double>& poly = lists[list_pos];
                    if (poly.size() < 3) throw io_error(path + ": face needs 3+ vertices");
                    for (size_t i = 1; i + 1 < poly.size(); ++i)
                        mesh.triangles.push_back({static_cast<int>(poly[0]),
                                                  static_cast<int>(poly[i]),
                                                  static_cast<int>(poly[i + 1])});
                });
        } else {
            ply::read_element(in, header.format, elem, path, [](auto&, auto&) {});
        }
    }
    check_mesh(mesh);
    return mesh;
}

Mesh load_mesh(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "obj") return load_obj(path);
    if (ext == "ply") return load_ply_mesh(path);
    throw io_error(path + ": unsupported mesh format '." + ext + "'");
}

}  // namespace gpcd
