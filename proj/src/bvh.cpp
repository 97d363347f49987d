#include "gpcd/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gpcd {

namespace {

double point_segment_sq(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = norm2(ab);
    if (len2 <= 0.0) return dist2(p, a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return dist2(p, a + ab * t);
}

}  // namespace

double point_triangle_sq(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return dist2(p, a);

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return dist2(p, b);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return dist2(p, a + ab * v);
    }

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return dist2(p, c);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return dist2(p, a + ac * w);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return dist2(p, b + (c - b) * w);
    }

    const double denom = va + vb + vc;
    if (!(denom > 0.0)) {
        // Degenerate (collinear) triangle: the nearest point lies on an edge.
        return std::min({point_segment_sq(p, a, b), point_segment_sq(p, b, c),
                         point_segment_sq(p, a, c)});
    }
    const double v = vb / denom, w = vc / denom;
    return dist2(p, a + ab * v + ac * w);
}

namespace {
constexpr int kBvhLeafSize = 4;
}

TriangleBvh::TriangleBvh(const Mesh& mesh) {
    check_mesh(mesh);
    const int nt = mesh.triangle_count();
    va_.resize(nt);
    vb_.resize(nt);
    vc_.resize(nt);
    centroid_.resize(nt);
    order_.resize(nt);
    for (int t = 0; t < nt; ++t) {
        va_[t] = mesh.vertices[mesh.triangles[t][0]];
        vb_[t] = mesh.vertices[mesh.triangles[t][1]];
        vc_[t] = mesh.vertices[mesh.triangles[t][2]];
        centroid_[t] = (va_[t] + vb_[t] + vc_[t]) / 3.0;
        order_[t] = t;
    }
    nodes_.reserve(2 * nt / kBvhLeafSize + 2);
    root_ = build(0, nt);
}

int TriangleBvh::build(int begin, int end) {
    Node node;
    node.box_min = node.box_max = va_[order_[begin]];
    for (int i = begin; i < end; ++i) {
        const int t = order_[i];
        for (const Vec3* v : {&va_[t], &vb_[t], &vc_[t]}) {
            for (int a = 0; a < 3; ++a) {
                node.box_min[a] = std::min(node.box_min[a], (*v)[a]);
                node.box_max[a] = std::max(node.box_max[a], (*v)[a]);
            }
        }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kBvhLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis = 0;
    double extent = node.box_max[0] - node.box_min[0];
    for (int a = 1; a < 3; ++a) {
        const double e = node.box_max[a] - node.box_min[a];
        if (e > extent) {
            extent = e;
            axis = a;
        }
    }
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroid_[a][axis] < centroid_[b][axis]; });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

double TriangleBvh::closest_sq(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    auto box_dist2 = [&](const Node& node) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double d = 0.0;
            if (p[a] < node.box_min[a]) d = node.box_min[a] - p[a];
            else if (p[a] > node.box_max[a]) d = p[a] - node.box_max[a];
            d2 += d * d;
        }
        return d2;
    };
    auto visit = [&](auto&& self, int node_id) -> void {
        const Node& node = nodes_[node_id];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int t = order_[i];
                best = std::min(best, point_triangle_sq(p, va_[t], vb_[t], vc_[t]));
            }
            return;
        }
        const double dl = box_dist2(nodes_[node.left]);
        const double dr = box_dist2(nodes_[node.right]);
        const int first = dl <= dr ? node.left : node.right;
        const int second = dl <= dr ? node.right : node.left;
        if (std::min(dl, dr) <= best) self(self, first);
        if (std::max(dl, dr) <= best) self(self, second);
    };
    visit(visit, root_);
    return best;
}

double point_to_mesh(const PointCloud& cloud, const TriangleBvh& bvh) {
    check_cloud(cloud);
    double sum = 0.0;
    for (const Vec3& p : cloud.points) sum += bvh.closest_sq(p);
    return sum / cloud.n();
}

double point_to_mesh(const PointCloud& cloud, const Mesh& mesh) {
    return point_to_mesh(cloud, TriangleBvh(mesh));
}

}  // namespace gpcd
