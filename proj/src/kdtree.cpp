#include "gpcd/kdtree.hpp"

#include <algorithm>
#include <stdexcept>

namespace gpcd {

namespace {
constexpr int kLeafSize = 16;

struct Cand {
    double d2;
    int idx;
    bool operator<(const Cand& o) const {
        return d2 != o.d2 ? d2 < o.d2 : idx < o.idx;
    }
};
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("kd-tree over empty cloud");
    order_.resize(points_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
    Node node;
    node.box_min = node.box_max = points_[order_[begin]];
    for (int i = begin + 1; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        for (int a = 0; a < 3; ++a) {
            node.box_min[a] = std::min(node.box_min[a], p[a]);
            node.box_max[a] = std::max(node.box_max[a], p[a]);
        }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
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
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

double KdTree::box_dist2(const Node& node, const Vec3& q) const {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        double d = 0.0;
        if (q[a] < node.box_min[a]) d = node.box_min[a] - q[a];
        else if (q[a] > node.box_max[a]) d = q[a] - node.box_max[a];
        d2 += d * d;
    }
    return d2;
}

void KdTree::knn(const Vec3& query, int k, int exclude_index, std::vector<int>& out_index,
                 std::vector<double>& out_dist) const {
    const int avail = n() - (exclude_index >= 0 && exclude_index < n() ? 1 : 0);
    if (k < 1 || k > avail) throw std::invalid_argument("knn: k out of range");

    // Max-heap on (d2, idx); top is the current worst of the best k.
    std::vector<Cand> heap;
    heap.reserve(static_cast<size_t>(k) + 1);

    auto offer = [&](int idx) {
        if (idx == exclude_index) return;
        const Cand c{dist2(points_[idx], query), idx};
        if (static_cast<int>(heap.size()) < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
        }
    };

    // Recursive traversal, nearer child first; prune on strict box distance.
    auto visit = [&](auto&& self, int node_id) -> void {
        const Node& node = nodes_[node_id];
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) offer(order_[i]);
            return;
        }
        const double dl = box_dist2(nodes_[node.left], query);
        const double dr = box_dist2(nodes_[node.right], query);
        const int first = dl <= dr ? node.left : node.right;
        const int second = dl <= dr ? node.right : node.left;
        const double dfirst = std::min(dl, dr);
        const double dsecond = std::max(dl, dr);
        if (static_cast<int>(heap.size()) < k || dfirst <= heap.front().d2) self(self, first);
        if (static_cast<int>(heap.size()) < k || dsecond <= heap.front().d2) self(self, second);
    };
    visit(visit, root_);

    std::sort(heap.begin(), heap.end());
    out_index.resize(k);
    out_dist.resize(k);
    for (int i = 0; i < k; ++i) {
        out_index[i] = heap[i].idx;
        out_dist[i] = std::sqrt(heap[i].d2);
    }
}

std::vector<int> KdTree::radius_query(const Vec3& query, double radius) const {
    std::vector<int> found;
    if (radius < 0.0) return found;
    const double r2 = radius * radius;
    auto visit = [&](auto&& self, int node_id) -> void {
        const Node& node = nodes_[node_id];
        if (box_dist2(node, query) > r2) return;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int idx = order_[i];
                if (dist2(points_[idx], query) <= r2) found.push_back(idx);
            }
            return;
        }
        self(self, node.left);
        self(self, node.right);
    };
    visit(visit, root_);
    std::sort(found.begin(), found.end());
    return found;
}

}  // namespace gpcd
