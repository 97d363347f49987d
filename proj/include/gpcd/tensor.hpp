#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gpcd/errors.hpp"

namespace gpcd {

// Reverse-mode autodiff over dense row-major tensors. Scalar type is a
// template parameter: float in production, double under gradcheck. Graphs
// are built eagerly per forward pass; backward() accumulates into each
// parameter's persistent grad, so two backward calls double the gradients.

namespace autodiff_detail {
inline thread_local int no_grad_depth = 0;
}

// Suspends graph construction (inference mode) for the current thread.
struct NoGradGuard {
    NoGradGuard() { ++autodiff_detail::no_grad_depth; }
    ~NoGradGuard() { --autodiff_detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return autodiff_detail::no_grad_depth == 0; }

// Distance of the nearest forward pass to a nondifferentiable point, plus a
// hash of the activation region (relu sign pattern and max argmax choices).
// Finite differencing is only trustworthy when the probe stays inside one
// region, so gradcheck harnesses install a monitor and compare signatures.
struct KinkStats {
    double relu_margin = std::numeric_limits<double>::infinity();
    double max_gap = std::numeric_limits<double>::infinity();
    uint64_t region_sig = 1469598103934665603ULL;

    void fold(uint64_t v) { region_sig = (region_sig ^ v) * 1099511628211ULL; }
};

namespace autodiff_detail {
inline thread_local KinkStats* kink_monitor = nullptr;
}

struct KinkMonitorGuard {
    KinkStats stats;
    KinkStats* previous;
    KinkMonitorGuard() : previous(autodiff_detail::kink_monitor) {
        autodiff_detail::kink_monitor = &stats;
    }
    ~KinkMonitorGuard() { autodiff_detail::kink_monitor = previous; }
    KinkMonitorGuard(const KinkMonitorGuard&) = delete;
    KinkMonitorGuard& operator=(const KinkMonitorGuard&) = delete;
};

template <typename T>
class TensorT {
public:
    struct Node;
    using NodePtr = std::shared_ptr<Node>;
    // Accumulates d(loss)/d(input_i) into *grads_in[i] (null when unneeded),
    // given d(loss)/d(self).
    using Backprop =
        std::function<void(const std::vector<T>&, const std::vector<std::vector<T>*>&)>;

    struct Node {
        std::vector<int> shape;
        std::vector<T> values;
        std::vector<T> grad;  // persistent; lazily sized on first backward
        bool requires_grad = false;
        std::vector<NodePtr> inputs;
        Backprop backprop;
    };

    TensorT() = default;
    explicit TensorT(NodePtr node) : node_(std::move(node)) {}

    static TensorT leaf(std::vector<int> shape, std::vector<T> values,
                        bool requires_grad = false) {
        auto node = std::make_shared<Node>();
        if (values.size() != static_cast<size_t>(numel(shape)))
            throw std::invalid_argument("tensor: value count does not match shape");
        node->shape = std::move(shape);
        node->values = std::move(values);
        node->requires_grad = requires_grad;
        return TensorT(std::move(node));
    }

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        const auto n = static_cast<size_t>(numel(shape));
        return leaf(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    const std::vector<T>& values() const { return node_->values; }
    std::vector<T>& values() { return node_->values; }
    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }

    int64_t size() const { return numel(node_->shape); }
    int rows() const { return node_->shape.at(0); }
    int cols() const { return node_->shape.size() == 2 ? node_->shape[1] : 1; }

    void zero_grad() { node_->grad.assign(node_->grad.size(), T(0)); }

    NodePtr node() const { return node_; }

    static int64_t numel(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

private:
    NodePtr node_;
};

namespace autodiff_detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
typename TensorT<T>::NodePtr make_op(std::vector<int> shape, std::vector<T> values,
                                     std::vector<typename TensorT<T>::NodePtr> inputs,
                                     typename TensorT<T>::Backprop backprop) {
    auto node = std::make_shared<typename TensorT<T>::Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    if (grad_enabled()) {
        node->inputs = std::move(inputs);
        node->backprop = std::move(backprop);
    }
    return node;
}

template <typename T>
void require_2d(const TensorT<T>& t, const char* what) {
    if (t.shape().size() != 2) throw std::invalid_argument(std::string(what) + ": tensor must be 2-D");
}

}  // namespace autodiff_detail

// C[m x n] = A[m x k] * B[k x n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    using namespace autodiff_detail;
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("matmul: inner dimensions differ");

    std::vector<T> out(static_cast<size_t>(m) * n);
    {
        Eigen::Map<const Mat<T>> A(a.values().data(), m, k);
        Eigen::Map<const Mat<T>> B(b.values().data(), k, n);
        Eigen::Map<Mat<T>> C(out.data(), m, n);
        C.noalias() = A * B;
    }
    auto an = a.node(), bn = b.node();
    return TensorT<T>(make_op<T>(
        {m, n}, std::move(out), {an, bn},
        [an, bn, m, k, n](const std::vector<T>& gout,
                          const std::vector<std::vector<T>*>& gin) {
            Eigen::Map<const Mat<T>> G(gout.data(), m, n);
            if (gin[0]) {
                Eigen::Map<const Mat<T>> B(bn->values.data(), k, n);
                Eigen::Map<Mat<T>> GA(gin[0]->data(), m, k);
                GA.noalias() += G * B.transpose();
            }
            if (gin[1]) {
                Eigen::Map<const Mat<T>> A(an->values.data(), m, k);
                Eigen::Map<Mat<T>> GB(gin[1]->data(), k, n);
                GB.noalias() += A.transpose() * G;
            }
        }));
}

// Elementwise sum of same-shape tensors.
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    using namespace autodiff_detail;
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    std::vector<T> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
    return TensorT<T>(make_op<T>(
        a.shape(), std::move(out), {a.node(), b.node()},
        [](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            for (int s = 0; s < 2; ++s)
                if (gin[s])
                    for (size_t i = 0; i < gout.size(); ++i) (*gin[s])[i] += gout[i];
        }));
}

// A[m x n] + bias[n], broadcast over rows; the only broadcast in the engine.
template <typename T>
TensorT<T> add_bias(const TensorT<T>& a, const TensorT<T>& bias) {
    using namespace autodiff_detail;
    require_2d(a, "add_bias");
    const int m = a.rows(), n = a.cols();
    if (static_cast<int64_t>(n) != bias.size())
        throw std::invalid_argument("add_bias: bias length must equal columns");
    std::vector<T> out(a.values());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += bias.values()[j];
    return TensorT<T>(make_op<T>(
        a.shape(), std::move(out), {a.node(), bias.node()},
        [m, n](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += gout[i];
            if (gin[1])
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        (*gin[1])[j] += gout[static_cast<size_t>(i) * n + j];
        }));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    using namespace autodiff_detail;
    if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
    std::vector<T> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
    return TensorT<T>(make_op<T>(
        a.shape(), std::move(out), {a.node(), b.node()},
        [](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += gout[i];
            if (gin[1])
                for (size_t i = 0; i < gout.size(); ++i) (*gin[1])[i] -= gout[i];
        }));
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor) {
    using namespace autodiff_detail;
    std::vector<T> out(a.values());
    for (T& v : out) v *= factor;
    return TensorT<T>(make_op<T>(
        a.shape(), std::move(out), {a.node()},
        [factor](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += factor * gout[i];
        }));
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    using namespace autodiff_detail;
    if (kink_monitor)
        for (T v : a.values()) {
            kink_monitor->relu_margin =
                std::min(kink_monitor->relu_margin, std::abs(static_cast<double>(v)));
            kink_monitor->fold(v > T(0) ? 2 : 1);
        }
    std::vector<T> out(a.values());
    for (T& v : out) v = v > T(0) ? v : T(0);
    auto an = a.node();
    return TensorT<T>(make_op<T>(
        a.shape(), std::move(out), {an},
        [an](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (size_t i = 0; i < gout.size(); ++i)
                    if (an->values[i] > T(0)) (*gin[0])[i] += gout[i];
        }));
}

// Concatenation of 2-D tensors along the last (column) dimension.
template <typename T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    using namespace autodiff_detail;
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int m = parts[0].rows();
    int total = 0;
    std::vector<typename TensorT<T>::NodePtr> nodes;
    std::vector<int> widths;
    for (const auto& p : parts) {
        require_2d(p, "concat");
        if (p.rows() != m) throw std::invalid_argument("concat: row count mismatch");
        widths.push_back(p.cols());
        total += p.cols();
        nodes.push_back(p.node());
    }
    std::vector<T> out(static_cast<size_t>(m) * total);
    {
        int off = 0;
        for (size_t s = 0; s < parts.size(); ++s) {
            const auto& src = parts[s].values();
            const int w = widths[s];
            for (int i = 0; i < m; ++i)
                std::copy(src.begin() + static_cast<size_t>(i) * w,
                          src.begin() + static_cast<size_t>(i + 1) * w,
                          out.begin() + static_cast<size_t>(i) * total + off);
            off += w;
        }
    }
    return TensorT<T>(make_op<T>(
        {m, total}, std::move(out), std::move(nodes),
        [m, total, widths](const std::vector<T>& gout,
                           const std::vector<std::vector<T>*>& gin) {
            int off = 0;
            for (size_t s = 0; s < widths.size(); ++s) {
                const int w = widths[s];
                if (gin[s]) {
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            (*gin[s])[static_cast<size_t>(i) * w + j] +=
                                gout[static_cast<size_t>(i) * total + off + j];
                }
                off += w;
            }
        }));
}

template <typename T>
TensorT<T> concat_cols(const TensorT<T>& a, const TensorT<T>& b) {
    return concat_cols<T>(std::vector<TensorT<T>>{a, b});
}

// Row gather: out[r] = a[index[r]]; backward scatter-adds into a.
template <typename T>
TensorT<T> gather_rows(const TensorT<T>& a, std::vector<int> index) {
    using namespace autodiff_detail;
    require_2d(a, "gather_rows");
    const int n = a.rows(), c = a.cols();
    for (int r : index)
        if (r < 0 || r >= n) throw std::invalid_argument("gather_rows: index out of range");
    const int m = static_cast<int>(index.size());
    std::vector<T> out(static_cast<size_t>(m) * c);
    for (int i = 0; i < m; ++i)
        std::copy(a.values().begin() + static_cast<size_t>(index[i]) * c,
                  a.values().begin() + static_cast<size_t>(index[i] + 1) * c,
                  out.begin() + static_cast<size_t>(i) * c);
    return TensorT<T>(make_op<T>(
        {m, c}, std::move(out), {a.node()},
        [index = std::move(index), c](const std::vector<T>& gout,
                                      const std::vector<std::vector<T>*>& gin) {
            if (!gin[0]) return;
            for (size_t i = 0; i < index.size(); ++i)
                for (int j = 0; j < c; ++j)
                    (*gin[0])[static_cast<size_t>(index[i]) * c + j] += gout[i * c + j];
        }));
}

// Max over k-row groups: a is [(n*k) x c], output [n x c]. Ties route the
// gradient to the lowest row index, for determinism.
template <typename T>
TensorT<T> group_max(const TensorT<T>& a, int groups) {
    using namespace autodiff_detail;
    require_2d(a, "group_max");
    const int rows = a.rows(), c = a.cols();
    if (groups < 1 || rows % groups != 0)
        throw std::invalid_argument("group_max: rows not divisible into groups");
    const int k = rows / groups;
    std::vector<T> out(static_cast<size_t>(groups) * c);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(groups) * c);
    for (int g = 0; g < groups; ++g) {
        for (int j = 0; j < c; ++j) {
            int best_row = g * k;
            T best = a.values()[static_cast<size_t>(best_row) * c + j];
            T second = -std::numeric_limits<T>::infinity();
            for (int r = 1; r < k; ++r) {
                const T v = a.values()[static_cast<size_t>(g * k + r) * c + j];
                if (v > best) {
                    second = best;
                    best = v;
                    best_row = g * k + r;
                } else if (v > second) {
                    second = v;
                }
            }
            if (kink_monitor && k > 1) {
                kink_monitor->max_gap = std::min(kink_monitor->max_gap,
                                                 static_cast<double>(best - second));
                kink_monitor->fold(static_cast<uint64_t>(best_row) + 3);
            }
            out[static_cast<size_t>(g) * c + j] = best;
            (*argmax)[static_cast<size_t>(g) * c + j] = best_row;
        }
    }
    return TensorT<T>(make_op<T>(
        {groups, c}, std::move(out), {a.node()},
        [argmax, c](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (!gin[0]) return;
            for (size_t i = 0; i < gout.size(); ++i)
                (*gin[0])[static_cast<size_t>((*argmax)[i]) * c + i % c] += gout[i];
        }));
}

// Scalar mean over all elements.
template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
    using namespace autodiff_detail;
    if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
    T sum = T(0);
    for (T v : a.values()) sum += v;
    const T inv = T(1) / static_cast<T>(a.size());
    return TensorT<T>(make_op<T>(
        {1}, {sum * inv}, {a.node()},
        [inv, n = a.size()](const std::vector<T>& gout,
                            const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (int64_t i = 0; i < n; ++i) (*gin[0])[i] += gout[0] * inv;
        }));
}

// Scalar sum of squared elements.
template <typename T>
TensorT<T> sum_of_squares(const TensorT<T>& a) {
    using namespace autodiff_detail;
    T sum = T(0);
    for (T v : a.values()) sum += v * v;
    auto an = a.node();
    return TensorT<T>(make_op<T>(
        {1}, {sum}, {an},
        [an](const std::vector<T>& gout, const std::vector<std::vector<T>*>& gin) {
            if (gin[0])
                for (size_t i = 0; i < an->values.size(); ++i)
                    (*gin[0])[i] += T(2) * an->values[i] * gout[0];
        }));
}

// Seeds reverse mode at `out` with d(loss)/d(out) and accumulates into the
// persistent grad of every reachable requires_grad leaf.
template <typename T>
void backward_from(const TensorT<T>& out, const std::vector<T>& seed) {
    using Node = typename TensorT<T>::Node;
    if (static_cast<int64_t>(seed.size()) != out.size())
        throw std::invalid_argument("backward: seed size does not match tensor");

    // Iterative post-order DFS; marks which nodes need adjoints (parameters
    // and anything on a path to one).
    std::vector<Node*> order;
    std::unordered_map<Node*, bool> needs;
    {
        std::vector<std::pair<Node*, size_t>> stack{{out.node().get(), 0}};
        std::unordered_set<Node*> visiting;
        visiting.insert(out.node().get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                Node* child = node->inputs[next++].get();
                if (!visiting.count(child)) {
                    visiting.insert(child);
                    stack.emplace_back(child, 0);
                }
            } else {
                bool need = node->requires_grad;
                for (const auto& in : node->inputs) need = need || needs[in.get()];
                needs[node] = need;
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::unordered_map<Node*, std::vector<T>> adjoint;
    if (!needs[out.node().get()]) return;
    adjoint[out.node().get()] = seed;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        auto found = adjoint.find(node);
        if (found == adjoint.end()) continue;
        const std::vector<T> gout = std::move(found->second);
        adjoint.erase(found);
        if (node->backprop) {
            std::vector<std::vector<T>*> gin(node->inputs.size(), nullptr);
            for (size_t i = 0; i < node->inputs.size(); ++i) {
                Node* child = node->inputs[i].get();
                if (!needs[child]) continue;
                // unordered_map references stay valid across later insertions
                auto [slot, inserted] = adjoint.try_emplace(child);
                if (inserted) slot->second.assign(child->values.size(), T(0));
                gin[i] = &slot->second;
            }
            node->backprop(gout, gin);
        }
        if (node->requires_grad) {
            if (node->grad.size() != node->values.size())
                node->grad.assign(node->values.size(), T(0));
            for (size_t i = 0; i < gout.size(); ++i) node->grad[i] += gout[i];
        }
    }
}

template <typename T>
void backward(const TensorT<T>& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    backward_from(loss, std::vector<T>{T(1)});
}

using Tensor = TensorT<float>;

}  // namespace gpcd
