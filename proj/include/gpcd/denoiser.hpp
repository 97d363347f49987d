#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gpcd/geometry.hpp"
#include "gpcd/kdtree.hpp"
#include "gpcd/nn.hpp"
#include "gpcd/point_cloud.hpp"
#include "gpcd/tensor.hpp"

namespace gpcd {

// Gradient-ascent schedule: T iterations with step s_t = s0 * gamma^t, and
// uniformity refinement active from iteration t_act onward. t_act == T
// degenerates to the pure backbone loop. The refinement displacement is
// applied at full magnitude by default; scale_uninet multiplies it by s_t
// instead, for comparison runs.
struct DenoiseSchedule {
    int T = 30;
    double s0 = 0.2;
    double gamma = 0.95;
    int t_act = 20;
    bool scale_uninet = false;

    double step(int t) const { return s0 * std::pow(gamma, t); }

    void validate() const {
        if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
        if (!(s0 > 0.0)) throw std::invalid_argument("schedule: s0 must be positive");
        if (!(gamma > 0.0) || gamma > 1.0)
            throw std::invalid_argument("schedule: gamma must be in (0, 1]");
        if (t_act < 0 || t_act > T)
            throw std::invalid_argument("schedule: t_act must be in [0, T]");
    }
};

// Row-major n x k nearest-neighbor table over one cloud.
std::vector<int> knn_table(const std::vector<Vec3>& points, int k, bool exclude_self);

// Denoising model: a feature-extracting backbone with a gradient head, plus
// the UniNet refinement network. The two parameter stores are separate so
// the second training stage can freeze the backbone outright.
template <typename T>
class DenoiserModelT {
public:
    static constexpr int kFeatureWidth = 64;  // extractor output channels

    static DenoiserModelT create(uint64_t init_seed, int k_feat = 16, int k_uninet = 8,
                                 int l_uninet = 2) {
        if (k_feat < 1 || k_uninet < 1 || l_uninet < 1)
            throw std::invalid_argument("model: k_feat, k_uninet, l_uninet must be positive");
        DenoiserModelT m;
        m.k_feat_ = k_feat;
        m.k_uninet_ = k_uninet;
        m.l_uninet_ = l_uninet;

        Rng rng(init_seed);
        m.conv1_ = DenseEdgeConvT<T>::create(m.backbone_, "extractor.conv0", 3, {32, 32, 32},
                                             rng);
        m.conv2_ = DenseEdgeConvT<T>::create(m.backbone_, "extractor.conv1", 32,
                                             {64, 64, 64, 64}, rng);
        m.head_edge_ = LinearT<T>::create(m.backbone_, "head.edge", 3 + kFeatureWidth, 128, rng);
        m.head_mid_ = LinearT<T>::create(m.backbone_, "head.mid", 128, 64, rng);
        m.head_out_ = LinearT<T>::create(m.backbone_, "head.out", 64, 3, rng);

        m.entry_ = LinearT<T>::create(m.uninet_, "entry", 3, 32, rng);
        for (int l = 0; l < l_uninet; ++l)
            m.refine_convs_.push_back(DenseEdgeConvT<T>::create(
                m.uninet_, "conv" + std::to_string(l), 32, {16, 32}, rng));
        m.exit_hidden_ = LinearT<T>::create(m.uninet_, "exit_hidden", 32, 32, rng);
        m.exit_out_ = LinearT<T>::create(m.uninet_, "exit_out", 32, 3, rng);
        return m;
    }

    int k_feat() const { return k_feat_; }
    int k_uninet() const { return k_uninet_; }
    int l_uninet() const { return l_uninet_; }
    ParamStoreT<T>& backbone() { return backbone_; }
    const ParamStoreT<T>& backbone() const { return backbone_; }
    ParamStoreT<T>& uninet() { return uninet_; }
    const ParamStoreT<T>& uninet() const { return uninet_; }

    // Per-point features of the original noisy patch; computed once per
    // patch, never inside the iteration.
    TensorT<T> extract_features(const std::vector<Vec3>& noisy) const {
        const int n = static_cast<int>(noisy.size());
        if (n < k_feat_ + 1)
            throw std::invalid_argument("extract_features: patch smaller than k_feat+1");
        auto x = positions_tensor(noisy);
        auto idx = knn_table(noisy, k_feat_, /*exclude_self=*/true);
        auto f = conv1_(x, idx, k_feat_);
        return conv2_(f, idx, k_feat_);
    }

    // Gradient field at the current positions: each point gathers its k_feat
    // nearest points of the ORIGINAL noisy cloud (self included when
    // nearest) and fuses offsets with their features.
    TensorT<T> estimate_gradient(const std::vector<Vec3>& positions,
                                 const std::vector<Vec3>& noisy,
                                 const TensorT<T>& features) const {
        const int n = static_cast<int>(positions.size());
        if (noisy.size() != positions.size() ||
            features.rows() != n || features.cols() != kFeatureWidth)
            throw std::invalid_argument("estimate_gradient: length mismatch");

        KdTree tree(noisy);
        std::vector<int> idx(static_cast<size_t>(n) * k_feat_);
        std::vector<T> diffs(static_cast<size_t>(n) * k_feat_ * 3);
        std::vector<int> nn_idx;
        std::vector<double> nn_dist;
        for (int i = 0; i < n; ++i) {
            tree.knn(positions[i], k_feat_, -1, nn_idx, nn_dist);
            for (int j = 0; j < k_feat_; ++j) {
                const int nb = nn_idx[j];
                idx[static_cast<size_t>(i) * k_feat_ + j] = nb;
                const Vec3 d = positions[i] - noisy[nb];
                const size_t base = (static_cast<size_t>(i) * k_feat_ + j) * 3;
                diffs[base] = static_cast<T>(d.x);
                diffs[base + 1] = static_cast<T>(d.y);
                diffs[base + 2] = static_cast<T>(d.z);
            }
        }
        auto offsets = TensorT<T>::leaf({n * k_feat_, 3}, std::move(diffs));
        auto edge = concat_cols(offsets, gather_rows(features, std::move(idx)));
        auto pooled = group_max(relu(head_edge_(edge)), n);
        return head_out_(relu(head_mid_(pooled)));
    }

    // Displacement toward a more uniform arrangement; the neighbor graph is
    // rebuilt on the given positions every call.
    TensorT<T> uninet_refine(const std::vector<Vec3>& positions) const {
        const int n = static_cast<int>(positions.size());
        if (n < k_uninet_ + 1)
            throw std::invalid_argument("uninet_refine: fewer than k_uninet+1 points");
        auto idx = knn_table(positions, k_uninet_, /*exclude_self=*/true);
        auto f = relu(entry_(positions_tensor(positions)));
        for (const auto& conv : refine_convs_) f = conv(f, idx, k_uninet_);
        return exit_out_(relu(exit_hidden_(f)));
    }

private:
    static TensorT<T> positions_tensor(const std::vector<Vec3>& points) {
        std::vector<T> values(points.size() * 3);
        for (size_t i = 0; i < points.size(); ++i) {
            values[i * 3] = static_cast<T>(points[i].x);
            values[i * 3 + 1] = static_cast<T>(points[i].y);
            values[i * 3 + 2] = static_cast<T>(points[i].z);
        }
        return TensorT<T>::leaf({static_cast<int>(points.size()), 3}, std::move(values));
    }

    int k_feat_ = 16, k_uninet_ = 8, l_uninet_ = 2;
    ParamStoreT<T> backbone_, uninet_;
    DenseEdgeConvT<T> conv1_, conv2_;
    LinearT<T> head_edge_, head_mid_, head_out_;
    LinearT<T> entry_;
    std::vector<DenseEdgeConvT<T>> refine_convs_;
    LinearT<T> exit_hidden_, exit_out_;
};

using DenoiserModel = DenoiserModelT<float>;

// Adds a tensor's rows into double-precision state, checking finiteness.
// Returns false on any non-finite value.
template <typename T>
bool accumulate_displacement(std::vector<Vec3>& state, const TensorT<T>& delta,
                             double factor) {
    const auto& v = delta.values();
    for (size_t i = 0; i < state.size(); ++i) {
        const double dx = static_cast<double>(v[i * 3]);
        const double dy = static_cast<double>(v[i * 3 + 1]);
        const double dz = static_cast<double>(v[i * 3 + 2]);
        if (!std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(dz)) return false;
        state[i].x += factor * dx;
        state[i].y += factor * dy;
        state[i].z += factor * dz;
    }
    return true;
}

// The interleaved iteration: gradient ascent every step, uniformity
// refinement from t_act on. State stays in double; a zero model is an exact
// fixed point.
template <typename T>
PointCloud denoise_patch(const Patch& patch, const DenoiserModelT<T>& model,
                         const DenoiseSchedule& schedule) {
    schedule.validate();
    NoGradGuard ng;
    const std::vector<Vec3>& noisy = patch.cloud.points;
    auto features = model.extract_features(noisy);
    std::vector<Vec3> state = noisy;
    for (int t = 0; t < schedule.T; ++t) {
        auto gradient = model.estimate_gradient(state, noisy, features);
        if (!accumulate_displacement(state, gradient, schedule.step(t)))
            throw numeric_failure("denoise_patch: NaN at iteration " + std::to_string(t));
        if (t >= schedule.t_act) {
            auto displacement = model.uninet_refine(state);
            const double factor = schedule.scale_uninet ? schedule.step(t) : 1.0;
            if (!accumulate_displacement(state, displacement, factor))
                throw numeric_failure("denoise_patch: NaN at iteration " + std::to_string(t));
        }
    }
    PointCloud out;
    out.points = std::move(state);
    out.source_index = patch.cloud.source_index;
    return out;
}

// Patch-wise denoising of a full cloud: extract, denoise, stitch. Output has
// the input's point count and index correspondence.
template <typename T>
PointCloud denoise_cloud(const PointCloud& cloud, const DenoiserModelT<T>& model,
                         const DenoiseSchedule& schedule, int patch_size = 1000,
                         double coverage_factor = 3.0) {
    auto patches = extract_patches(cloud, patch_size, coverage_factor);
    for (auto& patch : patches) {
        PointCloud denoised = denoise_patch(patch, model, schedule);
        patch.cloud.points = std::move(denoised.points);
    }
    return merge_patches(cloud, patches);
}

// Model checkpointing: parameters of both stores plus the architecture
// sizes, so a checkpoint reconstructs the network without a config, and the
// Adam state of both stores, so a restarted run continues the step counter.
void save_model(const std::string& path, const DenoiserModel& model);
DenoiserModel load_model(const std::string& path);

// Restores Adam state from a model checkpoint; false when the file carries
// none (older or hand-built checkpoints).
bool load_optimizer(const std::string& path, DenoiserModel& model);

}  // namespace gpcd
