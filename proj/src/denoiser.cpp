#include "gpcd/denoiser.hpp"

namespace gpcd {

std::vector<int> knn_table(const std::vector<Vec3>& points, int k, bool exclude_self) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("knn_table: k must be positive");
    if (n < (exclude_self ? k + 1 : k))
        throw std::invalid_argument("knn_table: not enough points for k neighbors");
    KdTree tree(points);
    std::vector<int> table(static_cast<size_t>(n) * k);
    std::vector<int> idx;
    std::vector<double> dist;
    for (int i = 0; i < n; ++i) {
        tree.knn(points[i], k, exclude_self ? i : -1, idx, dist);
        std::copy(idx.begin(), idx.end(), table.begin() + static_cast<size_t>(i) * k);
    }
    return table;
}

namespace {
constexpr const char* kArchKfeat = "arch.k_feat";
constexpr const char* kArchKuninet = "arch.k_uninet";
constexpr const char* kArchLuninet = "arch.l_uninet";

int arch_value(const Checkpoint& ckpt, const char* key, const std::string& path) {
    auto it = ckpt.find(key);
    if (it == ckpt.end() || it->second.values.size() != 1)
        throw io_error("model checkpoint missing " + std::string(key) + ": " + path);
    return static_cast<int>(it->second.values[0]);
}
}  // namespace

void save_model(const std::string& path, const DenoiserModel& model) {
    Checkpoint ckpt = snapshot_params(model.backbone(), "backbone.");
    for (auto& [name, tensor] : snapshot_params(model.uninet(), "uninet."))
        ckpt.emplace(name, std::move(tensor));
    ckpt.emplace(kArchKfeat, CheckpointTensor{{1}, {static_cast<float>(model.k_feat())}});
    ckpt.emplace(kArchKuninet, CheckpointTensor{{1}, {static_cast<float>(model.k_uninet())}});
    ckpt.emplace(kArchLuninet, CheckpointTensor{{1}, {static_cast<float>(model.l_uninet())}});
    append_optimizer_state(ckpt, model.backbone(), "optim.backbone.");
    append_optimizer_state(ckpt, model.uninet(), "optim.uninet.");
    save_checkpoint(path, ckpt);
}

DenoiserModel load_model(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    DenoiserModel model = DenoiserModel::create(
        /*init_seed=*/0, arch_value(ckpt, kArchKfeat, path),
        arch_value(ckpt, kArchKuninet, path), arch_value(ckpt, kArchLuninet, path));
    restore_params(model.backbone(), ckpt, "backbone.");
    restore_params(model.uninet(), ckpt, "uninet.");
    return model;
}

bool load_optimizer(const std::string& path, DenoiserModel& model) {
    const Checkpoint ckpt = load_checkpoint(path);
    const bool backbone = restore_optimizer_state(model.backbone(), ckpt, "optim.backbone.");
    const bool uninet = restore_optimizer_state(model.uninet(), ckpt, "optim.uninet.");
    return backbone || uninet;
}

}  // namespace gpcd
